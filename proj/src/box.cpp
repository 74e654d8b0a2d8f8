#include "lfdet/box.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "lfdet/errors.hpp"

namespace lfdet {

Box::Box(double cx, double cy, double w, double h) : cx_(cx), cy_(cy), w_(w), h_(h) {
  if (!std::isfinite(cx) || !std::isfinite(cy) || !std::isfinite(w) || !std::isfinite(h))
    throw InputError("box has non-finite coordinates");
  if (!(w > 0.0) || !(h > 0.0))
    throw InputError("degenerate box: w=" + std::to_string(w) + " h=" + std::to_string(h));
}

void Prediction::validate() const {
  auto bad = [](double p) { return !(p >= 0.0 && p <= 1.0); };
  if (bad(objectness)) throw InputError("objectness outside [0,1]");
  for (double p : class_probs)
    if (bad(p)) throw InputError("class probability outside [0,1]: " + std::to_string(p));
}

namespace {

double intersection(const Box& a, const Box& b) {
  const double iw = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double ih = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

}  // namespace

double iou(const Box& a, const Box& b) {
  const double inter = intersection(a, b);
  return inter / (a.area() + b.area() - inter);
}

double ciou(const Box& a, const Box& b) {
  const double i = iou(a, b);
  const double dx = a.cx() - b.cx();
  const double dy = a.cy() - b.cy();
  const double rho2 = dx * dx + dy * dy;
  const double cw = std::max(a.x2(), b.x2()) - std::min(a.x1(), b.x1());
  const double ch = std::max(a.y2(), b.y2()) - std::min(a.y1(), b.y1());
  const double c2 = cw * cw + ch * ch;
  const double dt = std::atan(b.w() / b.h()) - std::atan(a.w() / a.h());
  const double v = 4.0 / (std::numbers::pi * std::numbers::pi) * dt * dt;
  const double denom = (1.0 - i) + v;
  const double alpha_v = denom > 0.0 ? v / denom * v : 0.0;
  return i - rho2 / c2 - alpha_v;
}

}  // namespace lfdet
