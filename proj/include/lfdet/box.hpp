#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <vector>

namespace lfdet {

/// Axis-aligned box in image pixels, center + extents. Extents are strictly positive.
class Box {
 public:
  /// Throws InputError for non-finite values or non-positive extents.
  Box(double cx, double cy, double w, double h);

  double cx() const { return cx_; }
  double cy() const { return cy_; }
  double w() const { return w_; }
  double h() const { return h_; }
  double x1() const { return cx_ - w_ / 2; }
  double x2() const { return cx_ + w_ / 2; }
  double y1() const { return cy_ - h_ / 2; }
  double y2() const { return cy_ + h_ / 2; }
  /// Area measured from the corners, so iou(a, a) is exactly 1.
  double area() const { return (x2() - x1()) * (y2() - y1()); }

  Box scaled(double s) const { return Box(cx_ * s, cy_ * s, w_ * s, h_ * s); }
  bool operator==(const Box&) const = default;

 private:
  double cx_, cy_, w_, h_;
};

struct GroundTruth {
  Box box;
  std::size_t class_id = 0;

  bool operator==(const GroundTruth&) const = default;
};

struct Prediction {
  Box box;
  std::vector<double> class_probs;
  double objectness = 0.0;

  /// Throws InputError when any probability leaves [0, 1].
  void validate() const;
  bool operator==(const Prediction&) const = default;
};

/// Location of one prediction slot: level, anchor, grid row, grid column.
struct CellKey {
  std::size_t level = 0;
  std::size_t anchor = 0;
  std::size_t row = 0;
  std::size_t col = 0;

  auto operator<=>(const CellKey&) const = default;
};

using PredictionMap = std::map<CellKey, Prediction>;

double iou(const Box& a, const Box& b);

/// IoU - rho^2 / c^2 - alpha * v, with v the arctan aspect-ratio term and
/// alpha = v / ((1 - IoU) + v) (taken as 0 when that denominator is 0).
double ciou(const Box& a, const Box& b);

}  // namespace lfdet
