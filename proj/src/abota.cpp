#include "lfdet/abota.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "lfdet/errors.hpp"

namespace lfdet {

std::vector<MatchCandidate> match_candidates(const std::vector<GroundTruth>& gts,
                                             const std::vector<AnchorLevel>& levels,
                                             double anchor_t) {
  if (!(anchor_t > 1.0)) throw ConfigError("anchor_t must exceed 1");
  std::map<CellKey, std::vector<std::size_t>> slots;
  for (std::size_t lv = 0; lv < levels.size(); ++lv) {
    const GridSpec& g = levels[lv].grid;
    if (!g.rows || !g.cols || !g.stride) throw ConfigError("grid extents must be positive");
    const double s = static_cast<double>(g.stride);
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
      const Box& b = gts[gi].box;
      if (b.cx() < 0 || b.cy() < 0 || b.cx() >= static_cast<double>(g.cols) * s ||
          b.cy() >= static_cast<double>(g.rows) * s)
        throw InputError("ground truth " + std::to_string(gi) + " center lies outside the image");
      const double gx = b.cx() / s, gy = b.cy() / s;
      const auto col = static_cast<std::int64_t>(std::floor(gx));
      const auto row = static_cast<std::int64_t>(std::floor(gy));
      const std::int64_t ncol = gx - static_cast<double>(col) <= 0.5 ? col - 1 : col + 1;
      const std::int64_t nrow = gy - static_cast<double>(row) <= 0.5 ? row - 1 : row + 1;
      const std::pair<std::int64_t, std::int64_t> cells[] = {{row, col}, {row, ncol}, {nrow, col}};

      for (std::size_t a = 0; a < levels[lv].anchors.size(); ++a) {
        const AnchorSize& an = levels[lv].anchors[a];
        const double rw = b.w() / an.w, rh = b.h() / an.h;
        if (std::max({rw, 1.0 / rw, rh, 1.0 / rh}) >= anchor_t) continue;
        for (auto [r, c] : cells) {
          if (r < 0 || c < 0 || r >= static_cast<std::int64_t>(g.rows) ||
              c >= static_cast<std::int64_t>(g.cols))
            continue;
          slots[{lv, a, static_cast<std::size_t>(r), static_cast<std::size_t>(c)}].push_back(gi);
        }
      }
    }
  }
  std::vector<MatchCandidate> out;
  out.reserve(slots.size());
  for (auto& [key, idx] : slots) out.push_back({key, std::move(idx)});
  return out;
}

double classification_cost(const GroundTruth& gt, const Prediction& pred) {
  pred.validate();
  if (gt.class_id >= pred.class_probs.size())
    throw InputError("ground truth class " + std::to_string(gt.class_id) + " outside " +
                     std::to_string(pred.class_probs.size()) + " predicted classes");
  constexpr double kFloor = 1e-16;
  double total = 0.0;
  for (std::size_t c = 0; c < pred.class_probs.size(); ++c) {
    const double p = pred.class_probs[c];
    total -= c == gt.class_id ? std::log(std::max(p, kFloor)) : std::log(std::max(1.0 - p, kFloor));
  }
  return total;
}

double assignment_cost(const GroundTruth& gt, const Prediction& pred, double lambda) {
  if (!(lambda >= 0.0)) throw InputError("lambda must be non-negative");
  return classification_cost(gt, pred) + lambda * (1.0 - ciou(gt.box, pred.box));
}

const AssignmentEntry* AssignmentResult::find(const CellKey& key) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), key,
                             [](const AssignmentEntry& e, const CellKey& k) { return e.key < k; });
  return it != entries.end() && it->key == key ? &*it : nullptr;
}

AssignmentEntry resolve_top2(std::span<const std::size_t> gt_indices,
                             const std::function<double(std::size_t)>& ciou_of,
                             const std::function<double(std::size_t)>& cost_of) {
  if (gt_indices.empty()) throw ContractError("abota: candidate has no matched ground truth");
  std::vector<TopEntry> ranked;
  ranked.reserve(gt_indices.size());
  for (std::size_t gi : gt_indices) ranked.push_back({gi, ciou_of(gi), 0.0});
  const std::size_t k = std::min<std::size_t>(2, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k), ranked.end(),
                    [](const TopEntry& a, const TopEntry& b) {
                      return a.ciou != b.ciou ? a.ciou > b.ciou : a.gt_index < b.gt_index;
                    });
  ranked.resize(k);

  AssignmentEntry e;
  const TopEntry* best = nullptr;
  for (TopEntry& t : ranked) {
    t.cost = cost_of(t.gt_index);
    if (!best || t.cost < best->cost || (t.cost == best->cost && t.gt_index < best->gt_index))
      best = &t;
  }
  e.gt_index = best->gt_index;
  e.cost = best->cost;
  e.top2 = std::move(ranked);
  return e;
}

AssignmentEntry abota_resolve(const MatchCandidate& candidate, const std::vector<GroundTruth>& gts,
                              const Prediction& pred, double lambda) {
  for (std::size_t gi : candidate.gt_indices)
    if (gi >= gts.size()) throw ContractError("abota: ground truth index out of range");
  AssignmentEntry e = resolve_top2(
      candidate.gt_indices, [&](std::size_t gi) { return ciou(gts[gi].box, pred.box); },
      [&](std::size_t gi) { return assignment_cost(gts[gi], pred, lambda); });
  e.key = candidate.key;
  return e;
}

AssignmentResult assign_scene(const std::vector<GroundTruth>& gts, const PredictionMap& predictions,
                              const std::vector<AnchorLevel>& levels, double lambda,
                              double anchor_t) {
  AssignmentResult result;
  for (const MatchCandidate& cand : match_candidates(gts, levels, anchor_t)) {
    auto it = predictions.find(cand.key);
    if (it == predictions.end())
      throw InputError("no prediction for level " + std::to_string(cand.key.level) + " anchor " +
                       std::to_string(cand.key.anchor) + " cell (" +
                       std::to_string(cand.key.row) + "," + std::to_string(cand.key.col) + ")");
    result.entries.push_back(abota_resolve(cand, gts, it->second, lambda));
  }
  return result;
}

}  // namespace lfdet
