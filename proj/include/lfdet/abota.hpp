#pragma once

// Anchor-based label assignment. YOLOv5-style matching lets one (anchor, cell)
// slot collect several ground truths; each such conflict is resolved by taking
// the two GTs with the largest CIoU against the slot's prediction and keeping
// the one with the lower cost L_cls + lambda * (1 - CIoU).

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "lfdet/box.hpp"
#include "lfdet/heads.hpp"

namespace lfdet {

inline constexpr double kDefaultLambda = 3.0;
inline constexpr double kDefaultAnchorT = 4.0;

struct GridSpec {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t stride = 0;

  bool operator==(const GridSpec&) const = default;
};

/// One detection level: its grid and the anchors (in pixels) attached to every cell.
struct AnchorLevel {
  GridSpec grid;
  std::vector<AnchorSize> anchors;

  bool operator==(const AnchorLevel&) const = default;
};

struct MatchCandidate {
  CellKey key;
  std::vector<std::size_t> gt_indices;  // ascending, duplicate-free

  bool conflict() const { return gt_indices.size() > 1; }
  bool operator==(const MatchCandidate&) const = default;
};

/// A GT matches anchor a when max(w/wa, wa/w, h/ha, ha/h) < anchor_t; it is then
/// placed in its center cell plus the nearer horizontal and nearer vertical
/// neighbor (ties go to the lower index; out-of-grid neighbors are dropped).
/// Result is sorted by CellKey. Throws InputError for a GT center outside the image.
std::vector<MatchCandidate> match_candidates(const std::vector<GroundTruth>& gts,
                                             const std::vector<AnchorLevel>& levels,
                                             double anchor_t = kDefaultAnchorT);

/// Sum over classes of binary cross-entropy against the one-hot GT class.
double classification_cost(const GroundTruth& gt, const Prediction& pred);

/// classification_cost + lambda * (1 - ciou(gt.box, pred.box)).
double assignment_cost(const GroundTruth& gt, const Prediction& pred,
                       double lambda = kDefaultLambda);

struct TopEntry {
  std::size_t gt_index = 0;
  double ciou = 0.0;
  double cost = 0.0;

  bool operator==(const TopEntry&) const = default;
};

struct AssignmentEntry {
  CellKey key;
  std::size_t gt_index = 0;
  double cost = 0.0;
  /// The (up to) two largest-CIoU GTs, in rank order.
  std::vector<TopEntry> top2;

  bool operator==(const AssignmentEntry&) const = default;
};

struct AssignmentResult {
  std::vector<AssignmentEntry> entries;  // sorted by key

  const AssignmentEntry* find(const CellKey& key) const;
  bool operator==(const AssignmentResult&) const = default;
};

/// Top-2 by CIoU (ties: lower index), then minimum cost (ties: lower index).
/// `ciou_of` and `cost_of` are called with GT indices.
AssignmentEntry resolve_top2(std::span<const std::size_t> gt_indices,
                             const std::function<double(std::size_t)>& ciou_of,
                             const std::function<double(std::size_t)>& cost_of);

AssignmentEntry abota_resolve(const MatchCandidate& candidate, const std::vector<GroundTruth>& gts,
                              const Prediction& pred, double lambda = kDefaultLambda);

/// match_candidates, then abota_resolve on every candidate (single-GT slots
/// resolve to their only GT). Every candidate slot needs a prediction.
AssignmentResult assign_scene(const std::vector<GroundTruth>& gts, const PredictionMap& predictions,
                              const std::vector<AnchorLevel>& levels,
                              double lambda = kDefaultLambda, double anchor_t = kDefaultAnchorT);

}  // namespace lfdet
