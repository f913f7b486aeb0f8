#pragma once

#include <optional>
#include <span>
#include <vector>

#include "boxal/types.hpp"

namespace boxal {

inline constexpr double kDefaultBeta = 1.3;
inline constexpr double kViewMatchIou = 0.5;

// Intersection over union. Throws InvalidInput for a degenerate box.
double iou(const BBox& a, const BBox& b);

// Shannon entropy in bits; 0 log 0 = 0.
double entropy(const ClassDistribution& d);

// Jensen-Shannon divergence in bits, so the value lies in [0, 1].
double js_divergence(const ClassDistribution& p, const ClassDistribution& q);

// Upper bound of the consistency score: max(beta, 2 - beta).
double consistency_bound(double beta);

// |0.5 (s_b + s_bm)(1 - js) + iou - beta| from its already-computed parts.
double pairwise_term(double s_b, double s_bm, double js, double overlap, double beta);

// Per-view disagreement between a detection and its augmented counterpart.
// An absent counterpart scores as total disagreement (s_bm = 0, JS = 1, IoU = 0).
double pairwise_term(const Detection& b, const std::optional<Detection>& bm, double beta);

// Mean pairwise term over every augmentation. Throws for zero augmentations.
double consistency(const AugmentedViews& v, double beta);

// consistency_bound(beta) - consistency(v, beta).
double uncertainty(const AugmentedViews& v, double beta);

// Mean IoU between the origin box and each view; absent views count as 0.
double box_consistency(const AugmentedViews& v);

// Pairs each origin detection with at most one detection per augmentation.
// Within an augmentation the pairing is the one-to-one matching of maximum
// total IoU over pairs with IoU >= kViewMatchIou.
std::vector<AugmentedViews> match_views(std::span<const Detection> origin_dets,
                                        std::span<const std::vector<Detection>> aug_dets);

// Maximum-total-weight one-to-one matching on a rows x cols weight table.
// Entries below `min_weight` are not admissible. Returns, for every row, the
// matched column or -1.
std::vector<int> max_weight_matching(const std::vector<std::vector<double>>& weights,
                                     double min_weight);

}  // namespace boxal
