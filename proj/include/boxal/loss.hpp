#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "boxal/types.hpp"

namespace boxal {

using BoxDeltas = std::array<double, 4>;

// An anchor or proposal with its head outputs. cls_logits has K + 1 entries,
// the last one being background.
struct TrainingSample {
  BBox sample_box;
  std::vector<double> cls_logits;
  BoxDeltas reg_pred{};
};

enum class ClsRole { positive, negative, ignored };

struct Assignment {
  ClsRole role_cls = ClsRole::negative;
  bool role_reg = false;
  ClassIndex t_cls = 0;  // K means background
  BoxDeltas t_reg{};
  double w_cls = 1.0;
  double w_box = 1.0;
  std::optional<std::size_t> matched_label;  // index into the label list
  double matched_iou = 0.0;
};

struct LossBreakdown {
  double pos_cls = 0.0;
  double neg_cls = 0.0;
  double reg = 0.0;
  double total = 0.0;
  std::size_t num_pos_cls = 0;
  std::size_t num_neg_cls = 0;
  std::size_t num_pos_reg = 0;
};

struct LossOptions {
  // Normalize the positive terms by the summed weights instead of the
  // sample counts.
  bool weight_mass_normalization = false;
};

struct SampleGradient {
  std::vector<double> cls_logits;
  BoxDeltas reg_pred{};
};

inline constexpr double kDefaultPosIou = 0.5;
inline constexpr double kDefaultNegIou = 0.4;

// (dx, dy, dw, dh) taking `sample` onto `target`.
BoxDeltas regression_deltas(const BBox& sample, const BBox& target);
BBox decode_deltas(const BBox& sample, const BoxDeltas& deltas);

// Matches each sample to its highest-IoU label (ties to the lower index).
// IoU >= pos_iou: positive, inheriting the label's class and weights, with a
// regression role when the label's box weight is non-zero. IoU < neg_iou:
// background. Otherwise ignored.
std::vector<Assignment> assign(std::span<const TrainingSample> samples,
                               std::span<const PseudoLabel> labels, std::size_t num_classes,
                               double pos_iou = kDefaultPosIou, double neg_iou = kDefaultNegIou);

double softmax_cross_entropy(std::span<const double> logits, ClassIndex target);
double smooth_l1(const BoxDeltas& pred, const BoxDeltas& target);

// Weighted sum of the positive classification, negative classification and
// regression terms, each normalized by its own set size. Empty sets add 0.
LossBreakdown weighted_loss(std::span<const TrainingSample> samples,
                            std::span<const Assignment> assignments,
                            const LossOptions& opts = {});

// Analytic d(total)/d(cls_logits, reg_pred) for every sample.
std::vector<SampleGradient> weighted_loss_gradient(std::span<const TrainingSample> samples,
                                                   std::span<const Assignment> assignments,
                                                   const LossOptions& opts = {});

// Central finite differences of `fn` at `x`; epsilon must lie in (0, 1e-2].
std::vector<double> numeric_gradient(const std::function<double(std::span<const double>)>& fn,
                                     std::span<const double> x, double epsilon);

}  // namespace boxal
