#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "boxal/types.hpp"

namespace boxal {

// Two-sided reliability thresholds for the classification (confidence) and
// localization (box consistency) branches. lo == hi gives a hard threshold.
struct Thresholds {
  double tau_cls_hi = 0.8;
  double tau_cls_lo = 0.1;
  double tau_box_hi = 0.7;
  double tau_box_lo = 0.3;

  // Throws InvalidInput unless every value is in [0,1] and lo <= hi.
  void validate() const;
};

// Training-time pseudo-labelling variants.
//   none  - GT only; unlabelled regions are background
//   hard  - confidence >= tau_cls_hi, box weight follows class weight
//   task_hard - separate hard thresholds for each branch
//   task_soft - soft weights between the lo/hi thresholds
enum class PseudoMode { none, hard, task_hard, task_soft };

std::string_view to_string(PseudoMode mode);
PseudoMode pseudo_mode_from_string(std::string_view name);

struct SupervisionOptions {
  Thresholds thresholds;
  // w_box := w_cls, i.e. no separate localization criterion.
  bool box_follows_cls = false;
  // false: GT boxes only.
  bool emit_pseudo = true;
};

// Thresholds/options realising `mode` from the soft thresholds `base`.
SupervisionOptions supervision_options(PseudoMode mode, const Thresholds& base);

// Classification weight of a box: 1 for GT or confidence >= hi, the
// confidence itself strictly between lo and hi, 0 at or below lo.
double cls_weight(double confidence, LabelSource source, const Thresholds& t);

// Localization weight, same shape as cls_weight on the box consistency score.
double box_weight(double cons, LabelSource source, const Thresholds& t);

PseudoLabel make_gt_label(const GtLabel& gt);

// Supervision set for one image: every GT box with unit weights, then the
// candidates in descending confidence, skipping any that overlap (IoU >= 0.5)
// a GT box or an already-kept pseudo box, and dropping those whose weights
// are both zero.
std::vector<PseudoLabel> build_supervision(std::span<const Candidate> candidates,
                                           std::span<const GtLabel> gt,
                                           const SupervisionOptions& opts);

inline constexpr double kSupervisionOverlapIou = 0.5;

}  // namespace boxal
