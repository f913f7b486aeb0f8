#include "boxal/pseudolabel.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "boxal/error.hpp"
#include "boxal/scoring.hpp"

namespace boxal {

namespace {

double branch_weight(double criterion, LabelSource source, double hi, double lo) {
  if (source == LabelSource::ground_truth || criterion >= hi) return 1.0;
  if (criterion <= lo) return 0.0;
  return criterion;
}

bool in_unit(double x) { return x >= 0.0 && x <= 1.0; }

}  // namespace

void Thresholds::validate() const {
  if (!in_unit(tau_cls_hi) || !in_unit(tau_cls_lo) || !in_unit(tau_box_hi) ||
      !in_unit(tau_box_lo)) {
    throw InvalidInput("pseudo-label thresholds must lie in [0,1]");
  }
  if (tau_cls_lo > tau_cls_hi || tau_box_lo > tau_box_hi) {
    throw InvalidInput("pseudo-label thresholds need lo <= hi");
  }
}

std::string_view to_string(PseudoMode mode) {
  switch (mode) {
    case PseudoMode::none: return "none";
    case PseudoMode::hard: return "hpl";
    case PseudoMode::task_hard: return "thpl";
    case PseudoMode::task_soft: return "tspl";
  }
  return "none";
}

PseudoMode pseudo_mode_from_string(std::string_view name) {
  if (name == "none") return PseudoMode::none;
  if (name == "hpl") return PseudoMode::hard;
  if (name == "thpl") return PseudoMode::task_hard;
  if (name == "tspl") return PseudoMode::task_soft;
  throw ConfigError("unknown pseudo-label mode '" + std::string(name) + "'");
}

SupervisionOptions supervision_options(PseudoMode mode, const Thresholds& base) {
  SupervisionOptions opts;
  opts.thresholds = base;
  switch (mode) {
    case PseudoMode::none:
      opts.emit_pseudo = false;
      break;
    case PseudoMode::hard:
      opts.thresholds.tau_cls_lo = base.tau_cls_hi;
      opts.box_follows_cls = true;
      break;
    case PseudoMode::task_hard:
      opts.thresholds.tau_cls_lo = base.tau_cls_hi;
      opts.thresholds.tau_box_lo = base.tau_box_hi;
      break;
    case PseudoMode::task_soft:
      break;
  }
  return opts;
}

double cls_weight(double confidence, LabelSource source, const Thresholds& t) {
  return branch_weight(confidence, source, t.tau_cls_hi, t.tau_cls_lo);
}

double box_weight(double cons, LabelSource source, const Thresholds& t) {
  return branch_weight(cons, source, t.tau_box_hi, t.tau_box_lo);
}

PseudoLabel make_gt_label(const GtLabel& gt) {
  PseudoLabel l;
  l.image_id = gt.image_id;
  l.box = gt.box;
  l.label = gt.label;
  l.confidence = 1.0;
  l.cons = 1.0;
  l.w_cls = 1.0;
  l.w_box = 1.0;
  l.source = LabelSource::ground_truth;
  return l;
}

std::vector<PseudoLabel> build_supervision(std::span<const Candidate> candidates,
                                           std::span<const GtLabel> gt,
                                           const SupervisionOptions& opts) {
  std::vector<PseudoLabel> out;
  out.reserve(gt.size() + candidates.size());
  for (const auto& g : gt) out.push_back(make_gt_label(g));
  if (!opts.emit_pseudo) return out;

  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return candidates[a].detection().confidence > candidates[b].detection().confidence;
  });

  for (std::size_t idx : order) {
    const Candidate& c = candidates[idx];
    const Detection& det = c.detection();
    const bool overlaps = std::any_of(out.begin(), out.end(), [&](const PseudoLabel& kept) {
      return iou(kept.box, det.box) >= kSupervisionOverlapIou;
    });
    if (overlaps) continue;

    PseudoLabel l;
    l.image_id = det.image_id;
    l.box = det.box;
    l.label = det.predicted_label;
    l.confidence = det.confidence;
    l.cons = box_consistency(c.views);
    l.source = LabelSource::pseudo;
    l.w_cls = cls_weight(l.confidence, l.source, opts.thresholds);
    l.w_box = opts.box_follows_cls ? l.w_cls : box_weight(l.cons, l.source, opts.thresholds);
    if (l.w_cls == 0.0 && l.w_box == 0.0) continue;
    out.push_back(l);
  }
  return out;
}

}  // namespace boxal
