#include "boxal/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "boxal/error.hpp"
#include "boxal/scoring.hpp"

namespace boxal {

namespace {

void require_finite(const TrainingSample& s) {
  for (double v : s.cls_logits) {
    if (!std::isfinite(v)) throw InvalidInput("non-finite classification logit");
  }
  for (double v : s.reg_pred) {
    if (!std::isfinite(v)) throw InvalidInput("non-finite regression output");
  }
}

void require_paired(std::span<const TrainingSample> samples,
                    std::span<const Assignment> assignments) {
  if (samples.size() != assignments.size()) {
    throw InvalidInput("loss: " + std::to_string(samples.size()) + " samples but " +
                       std::to_string(assignments.size()) + " assignments");
  }
}

std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

// Target class of a sample's classification term.
ClassIndex cls_target(const TrainingSample& s, const Assignment& a) {
  return a.role_cls == ClsRole::positive ? a.t_cls
                                         : static_cast<ClassIndex>(s.cls_logits.size() - 1);
}

// The three per-term normalizers; 0 marks an empty term.
struct Normalizers {
  double pos_cls = 0.0;
  double neg_cls = 0.0;
  double reg = 0.0;
  std::size_t n_pos = 0, n_neg = 0, n_reg = 0;
};

Normalizers normalizers(std::span<const Assignment> assignments, const LossOptions& opts) {
  Normalizers n;
  double mass_cls = 0.0;
  double mass_box = 0.0;
  for (const auto& a : assignments) {
    if (a.role_cls == ClsRole::positive) {
      ++n.n_pos;
      mass_cls += a.w_cls;
      if (a.role_reg) {
        ++n.n_reg;
        mass_box += a.w_box;
      }
    } else if (a.role_cls == ClsRole::negative) {
      ++n.n_neg;
    }
  }
  n.pos_cls = opts.weight_mass_normalization ? mass_cls : static_cast<double>(n.n_pos);
  n.neg_cls = static_cast<double>(n.n_neg);
  n.reg = opts.weight_mass_normalization ? mass_box : static_cast<double>(n.n_reg);
  return n;
}

double smooth_l1_grad(double d) {
  if (std::abs(d) < 1.0) return d;
  return d > 0.0 ? 1.0 : -1.0;
}

}  // namespace

BoxDeltas regression_deltas(const BBox& sample, const BBox& target) {
  if (!sample.valid() || !target.valid()) throw InvalidInput("regression deltas: degenerate box");
  return {(target.center_x() - sample.center_x()) / sample.width(),
          (target.center_y() - sample.center_y()) / sample.height(),
          std::log(target.width() / sample.width()),
          std::log(target.height() / sample.height())};
}

BBox decode_deltas(const BBox& sample, const BoxDeltas& d) {
  const double cx = sample.center_x() + d[0] * sample.width();
  const double cy = sample.center_y() + d[1] * sample.height();
  const double w = sample.width() * std::exp(d[2]);
  const double h = sample.height() * std::exp(d[3]);
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

std::vector<Assignment> assign(std::span<const TrainingSample> samples,
                               std::span<const PseudoLabel> labels, std::size_t num_classes,
                               double pos_iou, double neg_iou) {
  if (!(neg_iou >= 0.0 && neg_iou <= pos_iou && pos_iou <= 1.0)) {
    throw InvalidInput("assign: need 0 <= neg_iou <= pos_iou <= 1");
  }
  std::vector<Assignment> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    Assignment a;
    std::optional<std::size_t> best;
    double best_iou = 0.0;
    for (std::size_t j = 0; j < labels.size(); ++j) {
      const double o = iou(s.sample_box, labels[j].box);
      if (!best || o > best_iou) {
        best = j;
        best_iou = o;
      }
    }
    a.matched_iou = best_iou;
    if (best && best_iou >= pos_iou) {
      const PseudoLabel& l = labels[*best];
      a.role_cls = ClsRole::positive;
      a.t_cls = l.label;
      a.t_reg = regression_deltas(s.sample_box, l.box);
      a.w_cls = l.w_cls;
      a.w_box = l.w_box;
      a.role_reg = l.w_box > 0.0;
      a.matched_label = best;
    } else if (best_iou < neg_iou) {
      a.role_cls = ClsRole::negative;
      a.t_cls = static_cast<ClassIndex>(num_classes);
    } else {
      a.role_cls = ClsRole::ignored;
      a.t_cls = static_cast<ClassIndex>(num_classes);
    }
    out.push_back(a);
  }
  return out;
}

double softmax_cross_entropy(std::span<const double> logits, ClassIndex target) {
  if (logits.empty() || target < 0 || static_cast<std::size_t>(target) >= logits.size()) {
    throw InvalidInput("cross entropy: target out of range");
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  return mx + std::log(z) - logits[static_cast<std::size_t>(target)];
}

double smooth_l1(const BoxDeltas& pred, const BoxDeltas& target) {
  double sum = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const double d = std::abs(pred[i] - target[i]);
    sum += d < 1.0 ? 0.5 * d * d : d - 0.5;
  }
  return sum;
}

LossBreakdown weighted_loss(std::span<const TrainingSample> samples,
                            std::span<const Assignment> assignments, const LossOptions& opts) {
  require_paired(samples, assignments);
  LossBreakdown out;
  double pos = 0.0, neg = 0.0, reg = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const auto& a = assignments[i];
    require_finite(s);
    if (a.role_cls == ClsRole::positive) {
      pos += a.w_cls * softmax_cross_entropy(s.cls_logits, a.t_cls);
      if (a.role_reg) reg += a.w_box * smooth_l1(s.reg_pred, a.t_reg);
    } else if (a.role_cls == ClsRole::negative) {
      neg += softmax_cross_entropy(s.cls_logits, cls_target(s, a));
    }
  }
  const Normalizers n = normalizers(assignments, opts);
  out.num_pos_cls = n.n_pos;
  out.num_neg_cls = n.n_neg;
  out.num_pos_reg = n.n_reg;
  if (n.pos_cls > 0.0) out.pos_cls = pos / n.pos_cls;
  if (n.neg_cls > 0.0) out.neg_cls = neg / n.neg_cls;
  if (n.reg > 0.0) out.reg = reg / n.reg;
  out.total = out.pos_cls + out.neg_cls + out.reg;
  return out;
}

std::vector<SampleGradient> weighted_loss_gradient(std::span<const TrainingSample> samples,
                                                   std::span<const Assignment> assignments,
                                                   const LossOptions& opts) {
  require_paired(samples, assignments);
  const Normalizers n = normalizers(assignments, opts);
  std::vector<SampleGradient> grads(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const auto& a = assignments[i];
    require_finite(s);
    auto& g = grads[i];
    g.cls_logits.assign(s.cls_logits.size(), 0.0);

    double scale = 0.0;
    if (a.role_cls == ClsRole::positive && n.pos_cls > 0.0) scale = a.w_cls / n.pos_cls;
    if (a.role_cls == ClsRole::negative && n.neg_cls > 0.0) scale = 1.0 / n.neg_cls;
    if (scale != 0.0) {
      const auto p = softmax(s.cls_logits);
      const auto t = static_cast<std::size_t>(cls_target(s, a));
      for (std::size_t k = 0; k < p.size(); ++k) {
        g.cls_logits[k] = scale * (p[k] - (k == t ? 1.0 : 0.0));
      }
    }
    if (a.role_cls == ClsRole::positive && a.role_reg && n.reg > 0.0) {
      const double rs = a.w_box / n.reg;
      for (std::size_t k = 0; k < 4; ++k) {
        g.reg_pred[k] = rs * smooth_l1_grad(s.reg_pred[k] - a.t_reg[k]);
      }
    }
  }
  return grads;
}

std::vector<double> numeric_gradient(const std::function<double(std::span<const double>)>& fn,
                                     std::span<const double> x, double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 1e-2)) {
    throw InvalidInput("numeric gradient: epsilon must lie in (0, 1e-2]");
  }
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + epsilon;
    const double up = fn(probe);
    probe[i] = x[i] - epsilon;
    const double down = fn(probe);
    probe[i] = x[i];
    grad[i] = (up - down) / (2.0 * epsilon);
  }
  return grad;
}

}  // namespace boxal
