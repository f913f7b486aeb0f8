#include "boxal/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "boxal/error.hpp"

namespace boxal {

namespace {

void require_valid(const BBox& b) {
  if (!b.valid()) {
    throw InvalidInput("degenerate box (" + std::to_string(b.x1) + ", " + std::to_string(b.y1) +
                       ", " + std::to_string(b.x2) + ", " + std::to_string(b.y2) + ")");
  }
}

void require_views(const AugmentedViews& v) {
  if (v.views.empty()) throw InvalidInput("augmented views: no augmentations applied");
}

// p log2(p / m) with the 0 log 0 = 0 convention.
double kl_term(double p, double m) { return p > 0.0 ? p * std::log2(p / m) : 0.0; }

}  // namespace

double iou(const BBox& a, const BBox& b) {
  require_valid(a);
  require_valid(b);
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double entropy(const ClassDistribution& d) {
  double h = 0.0;
  for (double p : d.probs()) {
    if (p > 0.0) h -= p * std::log2(p);
  }
  return std::max(h, 0.0);
}

double js_divergence(const ClassDistribution& p, const ClassDistribution& q) {
  if (p.size() != q.size()) {
    throw InvalidInput("JS divergence: dimension mismatch " + std::to_string(p.size()) +
                       " vs " + std::to_string(q.size()));
  }
  double js = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    js += 0.5 * kl_term(p[i], m) + 0.5 * kl_term(q[i], m);
  }
  return std::clamp(js, 0.0, 1.0);
}

double consistency_bound(double beta) { return std::max(beta, 2.0 - beta); }

double pairwise_term(double s_b, double s_bm, double js, double overlap, double beta) {
  return std::abs(0.5 * (s_b + s_bm) * (1.0 - js) + overlap - beta);
}

double pairwise_term(const Detection& b, const std::optional<Detection>& bm, double beta) {
  if (!bm) return pairwise_term(b.confidence, 0.0, 1.0, 0.0, beta);
  return pairwise_term(b.confidence, bm->confidence, js_divergence(b.dist, bm->dist),
                       iou(b.box, bm->box), beta);
}

double consistency(const AugmentedViews& v, double beta) {
  require_views(v);
  double sum = 0.0;
  for (const auto& view : v.views) sum += pairwise_term(v.origin, view, beta);
  // The mean of terms at the bound can round one ulp past it.
  return std::min(sum / static_cast<double>(v.views.size()), consistency_bound(beta));
}

double uncertainty(const AugmentedViews& v, double beta) {
  return consistency_bound(beta) - consistency(v, beta);
}

double box_consistency(const AugmentedViews& v) {
  require_views(v);
  double sum = 0.0;
  for (const auto& view : v.views) {
    if (view) sum += iou(v.origin.box, view->box);
  }
  return std::min(sum / static_cast<double>(v.views.size()), 1.0);
}

std::vector<int> max_weight_matching(const std::vector<std::vector<double>>& weights,
                                     double min_weight) {
  const std::size_t rows = weights.size();
  std::size_t cols = 0;
  for (const auto& r : weights) cols = std::max(cols, r.size());
  std::vector<int> match(rows, -1);
  if (rows == 0 || cols == 0) return match;

  // Hungarian algorithm (shortest augmenting paths with potentials) on a
  // square cost matrix. Inadmissible or padded cells cost 0, i.e. "unmatched".
  const std::size_t n = std::max(rows, cols);
  auto cost = [&](std::size_t i, std::size_t j) {
    if (i >= rows || j >= weights[i].size()) return 0.0;
    const double w = weights[i][j];
    return w >= min_weight ? -w : 0.0;
  };
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t i = p[j] - 1;
    const std::size_t c = j - 1;
    if (i < rows && c < weights[i].size() && weights[i][c] >= min_weight) {
      match[i] = static_cast<int>(c);
    }
  }
  return match;
}

std::vector<AugmentedViews> match_views(std::span<const Detection> origin_dets,
                                        std::span<const std::vector<Detection>> aug_dets) {
  std::vector<AugmentedViews> out(origin_dets.size());
  for (std::size_t i = 0; i < origin_dets.size(); ++i) {
    out[i].origin = origin_dets[i];
    out[i].views.assign(aug_dets.size(), std::nullopt);
  }
  for (std::size_t m = 0; m < aug_dets.size(); ++m) {
    const auto& augs = aug_dets[m];
    std::vector<std::vector<double>> table(origin_dets.size(),
                                           std::vector<double>(augs.size(), 0.0));
    for (std::size_t i = 0; i < origin_dets.size(); ++i) {
      for (std::size_t j = 0; j < augs.size(); ++j) {
        if (augs[j].image_id == origin_dets[i].image_id) {
          table[i][j] = iou(origin_dets[i].box, augs[j].box);
        }
      }
    }
    const auto match = max_weight_matching(table, kViewMatchIou);
    for (std::size_t i = 0; i < origin_dets.size(); ++i) {
      if (match[i] >= 0) out[i].views[m] = augs[static_cast<std::size_t>(match[i])];
    }
  }
  return out;
}

}  // namespace boxal
