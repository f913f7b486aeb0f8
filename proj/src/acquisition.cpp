#include "boxal/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "boxal/error.hpp"
#include "boxal/random.hpp"
#include "boxal/scoring.hpp"

namespace boxal {

namespace {

SelectionResult make_result(std::span<const Candidate> pool, std::vector<std::size_t> picks) {
  SelectionResult r;
  std::size_t num_classes = 0;
  for (const auto& c : pool) num_classes = std::max(num_classes, c.detection().dist.size());
  r.per_class_counts.assign(num_classes, 0);
  for (std::size_t idx : picks) {
    ++r.per_class_counts[static_cast<std::size_t>(pool[idx].detection().predicted_label)];
  }
  r.selected.reserve(picks.size());
  for (std::size_t idx : picks) r.selected.push_back(pool[idx].id);
  r.budget_spent = r.selected.size();
  return r;
}

// Pool positions of the `budget` largest keys, ties to the lower candidate id.
template <typename Key>
std::vector<std::size_t> top_by(std::span<const Candidate> pool, std::size_t budget, Key key) {
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t k = std::min(budget, pool.size());
  auto before = [&](std::size_t a, std::size_t b) {
    const double ka = key(pool[a]);
    const double kb = key(pool[b]);
    if (ka != kb) return ka > kb;
    return pool[a].id < pool[b].id;
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    before);
  order.resize(k);
  return order;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    d += diff * diff;
  }
  return d;
}

}  // namespace

void BalanceConfig::validate() const {
  if (!(sigma > 0.0)) throw InvalidInput("balance sigma must be positive");
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::random: return "random";
    case Strategy::entropy: return "entropy";
    case Strategy::coreset: return "coreset";
    case Strategy::uncertainty: return "uncertainty";
    case Strategy::balanced: return "balanced";
  }
  return "balanced";
}

Strategy strategy_from_string(std::string_view name) {
  if (name == "random") return Strategy::random;
  if (name == "entropy") return Strategy::entropy;
  if (name == "coreset") return Strategy::coreset;
  if (name == "uncertainty") return Strategy::uncertainty;
  if (name == "balanced") return Strategy::balanced;
  throw ConfigError("unknown strategy '" + std::string(name) + "'");
}

ClassDistribution estimate_class_distribution(std::span<const PseudoLabel> labels,
                                              std::size_t num_classes) {
  if (num_classes < 2) throw InvalidInput("class count must be at least 2");
  if (labels.empty()) return ClassDistribution::uniform(num_classes);
  std::vector<double> counts(num_classes, 0.0);
  for (const auto& l : labels) {
    if (l.label < 0 || static_cast<std::size_t>(l.label) >= num_classes) {
      throw InvalidInput("pseudo label class " + std::to_string(l.label) + " out of range");
    }
    counts[static_cast<std::size_t>(l.label)] += 1.0;
  }
  const double total = static_cast<double>(labels.size());
  for (double& c : counts) c /= total;
  return ClassDistribution(std::move(counts));
}

double acquisition_score(double u, ClassIndex predicted_label, const ClassDistribution& p,
                         const BalanceConfig& cfg) {
  if (!cfg.enabled) return u;
  return u * std::exp(-p[static_cast<std::size_t>(predicted_label)] / cfg.sigma);
}

std::vector<Candidate> filter_candidates(std::span<const AugmentedViews> detections,
                                         std::span<const GtLabel> labelled_gt, double tau_cand,
                                         std::size_t first_id) {
  std::vector<Candidate> out;
  std::size_t next_id = first_id;
  for (const auto& v : detections) {
    const Detection& det = v.origin;
    if (!(det.confidence > tau_cand)) continue;
    const bool known = std::any_of(labelled_gt.begin(), labelled_gt.end(), [&](const GtLabel& g) {
      return g.image_id == det.image_id && iou(g.box, det.box) >= kCandidateGtIou;
    });
    if (known) continue;
    Candidate c;
    c.id = next_id++;
    c.views = v;
    out.push_back(std::move(c));
  }
  return out;
}

void score_candidates(std::span<Candidate> pool, const ClassDistribution& prior,
                      const BalanceConfig& cfg, double beta) {
  for (auto& c : pool) {
    c.uncertainty = uncertainty(c.views, beta);
    c.acquisition = acquisition_score(c.uncertainty, c.detection().predicted_label, prior, cfg);
  }
}

SelectionResult select_top_k(std::span<const Candidate> pool, std::size_t budget) {
  return make_result(pool, top_by(pool, budget, [](const Candidate& c) { return c.acquisition; }));
}

SelectionResult strategy_entropy(std::span<const Candidate> pool, std::size_t budget) {
  return make_result(
      pool, top_by(pool, budget, [](const Candidate& c) { return entropy(c.detection().dist); }));
}

SelectionResult strategy_random(std::span<const Candidate> pool, std::size_t budget,
                                std::uint64_t seed) {
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t k = std::min(budget, pool.size());
  SimRng rng(seed);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.uniform_index(order.size() - i);
    std::swap(order[i], order[j]);
  }
  order.resize(k);
  return make_result(pool, std::move(order));
}

SelectionResult strategy_coreset(std::span<const Candidate> pool,
                                 std::span<const std::vector<double>> features,
                                 std::span<const std::vector<double>> labelled_features,
                                 std::size_t budget) {
  if (features.size() != pool.size()) {
    throw InvalidInput("coreset: one feature vector per candidate required");
  }
  const std::size_t dim = features.empty() ? 0 : features.front().size();
  if (!pool.empty() && dim == 0) throw InvalidInput("coreset: empty feature vectors");
  for (const auto& f : features) {
    if (f.size() != dim) throw InvalidInput("coreset: ragged feature vectors");
  }
  for (const auto& f : labelled_features) {
    if (f.size() != dim) throw InvalidInput("coreset: labelled feature dimension mismatch");
  }

  constexpr double kInf = std::numeric_limits<double>::infinity();
  // Squared distance from every pool point to its nearest center.
  std::vector<double> nearest(pool.size(), kInf);
  for (const auto& center : labelled_features) {
    for (std::size_t i = 0; i < pool.size(); ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(features[i], center));
    }
  }

  std::vector<bool> taken(pool.size(), false);
  std::vector<std::size_t> picks;
  const std::size_t k = std::min(budget, pool.size());
  picks.reserve(k);
  while (picks.size() < k) {
    std::size_t best = pool.size();
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (taken[i]) continue;
      if (best == pool.size() || nearest[i] > nearest[best] ||
          (nearest[i] == nearest[best] && pool[i].id < pool[best].id)) {
        best = i;
      }
    }
    taken[best] = true;
    picks.push_back(best);
    for (std::size_t i = 0; i < pool.size(); ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(features[i], features[best]));
    }
  }
  return make_result(pool, std::move(picks));
}

}  // namespace boxal
