#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "boxal/types.hpp"

namespace boxal {

struct BalanceConfig {
  double sigma = 1.0;
  bool enabled = true;

  void validate() const;
};

struct SelectionResult {
  std::vector<std::size_t> selected;  // candidate ids, in selection order
  std::size_t budget_spent = 0;
  std::vector<std::size_t> per_class_counts;  // by predicted label
};

enum class Strategy { random, entropy, coreset, uncertainty, balanced };

std::string_view to_string(Strategy s);
// Throws ConfigError on an unknown identifier.
Strategy strategy_from_string(std::string_view name);

inline constexpr double kDefaultTauCand = 0.05;
inline constexpr double kCandidateGtIou = 0.5;

// Class frequencies of the given labels; uniform when there are none.
ClassDistribution estimate_class_distribution(std::span<const PseudoLabel> labels,
                                              std::size_t num_classes);

// u * exp(-p(label) / sigma), or u unchanged when balancing is disabled.
double acquisition_score(double u, ClassIndex predicted_label, const ClassDistribution& p,
                         const BalanceConfig& cfg);

// Detections scoring above tau_cand that do not overlap (IoU >= 0.5) any
// labelled GT box of their image. Candidate ids are assigned consecutively
// from `first_id`; uncertainty and acquisition are left at zero.
std::vector<Candidate> filter_candidates(std::span<const AugmentedViews> detections,
                                         std::span<const GtLabel> labelled_gt, double tau_cand,
                                         std::size_t first_id = 0);

// Fills uncertainty and acquisition of every candidate.
void score_candidates(std::span<Candidate> pool, const ClassDistribution& prior,
                      const BalanceConfig& cfg, double beta);

// The `budget` candidates with the largest acquisition score, ties to the
// lower id.
SelectionResult select_top_k(std::span<const Candidate> pool, std::size_t budget);

SelectionResult strategy_entropy(std::span<const Candidate> pool, std::size_t budget);
SelectionResult strategy_random(std::span<const Candidate> pool, std::size_t budget,
                                std::uint64_t seed);

// k-center greedy over `features` (one row per pool entry). The first pick is
// the point farthest from `labelled_features`; with no labelled features it is
// the pool entry with the lowest id.
SelectionResult strategy_coreset(std::span<const Candidate> pool,
                                 std::span<const std::vector<double>> features,
                                 std::span<const std::vector<double>> labelled_features,
                                 std::size_t budget);

}  // namespace boxal
