#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "boxal/config.hpp"
#include "boxal/random.hpp"
#include "boxal/types.hpp"

namespace boxal {

struct Object {
  std::int64_t id = 0;
  BBox box;
  ClassIndex label = 0;
};

struct Image {
  ImageId id = 0;
  double width = 0.0;
  double height = 0.0;
  std::vector<Object> objects;
};

struct Dataset {
  std::size_t num_classes = 0;
  std::vector<std::string> class_names;
  std::vector<Image> images;

  std::size_t num_objects() const;
  std::vector<std::size_t> class_counts() const;
};

// Expected class frequencies of the geometric long tail: p_c proportional to
// imbalance_factor^(-c / (K - 1)).
std::vector<double> long_tail_frequencies(std::size_t num_classes, double imbalance_factor);

Dataset generate_dataset(const DatasetConfig& cfg);

double skill_from_count(double effective_count, double kappa);

struct DetectorSkill {
  std::vector<double> per_class;

  static DetectorSkill from_counts(std::span<const double> effective_counts, double kappa);
  std::size_t num_classes() const { return per_class.size(); }
};

// Detections of the surrogate detector on one image, each with `num_views`
// augmented counterparts matched back to it.
std::vector<AugmentedViews> simulate_detections(const Image& image, const DetectorSkill& skill,
                                                const DetectorParams& params,
                                                std::size_t num_views, std::uint64_t seed);

struct ImbalanceStats {
  double factor = 1.0;  // max / min over classes with a non-zero count
  std::size_t zero_classes = 0;
};

// Throws InvalidInput when every count is zero.
ImbalanceStats imbalance_factor(std::span<const std::size_t> counts);

struct LedgerEntry {
  int cycle = 0;
  std::size_t boxes_spent = 0;

  friend bool operator==(const LedgerEntry&, const LedgerEntry&) = default;
};

struct ALState {
  int cycle = 0;  // completed AL cycles
  std::uint64_t seed = 0;
  std::vector<std::vector<GtLabel>> labelled;       // per image index
  std::vector<std::vector<std::int64_t>> pool;      // unlabelled object ids per image index
  std::size_t initial_boxes = 0;                    // cost of the initial pool, not in the ledger
  std::vector<LedgerEntry> budget_ledger;
  std::vector<std::size_t> per_class_labelled;
  std::vector<double> model_counts;  // effective per-class training counts of the surrogate

  std::size_t total_labelled() const;
  std::size_t total_spent() const;

  friend bool operator==(const ALState&, const ALState&) = default;
};

struct AnnotationSummary {
  std::size_t spent = 0;
  std::size_t labelled = 0;
  std::size_t wasted = 0;  // selected boxes with no unlabelled object under them
  std::vector<std::size_t> labelled_hist;
};

// Sends selected candidates, in selection order, to the oracle until `budget`
// units are spent. A selection that overlaps (IoU >= 0.5) an unlabelled object
// labels it; otherwise the unit is wasted, and only consumes budget when
// `fp_consumes_budget` is set. Throws std::logic_error when a selection lands
// on an object labelled before this call.
AnnotationSummary annotate(const Dataset& dataset, std::span<const Candidate> pool,
                           const SelectionResult& selected, std::size_t budget,
                           bool fp_consumes_budget, ALState& state);

struct CycleReport {
  int cycle = 0;
  std::string strategy;
  std::uint64_t seed = 0;
  std::size_t budget_spent = 0;
  std::vector<std::size_t> selected_hist;
  std::vector<std::size_t> pseudo_hist;
  std::vector<std::size_t> labelled_hist;
  std::optional<ImbalanceStats> imbalance_selected;
  std::optional<ImbalanceStats> imbalance_pseudo;
  std::optional<ImbalanceStats> imbalance_labelled;
  std::vector<double> pseudo_precision;
  std::vector<double> pseudo_recall;
  std::vector<double> per_class_f1;
  double detection_quality = 0.0;
};

// Per-class F1 of the surrogate at `skill` on `eval`, counting detections with
// confidence >= score_threshold.
std::vector<double> evaluate_detector(const Dataset& eval, const DetectorSkill& skill,
                                      const DetectorParams& params, double score_threshold,
                                      std::uint64_t seed);

double mean_f1(std::span<const double> per_class_f1);

// One seeded run of the AL loop over a generated dataset.
class Experiment {
 public:
  Experiment(ExperimentConfig cfg, std::uint64_t seed);
  // Runs on a supplied dataset instead of generating one.
  Experiment(ExperimentConfig cfg, std::uint64_t seed, Dataset dataset);

  const ExperimentConfig& config() const { return cfg_; }
  const Dataset& dataset() const { return dataset_; }
  const Dataset& eval_dataset() const { return eval_; }
  std::uint64_t seed() const { return seed_; }

  // Random initial pool of fully labelled images, surrogate trained on it.
  ALState initial_state() const;
  // Class histogram of the initial pool's GT labels.
  std::vector<std::size_t> initial_hist(const ALState& initial) const;

  struct CycleResult {
    ALState state;
    CycleReport report;
  };
  // One AL cycle: detect, filter, score, estimate the prior, select, annotate,
  // rebuild supervision, retrain the surrogate and evaluate it.
  CycleResult run_cycle(const ALState& state) const;

  bool finished(const ALState& state) const;
  std::vector<CycleReport> run_to_end(ALState& state) const;

  // Effective training counts implied by the supervision of every image with
  // at least one GT label.
  std::vector<double> train_surrogate(const ALState& state,
                                      std::span<const std::vector<Candidate>> candidates) const;

 private:
  ExperimentConfig cfg_;
  std::uint64_t seed_;
  Dataset dataset_;
  Dataset eval_;
};

}  // namespace boxal
