#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "boxal/acquisition.hpp"
#include "boxal/pseudolabel.hpp"
#include "boxal/scoring.hpp"

namespace boxal {

struct DatasetConfig {
  std::size_t num_classes = 10;
  std::size_t num_images = 2000;
  double objects_per_image = 3.0;
  // Most- to least-frequent class ratio of the geometric long tail.
  double imbalance_factor = 10.0;
  double image_width = 640.0;
  double image_height = 480.0;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
};

// Behaviour of the surrogate detector. Its per-class skill follows
// 1 - exp(-n / kappa) of the effective training count n.
struct DetectorParams {
  double kappa = 100.0;
  // Std-dev of the per-detection quality draw, scaled by (1 - skill).
  double confidence_noise = 0.25;
  // Corner jitter as a fraction of box size, scaled by (1 - skill).
  double box_noise = 0.2;
  // Expected false positives per image.
  double fp_rate = 0.3;
};

// Converts one cycle's supervision into effective per-class training counts.
struct TrainingParams {
  // Count removed for a foreground object supervised as background.
  double missing_penalty = 0.3;
  // Count removed per unit weight of a pseudo box on a wrong class or on no object.
  double noise_penalty = 1.0;
  // Pseudo-box IoU to the true box at which its regression target turns helpful.
  double box_quality_floor = 0.7;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  Strategy strategy = Strategy::balanced;
  PseudoMode pseudo_mode = PseudoMode::task_soft;
  BalanceConfig balance;
  Thresholds thresholds;
  double beta = kDefaultBeta;
  double tau_cand = kDefaultTauCand;
  double pos_iou = 0.5;
  double neg_iou = 0.4;
  std::vector<std::size_t> budgets{500, 1000};
  std::size_t initial_images = 200;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::string output_dir = "out";

  DetectorParams detector;
  TrainingParams training;
  std::size_t num_views = 2;
  bool fp_consumes_budget = true;
  // Estimate the class prior from GT labels as well as pseudo labels.
  bool prior_includes_gt = false;
  std::size_t eval_images = 500;
  double eval_score_threshold = 0.5;

  // Throws ConfigError naming the offending field.
  void validate() const;

  // 1000 fully-labelled initial images, then 2000, 2000 and 4000 boxes
  // (cumulative 2k/4k/8k) on a larger synthetic pool.
  static ExperimentConfig long_schedule();
};

}  // namespace boxal
