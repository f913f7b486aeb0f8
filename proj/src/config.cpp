#include "boxal/config.hpp"

#include <cmath>

#include "boxal/error.hpp"

namespace boxal {

namespace {

constexpr double kMinImageSide = 32.0;

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace

void DatasetConfig::validate() const {
  require(num_classes >= 2, "dataset.num_classes must be >= 2");
  require(num_images >= 1, "dataset.num_images must be >= 1");
  require(std::isfinite(objects_per_image) && objects_per_image >= 1.0,
          "dataset.objects_per_image must be >= 1");
  require(std::isfinite(imbalance_factor) && imbalance_factor >= 1.0,
          "dataset.imbalance_factor must be >= 1");
  require(std::isfinite(image_width) && std::isfinite(image_height) &&
              image_width >= kMinImageSide && image_height >= kMinImageSide,
          "dataset.image_size too small: objects would not fit inside the image");
}

void ExperimentConfig::validate() const {
  dataset.validate();
  try {
    balance.validate();
    thresholds.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  require(beta > 1.0 && beta < 2.0, "beta must lie in (1, 2)");
  require(tau_cand >= 0.0 && tau_cand < 1.0, "tau_cand must lie in [0, 1)");
  require(neg_iou >= 0.0 && neg_iou <= pos_iou && pos_iou <= 1.0,
          "matcher needs 0 <= neg_iou <= pos_iou <= 1");
  require(!budgets.empty(), "budgets must not be empty");
  require(!seeds.empty(), "seeds must not be empty");
  require(num_views >= 1, "num_views must be >= 1");
  require(detector.kappa > 0.0, "detector.kappa must be positive");
  require(detector.confidence_noise >= 0.0 && detector.box_noise >= 0.0 && detector.fp_rate >= 0.0,
          "detector noise parameters must be non-negative");
  require(detector.confidence_noise < 1.0 / 3.0, "detector.confidence_noise must be < 1/3");
  require(training.missing_penalty >= 0.0 && training.noise_penalty >= 0.0 &&
              training.box_quality_floor >= 0.0 && training.box_quality_floor < 1.0,
          "training penalties must be non-negative and box_quality_floor in [0, 1)");
  require(eval_images >= 1, "eval_images must be >= 1");
  require(eval_score_threshold >= 0.0 && eval_score_threshold <= 1.0,
          "eval_score_threshold must lie in [0, 1]");
}

ExperimentConfig ExperimentConfig::long_schedule() {
  ExperimentConfig cfg;
  cfg.dataset.num_classes = 20;
  cfg.dataset.num_images = 6000;
  cfg.initial_images = 1000;
  cfg.budgets = {2000, 2000, 4000};
  return cfg;
}

}  // namespace boxal
