#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "boxal/config.hpp"
#include "boxal/simulator.hpp"

namespace boxal {

// ---- configuration -------------------------------------------------------

nlohmann::json config_to_json(const ExperimentConfig& cfg);
// Missing fields keep their defaults. Throws DataError on type errors or
// unknown keys, ConfigError when the result does not validate.
ExperimentConfig config_from_json(const nlohmann::json& j);
// Throws IoError (unreadable, message carries the path) or DataError.
ExperimentConfig load_config(const std::filesystem::path& path);

// FNV-1a digest of everything in `cfg` that shapes the AL state, plus the seed.
std::string config_hash(const ExperimentConfig& cfg, std::uint64_t seed);

// Parses JSON text, reporting syntax errors as DataError with line and column.
nlohmann::json parse_json_text(std::string_view text, std::string_view origin);
std::string read_text_file(const std::filesystem::path& path);
// Writes bytes verbatim (LF stays LF). Throws IoError.
void write_text_file(const std::filesystem::path& path, std::string_view text);

// ---- COCO annotations ----------------------------------------------------

struct CocoLoadStats {
  std::size_t skipped_degenerate = 0;
};

// `images`, `annotations` (bbox as [x, y, w, h]) and `categories`. Category
// ids are remapped to dense [0, K) in ascending id order. Annotations with a
// non-positive width or height are skipped and counted.
Dataset dataset_from_coco(const nlohmann::json& coco, CocoLoadStats* stats = nullptr);
Dataset load_coco(const std::filesystem::path& path, CocoLoadStats* stats = nullptr);
nlohmann::json dataset_to_coco(const Dataset& ds);
void write_coco(const Dataset& ds, const std::filesystem::path& path);

// ---- checkpoints ---------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

nlohmann::json state_to_json(const ALState& state);
ALState state_from_json(const nlohmann::json& j);

void save_checkpoint(const ALState& state, const std::string& config_hash,
                     const std::filesystem::path& path);
// Rejects (DataError) a version other than kCheckpointVersion or a config
// hash different from `expected_hash`. Nothing is returned on failure.
ALState load_checkpoint(const std::filesystem::path& path, const std::string& expected_hash);

// ---- reports -------------------------------------------------------------

inline constexpr std::string_view kReportHeader =
    "cycle,strategy,seed,budget_spent,imbalance_selected,imbalance_pseudo,imbalance_labelled,"
    "detection_f1,zero_classes";

std::string format_report_csv(std::span<const CycleReport> reports);
// Key columns cycle,strategy,seed,kind followed by one column per class.
std::string format_class_report_csv(std::span<const CycleReport> reports);

// Writes `path` and the per-class companion `<stem>_classes.csv` next to it.
// Returns the companion's path. Throws InvalidInput on an empty report list.
std::filesystem::path write_report(std::span<const CycleReport> reports,
                                   const std::filesystem::path& path);

// Median and interquartile range of every numeric report column, grouped by
// (strategy, cycle), across the given report CSV texts.
std::string summarize_reports(std::span<const std::string> csv_texts);

// ---- scoring external detections ----------------------------------------

struct ScoredBox {
  ImageId image_id = 0;
  std::size_t det_index = 0;
  ClassIndex label = 0;
  double confidence = 0.0;
  double consistency = 0.0;
  double uncertainty = 0.0;
  double box_consistency = 0.0;
  double acquisition = 0.0;
  bool candidate = false;
};

// Detections file: {"num_classes": K, "images": [{"image_id", "detections":
// [{"bbox": [x, y, w, h], "scores": [K probs]}], "augmentations": [[...], ...]}]}.
// Every detection is scored; `candidate` tells whether it survives the
// confidence and labelled-GT filter.
std::vector<ScoredBox> score_detections(const nlohmann::json& detections, const Dataset& labelled,
                                        const ExperimentConfig& cfg);
std::string format_scores_csv(std::span<const ScoredBox> rows);

}  // namespace boxal
