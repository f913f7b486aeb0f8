#include "boxal/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include <fmt/format.h>

#include "boxal/acquisition.hpp"
#include "boxal/error.hpp"
#include "boxal/pseudolabel.hpp"
#include "boxal/scoring.hpp"

namespace boxal {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed,
                std::string_view where) {
  if (!j.is_object()) throw DataError(std::string(where) + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw DataError(std::string(where) + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json box_to_json(const BBox& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

BBox box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw DataError("box must be an array of 4 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

std::string fmt_double(double v) { return fmt::format("{:.6f}", v); }

std::string fmt_imbalance(const std::optional<ImbalanceStats>& s) {
  return s ? fmt_double(s->factor) : std::string();
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Linear-interpolation quantile of sorted values.
double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.size() == 1) return sorted.front();
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

ClassDistribution dist_from_scores(const json& scores, std::size_t num_classes) {
  auto probs = scores.get<std::vector<double>>();
  if (probs.size() != num_classes) {
    throw DataError("detection scores have " + std::to_string(probs.size()) +
                    " entries, expected " + std::to_string(num_classes));
  }
  try {
    return ClassDistribution(std::move(probs));
  } catch (const InvalidInput& e) {
    throw DataError(std::string("detection scores: ") + e.what());
  }
}

Detection detection_from_json(const json& j, ImageId image_id, std::size_t num_classes) {
  const auto bb = j.at("bbox").get<std::vector<double>>();
  if (bb.size() != 4) throw DataError("detection bbox must be [x, y, w, h]");
  const BBox box = BBox::from_xywh(bb[0], bb[1], bb[2], bb[3]);
  if (!box.valid()) throw DataError("degenerate detection bbox in image " + std::to_string(image_id));
  return Detection::make(image_id, box, dist_from_scores(j.at("scores"), num_classes));
}

}  // namespace

// ---- files ----------------------------------------------------------------

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

json parse_json_text(std::string_view text, std::string_view origin) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    const std::size_t offset = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < offset; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw DataError(fmt::format("{}:{}:{}: malformed JSON ({})", origin, line, col, e.what()));
  }
}

// ---- configuration --------------------------------------------------------

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["dataset"] = {{"num_classes", c.dataset.num_classes},
                  {"num_images", c.dataset.num_images},
                  {"objects_per_image", c.dataset.objects_per_image},
                  {"imbalance_factor", c.dataset.imbalance_factor},
                  {"image_size", json::array({c.dataset.image_width, c.dataset.image_height})},
                  {"seed", c.dataset.seed}};
  j["strategy"] = std::string(to_string(c.strategy));
  j["pseudo_mode"] = std::string(to_string(c.pseudo_mode));
  j["balance"] = {{"sigma", c.balance.sigma}, {"enabled", c.balance.enabled}};
  j["thresholds"] = {{"tau_cls_hi", c.thresholds.tau_cls_hi},
                     {"tau_cls_lo", c.thresholds.tau_cls_lo},
                     {"tau_box_hi", c.thresholds.tau_box_hi},
                     {"tau_box_lo", c.thresholds.tau_box_lo}};
  j["beta"] = c.beta;
  j["tau_cand"] = c.tau_cand;
  j["matcher"] = {{"pos_iou", c.pos_iou}, {"neg_iou", c.neg_iou}};
  j["budgets"] = c.budgets;
  j["initial_images"] = c.initial_images;
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir;
  j["detector"] = {{"kappa", c.detector.kappa},
                   {"confidence_noise", c.detector.confidence_noise},
                   {"box_noise", c.detector.box_noise},
                   {"fp_rate", c.detector.fp_rate}};
  j["training"] = {{"missing_penalty", c.training.missing_penalty},
                   {"noise_penalty", c.training.noise_penalty},
                   {"box_quality_floor", c.training.box_quality_floor}};
  j["num_views"] = c.num_views;
  j["fp_consumes_budget"] = c.fp_consumes_budget;
  j["prior_includes_gt"] = c.prior_includes_gt;
  j["eval_images"] = c.eval_images;
  j["eval_score_threshold"] = c.eval_score_threshold;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  try {
    check_keys(j,
               {"dataset", "strategy", "pseudo_mode", "balance", "thresholds", "beta", "tau_cand",
                "matcher", "budgets", "initial_images", "seeds", "output_dir", "detector",
                "training", "num_views", "fp_consumes_budget", "prior_includes_gt", "eval_images",
                "eval_score_threshold"},
               "config");
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      check_keys(d,
                 {"num_classes", "num_images", "objects_per_image", "imbalance_factor",
                  "image_size", "seed"},
                 "config.dataset");
      read_opt(d, "num_classes", c.dataset.num_classes);
      read_opt(d, "num_images", c.dataset.num_images);
      read_opt(d, "objects_per_image", c.dataset.objects_per_image);
      read_opt(d, "imbalance_factor", c.dataset.imbalance_factor);
      read_opt(d, "seed", c.dataset.seed);
      if (d.contains("image_size")) {
        const auto sz = d.at("image_size").get<std::vector<double>>();
        if (sz.size() != 2) throw DataError("config.dataset.image_size must be [width, height]");
        c.dataset.image_width = sz[0];
        c.dataset.image_height = sz[1];
      }
    }
    if (j.contains("strategy")) c.strategy = strategy_from_string(j.at("strategy").get<std::string>());
    if (j.contains("pseudo_mode")) {
      c.pseudo_mode = pseudo_mode_from_string(j.at("pseudo_mode").get<std::string>());
    }
    if (j.contains("balance")) {
      const auto& b = j.at("balance");
      check_keys(b, {"sigma", "enabled"}, "config.balance");
      read_opt(b, "sigma", c.balance.sigma);
      read_opt(b, "enabled", c.balance.enabled);
    }
    if (j.contains("thresholds")) {
      const auto& t = j.at("thresholds");
      check_keys(t, {"tau_cls_hi", "tau_cls_lo", "tau_box_hi", "tau_box_lo"}, "config.thresholds");
      read_opt(t, "tau_cls_hi", c.thresholds.tau_cls_hi);
      read_opt(t, "tau_cls_lo", c.thresholds.tau_cls_lo);
      read_opt(t, "tau_box_hi", c.thresholds.tau_box_hi);
      read_opt(t, "tau_box_lo", c.thresholds.tau_box_lo);
    }
    read_opt(j, "beta", c.beta);
    read_opt(j, "tau_cand", c.tau_cand);
    if (j.contains("matcher")) {
      const auto& m = j.at("matcher");
      check_keys(m, {"pos_iou", "neg_iou"}, "config.matcher");
      read_opt(m, "pos_iou", c.pos_iou);
      read_opt(m, "neg_iou", c.neg_iou);
    }
    read_opt(j, "budgets", c.budgets);
    read_opt(j, "initial_images", c.initial_images);
    read_opt(j, "seeds", c.seeds);
    read_opt(j, "output_dir", c.output_dir);
    if (j.contains("detector")) {
      const auto& d = j.at("detector");
      check_keys(d, {"kappa", "confidence_noise", "box_noise", "fp_rate"}, "config.detector");
      read_opt(d, "kappa", c.detector.kappa);
      read_opt(d, "confidence_noise", c.detector.confidence_noise);
      read_opt(d, "box_noise", c.detector.box_noise);
      read_opt(d, "fp_rate", c.detector.fp_rate);
    }
    if (j.contains("training")) {
      const auto& t = j.at("training");
      check_keys(t, {"missing_penalty", "noise_penalty", "box_quality_floor"}, "config.training");
      read_opt(t, "missing_penalty", c.training.missing_penalty);
      read_opt(t, "noise_penalty", c.training.noise_penalty);
      read_opt(t, "box_quality_floor", c.training.box_quality_floor);
    }
    read_opt(j, "num_views", c.num_views);
    read_opt(j, "fp_consumes_budget", c.fp_consumes_budget);
    read_opt(j, "prior_includes_gt", c.prior_includes_gt);
    read_opt(j, "eval_images", c.eval_images);
    read_opt(j, "eval_score_threshold", c.eval_score_threshold);
  } catch (const json::exception& e) {
    throw DataError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  return config_from_json(parse_json_text(text, path.string()));
}

std::string config_hash(const ExperimentConfig& cfg, std::uint64_t seed) {
  json j = config_to_json(cfg);
  j.erase("output_dir");
  j.erase("seeds");
  j["dataset"].erase("seed");
  j["run_seed"] = seed;
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

// ---- COCO -----------------------------------------------------------------

Dataset dataset_from_coco(const json& coco, CocoLoadStats* stats) {
  Dataset ds;
  CocoLoadStats local;
  try {
    if (!coco.is_object()) throw DataError("COCO: top level must be an object");
    const auto& cats = coco.at("categories");
    std::vector<std::pair<std::int64_t, std::string>> categories;
    for (const auto& c : cats) {
      categories.emplace_back(c.at("id").get<std::int64_t>(),
                              c.contains("name") ? c.at("name").get<std::string>() : std::string());
    }
    std::sort(categories.begin(), categories.end());
    std::map<std::int64_t, ClassIndex> dense;
    for (const auto& [id, name] : categories) {
      if (dense.contains(id)) throw DataError("COCO: duplicate category id " + std::to_string(id));
      dense.emplace(id, static_cast<ClassIndex>(ds.class_names.size()));
      ds.class_names.push_back(name.empty() ? "class_" + std::to_string(id) : name);
    }
    ds.num_classes = ds.class_names.size();

    std::map<ImageId, std::size_t> image_pos;
    for (const auto& im : coco.at("images")) {
      Image img;
      img.id = im.at("id").get<ImageId>();
      img.width = im.contains("width") ? im.at("width").get<double>() : 0.0;
      img.height = im.contains("height") ? im.at("height").get<double>() : 0.0;
      if (image_pos.contains(img.id)) {
        throw DataError("COCO: duplicate image id " + std::to_string(img.id));
      }
      image_pos.emplace(img.id, ds.images.size());
      ds.images.push_back(std::move(img));
    }
    for (const auto& a : coco.at("annotations")) {
      const auto bb = a.at("bbox").get<std::vector<double>>();
      if (bb.size() != 4) throw DataError("COCO: bbox must be [x, y, width, height]");
      if (!(bb[2] > 0.0) || !(bb[3] > 0.0) || !std::isfinite(bb[0]) || !std::isfinite(bb[1])) {
        ++local.skipped_degenerate;
        continue;
      }
      const auto img_it = image_pos.find(a.at("image_id").get<ImageId>());
      if (img_it == image_pos.end()) {
        throw DataError("COCO: annotation refers to unknown image " +
                        std::to_string(a.at("image_id").get<ImageId>()));
      }
      const auto cat_it = dense.find(a.at("category_id").get<std::int64_t>());
      if (cat_it == dense.end()) {
        throw DataError("COCO: annotation refers to unknown category " +
                        std::to_string(a.at("category_id").get<std::int64_t>()));
      }
      Object o;
      o.id = a.contains("id") ? a.at("id").get<std::int64_t>() : 0;
      o.box = BBox::from_xywh(bb[0], bb[1], bb[2], bb[3]);
      o.label = cat_it->second;
      Image& img = ds.images[img_it->second];
      img.width = std::max(img.width, o.box.x2);
      img.height = std::max(img.height, o.box.y2);
      img.objects.push_back(o);
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("COCO: ") + e.what());
  }
  if (stats) *stats = local;
  return ds;
}

Dataset load_coco(const std::filesystem::path& path, CocoLoadStats* stats) {
  const std::string text = read_text_file(path);
  return dataset_from_coco(parse_json_text(text, path.string()), stats);
}

json dataset_to_coco(const Dataset& ds) {
  json images = json::array();
  json annotations = json::array();
  json categories = json::array();
  for (std::size_t c = 0; c < ds.num_classes; ++c) {
    categories.push_back({{"id", c}, {"name", ds.class_names.at(c)}});
  }
  for (const auto& img : ds.images) {
    images.push_back({{"id", img.id}, {"width", img.width}, {"height", img.height}});
    for (const auto& o : img.objects) {
      annotations.push_back({{"id", o.id},
                             {"image_id", img.id},
                             {"category_id", o.label},
                             {"bbox", json::array({o.box.x1, o.box.y1, o.box.width(), o.box.height()})},
                             {"area", o.box.area()},
                             {"iscrowd", 0}});
    }
  }
  return {{"images", images}, {"annotations", annotations}, {"categories", categories}};
}

void write_coco(const Dataset& ds, const std::filesystem::path& path) {
  write_text_file(path, dataset_to_coco(ds).dump() + "\n");
}

// ---- checkpoints -----------------------------------------------------------

json state_to_json(const ALState& s) {
  json labelled = json::array();
  for (const auto& per_image : s.labelled) {
    json arr = json::array();
    for (const auto& g : per_image) {
      arr.push_back({{"image_id", g.image_id},
                     {"object_id", g.object_id},
                     {"box", box_to_json(g.box)},
                     {"label", g.label},
                     {"origin_cycle", g.origin_cycle}});
    }
    labelled.push_back(std::move(arr));
  }
  json ledger = json::array();
  for (const auto& e : s.budget_ledger) ledger.push_back({{"cycle", e.cycle}, {"boxes_spent", e.boxes_spent}});
  return {{"cycle", s.cycle},
          {"seed", s.seed},
          {"initial_boxes", s.initial_boxes},
          {"per_class_labelled", s.per_class_labelled},
          {"model_counts", s.model_counts},
          {"budget_ledger", ledger},
          {"labelled", labelled},
          {"pool", s.pool}};
}

ALState state_from_json(const json& j) {
  ALState s;
  try {
    s.cycle = j.at("cycle").get<int>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.initial_boxes = j.at("initial_boxes").get<std::size_t>();
    s.per_class_labelled = j.at("per_class_labelled").get<std::vector<std::size_t>>();
    s.model_counts = j.at("model_counts").get<std::vector<double>>();
    for (const auto& e : j.at("budget_ledger")) {
      s.budget_ledger.push_back({e.at("cycle").get<int>(), e.at("boxes_spent").get<std::size_t>()});
    }
    for (const auto& per_image : j.at("labelled")) {
      auto& out = s.labelled.emplace_back();
      for (const auto& g : per_image) {
        out.push_back({g.at("image_id").get<ImageId>(), g.at("object_id").get<std::int64_t>(),
                       box_from_json(g.at("box")), g.at("label").get<ClassIndex>(),
                       g.at("origin_cycle").get<int>()});
      }
    }
    s.pool = j.at("pool").get<std::vector<std::vector<std::int64_t>>>();
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint state: ") + e.what());
  }
  if (s.labelled.size() != s.pool.size()) throw DataError("checkpoint state: image count mismatch");
  return s;
}

void save_checkpoint(const ALState& state, const std::string& hash,
                     const std::filesystem::path& path) {
  const json j = {{"version", kCheckpointVersion}, {"config_hash", hash}, {"state", state_to_json(state)}};
  write_text_file(path, j.dump() + "\n");
}

ALState load_checkpoint(const std::filesystem::path& path, const std::string& expected_hash) {
  const json j = parse_json_text(read_text_file(path), path.string());
  int version = -1;
  std::string hash;
  try {
    version = j.at("version").get<int>();
    hash = j.at("config_hash").get<std::string>();
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": not a checkpoint (" + e.what() + ")");
  }
  if (version != kCheckpointVersion) {
    throw DataError(fmt::format("{}: checkpoint format version {} cannot be migrated to {}",
                                path.string(), version, kCheckpointVersion));
  }
  if (hash != expected_hash) {
    throw DataError(fmt::format("{}: checkpoint config hash {} does not match configuration {}",
                                path.string(), hash, expected_hash));
  }
  return state_from_json(j.at("state"));
}

// ---- reports ---------------------------------------------------------------

std::string format_report_csv(std::span<const CycleReport> reports) {
  std::string out(kReportHeader);
  out += '\n';
  for (const auto& r : reports) {
    out += fmt::format("{},{},{},{},{},{},{},{},{}\n", r.cycle, r.strategy, r.seed, r.budget_spent,
                       fmt_imbalance(r.imbalance_selected), fmt_imbalance(r.imbalance_pseudo),
                       fmt_imbalance(r.imbalance_labelled), fmt_double(r.detection_quality),
                       r.imbalance_labelled ? r.imbalance_labelled->zero_classes
                                            : r.labelled_hist.size());
  }
  return out;
}

std::string format_class_report_csv(std::span<const CycleReport> reports) {
  std::size_t K = 0;
  for (const auto& r : reports) K = std::max(K, r.labelled_hist.size());
  std::string out = "cycle,strategy,seed,kind";
  for (std::size_t c = 0; c < K; ++c) out += fmt::format(",c{}", c);
  out += '\n';
  auto row = [&](const CycleReport& r, std::string_view kind, auto values, auto fmt_one) {
    out += fmt::format("{},{},{},{}", r.cycle, r.strategy, r.seed, kind);
    for (std::size_t c = 0; c < K; ++c) {
      out += ',';
      if (c < values.size()) out += fmt_one(values[c]);
    }
    out += '\n';
  };
  auto as_int = [](std::size_t v) { return std::to_string(v); };
  auto as_real = [](double v) { return std::isnan(v) ? std::string() : fmt_double(v); };
  for (const auto& r : reports) {
    row(r, "selected", std::span<const std::size_t>(r.selected_hist), as_int);
    row(r, "pseudo", std::span<const std::size_t>(r.pseudo_hist), as_int);
    row(r, "labelled", std::span<const std::size_t>(r.labelled_hist), as_int);
    row(r, "pseudo_precision", std::span<const double>(r.pseudo_precision), as_real);
    row(r, "pseudo_recall", std::span<const double>(r.pseudo_recall), as_real);
    row(r, "f1", std::span<const double>(r.per_class_f1), as_real);
  }
  return out;
}

std::filesystem::path write_report(std::span<const CycleReport> reports,
                                   const std::filesystem::path& path) {
  if (reports.empty()) throw InvalidInput("write_report: no cycle reports");
  write_text_file(path, format_report_csv(reports));
  auto companion = path;
  companion.replace_filename(path.stem().string() + "_classes.csv");
  write_text_file(companion, format_class_report_csv(reports));
  return companion;
}

std::string summarize_reports(std::span<const std::string> csv_texts) {
  const auto header = split_csv_line(std::string(kReportHeader));
  // (strategy, cycle) -> column -> values
  std::map<std::pair<std::string, int>, std::map<std::size_t, std::vector<double>>> groups;
  for (const auto& text : csv_texts) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kReportHeader) {
      throw DataError("report CSV does not start with the expected header");
    }
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto cells = split_csv_line(line);
      if (cells.size() != header.size()) throw DataError("report CSV row has wrong column count: " + line);
      int cycle = 0;
      try {
        cycle = std::stoi(cells[0]);
      } catch (const std::exception&) {
        throw DataError("report CSV: bad cycle '" + cells[0] + "'");
      }
      auto& cols = groups[{cells[1], cycle}];
      for (std::size_t k = 3; k < cells.size(); ++k) {
        if (cells[k].empty()) continue;
        try {
          cols[k].push_back(std::stod(cells[k]));
        } catch (const std::exception&) {
          throw DataError("report CSV: bad number '" + cells[k] + "'");
        }
      }
    }
  }
  std::string out = "strategy,cycle,metric,n,median,q1,q3\n";
  for (auto& [key, cols] : groups) {
    for (auto& [k, values] : cols) {
      std::sort(values.begin(), values.end());
      out += fmt::format("{},{},{},{},{},{},{}\n", key.first, key.second, header[k], values.size(),
                         fmt_double(quantile(values, 0.5)), fmt_double(quantile(values, 0.25)),
                         fmt_double(quantile(values, 0.75)));
    }
  }
  return out;
}

// ---- scoring external detections ------------------------------------------

std::vector<ScoredBox> score_detections(const json& detections, const Dataset& labelled,
                                        const ExperimentConfig& cfg) {
  std::vector<ScoredBox> rows;
  std::size_t K = 0;
  struct PerImage {
    std::vector<AugmentedViews> views;
    std::vector<GtLabel> gt;
    std::vector<Candidate> candidates;
  };
  std::vector<PerImage> images;
  try {
    K = detections.at("num_classes").get<std::size_t>();
    if (K < 2) throw DataError("detections: num_classes must be >= 2");
    if (labelled.num_classes != 0 && labelled.num_classes != K) {
      throw DataError(fmt::format("detections have {} classes but the labelled set has {}", K,
                                  labelled.num_classes));
    }
    std::map<ImageId, const Image*> gt_images;
    for (const auto& img : labelled.images) gt_images.emplace(img.id, &img);

    for (const auto& im : detections.at("images")) {
      PerImage pi;
      const auto image_id = im.at("image_id").get<ImageId>();
      std::vector<Detection> origin;
      for (const auto& d : im.at("detections")) origin.push_back(detection_from_json(d, image_id, K));
      std::vector<std::vector<Detection>> augs;
      if (im.contains("augmentations")) {
        for (const auto& aug : im.at("augmentations")) {
          auto& list = augs.emplace_back();
          for (const auto& d : aug) list.push_back(detection_from_json(d, image_id, K));
        }
      }
      if (augs.empty()) throw DataError("detections: image " + std::to_string(image_id) + " has no augmentations");
      pi.views = match_views(origin, augs);
      if (const auto it = gt_images.find(image_id); it != gt_images.end()) {
        for (const auto& o : it->second->objects) pi.gt.push_back({image_id, o.id, o.box, o.label, 0});
      }
      images.push_back(std::move(pi));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("detections: ") + e.what());
  }

  std::size_t next_id = 0;
  const auto prior_opts = supervision_options(PseudoMode::task_soft, cfg.thresholds);
  std::vector<PseudoLabel> prior_labels;
  for (auto& pi : images) {
    pi.candidates = filter_candidates(pi.views, pi.gt, cfg.tau_cand, next_id);
    next_id += pi.candidates.size();
    for (const auto& l : build_supervision(pi.candidates, pi.gt, prior_opts)) {
      if (l.source == LabelSource::pseudo && l.w_cls > 0.0) prior_labels.push_back(l);
      if (l.source == LabelSource::ground_truth && cfg.prior_includes_gt) prior_labels.push_back(l);
    }
  }
  const auto prior = estimate_class_distribution(prior_labels, K);
  BalanceConfig balance = cfg.balance;
  balance.enabled = cfg.balance.enabled && cfg.strategy == Strategy::balanced;

  for (const auto& pi : images) {
    for (std::size_t d = 0; d < pi.views.size(); ++d) {
      const auto& v = pi.views[d];
      ScoredBox row;
      row.image_id = v.origin.image_id;
      row.det_index = d;
      row.label = v.origin.predicted_label;
      row.confidence = v.origin.confidence;
      row.consistency = consistency(v, cfg.beta);
      row.uncertainty = consistency_bound(cfg.beta) - row.consistency;
      row.box_consistency = box_consistency(v);
      row.acquisition = acquisition_score(row.uncertainty, row.label, prior, balance);
      row.candidate = std::any_of(pi.candidates.begin(), pi.candidates.end(), [&](const Candidate& c) {
        return c.detection().box == v.origin.box && c.detection().confidence == v.origin.confidence;
      });
      rows.push_back(row);
    }
  }
  return rows;
}

std::string format_scores_csv(std::span<const ScoredBox> rows) {
  std::string out =
      "image_id,det_index,label,confidence,consistency,uncertainty,box_consistency,acquisition,"
      "candidate\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{},{}\n", r.image_id, r.det_index, r.label,
                       fmt_double(r.confidence), fmt_double(r.consistency),
                       fmt_double(r.uncertainty), fmt_double(r.box_consistency),
                       fmt_double(r.acquisition), r.candidate ? 1 : 0);
  }
  return out;
}

}  // namespace boxal
