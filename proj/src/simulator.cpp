#include "boxal/simulator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>

#include "boxal/acquisition.hpp"
#include "boxal/error.hpp"
#include "boxal/loss.hpp"
#include "boxal/pseudolabel.hpp"
#include "boxal/scoring.hpp"

namespace boxal {

namespace {

// Stream tags for SimRng::derive.
enum : std::uint64_t {
  kTagDataset = 1,
  kTagEvalDataset,
  kTagInitialPool,
  kTagDetect,
  kTagFalsePositive,
  kTagCycle,
  kTagRandomStrategy,
  kTagEvaluation,
};

constexpr double kMinObjectSide = 8.0;
constexpr double kPlacementMaxIou = 0.3;
constexpr int kPlacementAttempts = 8;
constexpr double kFpViewKeep = 0.5;
constexpr double kFpViewNoise = 0.3;
constexpr double kMatchIou = 0.5;
constexpr double kQualityNoiseClip = 3.0;

double frac(double x) { return x - std::floor(x); }

// Deterministic per-class shape prior: relative size and aspect ratio (w / h).
double class_scale(ClassIndex c) { return 0.08 + 0.17 * frac(c * 0.6180339887498949); }
double class_aspect(ClassIndex c) { return 0.6 + 0.8 * frac(c * 0.4142135623730951); }

BBox clip_box(BBox b, double width, double height) {
  b.x1 = std::clamp(b.x1, 0.0, width);
  b.x2 = std::clamp(b.x2, 0.0, width);
  b.y1 = std::clamp(b.y1, 0.0, height);
  b.y2 = std::clamp(b.y2, 0.0, height);
  if (b.x2 < b.x1 + 1.0) {
    const double c = std::clamp(0.5 * (b.x1 + b.x2), 0.5, width - 0.5);
    b.x1 = c - 0.5;
    b.x2 = c + 0.5;
  }
  if (b.y2 < b.y1 + 1.0) {
    const double c = std::clamp(0.5 * (b.y1 + b.y2), 0.5, height - 0.5);
    b.y1 = c - 0.5;
    b.y2 = c + 0.5;
  }
  return b;
}

BBox jitter(const BBox& truth, const std::array<double, 4>& noise, double scale,
            const Image& image) {
  const double w = truth.width();
  const double h = truth.height();
  BBox b{truth.x1 + noise[0] * scale * w, truth.y1 + noise[1] * scale * h,
         truth.x2 + noise[2] * scale * w, truth.y2 + noise[3] * scale * h};
  return clip_box(b, image.width, image.height);
}

std::array<double, 4> normals4(SimRng& rng) {
  return {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
}

std::size_t image_index(const std::unordered_map<ImageId, std::size_t>& index, ImageId id) {
  const auto it = index.find(id);
  if (it == index.end()) throw InvalidInput("unknown image id " + std::to_string(id));
  return it->second;
}

std::unordered_map<ImageId, std::size_t> index_images(const Dataset& ds) {
  std::unordered_map<ImageId, std::size_t> index;
  index.reserve(ds.images.size());
  for (std::size_t i = 0; i < ds.images.size(); ++i) index.emplace(ds.images[i].id, i);
  return index;
}

std::optional<ImbalanceStats> imbalance_or_none(std::span<const std::size_t> counts) {
  const bool any = std::any_of(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; });
  if (!any) return std::nullopt;
  return imbalance_factor(counts);
}

std::vector<double> box_features(const Detection& d, const Image& img) {
  std::vector<double> f(d.dist.probs().begin(), d.dist.probs().end());
  f.push_back(d.box.center_x() / img.width);
  f.push_back(d.box.center_y() / img.height);
  f.push_back(d.box.width() / img.width);
  f.push_back(d.box.height() / img.height);
  return f;
}

std::vector<double> box_features(const GtLabel& g, const Image& img, std::size_t num_classes) {
  return box_features(Detection::make(g.image_id, g.box,
                                      ClassDistribution::point_mass(num_classes, g.label)),
                      img);
}

}  // namespace

std::size_t Dataset::num_objects() const {
  std::size_t n = 0;
  for (const auto& img : images) n += img.objects.size();
  return n;
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (const auto& img : images) {
    for (const auto& o : img.objects) ++counts[static_cast<std::size_t>(o.label)];
  }
  return counts;
}

std::vector<double> long_tail_frequencies(std::size_t num_classes, double imbalance_factor) {
  if (num_classes < 2) throw InvalidInput("long tail needs at least 2 classes");
  std::vector<double> p(num_classes);
  double z = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    p[c] = std::pow(imbalance_factor,
                    -static_cast<double>(c) / static_cast<double>(num_classes - 1));
    z += p[c];
  }
  for (double& v : p) v /= z;
  return p;
}

Dataset generate_dataset(const DatasetConfig& cfg) {
  cfg.validate();
  const auto freq = long_tail_frequencies(cfg.num_classes, cfg.imbalance_factor);
  std::vector<double> cdf(freq.size());
  std::partial_sum(freq.begin(), freq.end(), cdf.begin());

  Dataset ds;
  ds.num_classes = cfg.num_classes;
  for (std::size_t c = 0; c < cfg.num_classes; ++c) ds.class_names.push_back("class_" + std::to_string(c));
  ds.images.reserve(cfg.num_images);

  const double W = cfg.image_width;
  const double H = cfg.image_height;
  std::int64_t next_object = 1;
  for (std::size_t i = 0; i < cfg.num_images; ++i) {
    SimRng rng = SimRng::derive(cfg.seed, {kTagDataset, i});
    Image img;
    img.id = static_cast<ImageId>(i + 1);
    img.width = W;
    img.height = H;
    const int count = 1 + rng.poisson(cfg.objects_per_image - 1.0);
    for (int k = 0; k < count; ++k) {
      const double u = rng.uniform();
      const auto cls = static_cast<ClassIndex>(
          std::min<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin(),
                                cfg.num_classes - 1));
      const double base = class_scale(cls) * std::sqrt(W * H);
      const double aspect = std::sqrt(class_aspect(cls));
      const double w = std::clamp(base * aspect * std::exp(0.25 * rng.normal()), kMinObjectSide,
                                  0.9 * W);
      const double h = std::clamp(base / aspect * std::exp(0.25 * rng.normal()), kMinObjectSide,
                                  0.9 * H);
      BBox box;
      for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
        const double x = rng.uniform(0.0, W - w);
        const double y = rng.uniform(0.0, H - h);
        box = BBox::from_xywh(x, y, w, h);
        const bool crowded = std::any_of(img.objects.begin(), img.objects.end(),
                                         [&](const Object& o) { return iou(o.box, box) >= kPlacementMaxIou; });
        if (!crowded) break;
      }
      img.objects.push_back({next_object++, box, cls});
    }
    ds.images.push_back(std::move(img));
  }
  return ds;
}

double skill_from_count(double effective_count, double kappa) {
  return 1.0 - std::exp(-std::max(effective_count, 0.0) / kappa);
}

DetectorSkill DetectorSkill::from_counts(std::span<const double> effective_counts, double kappa) {
  DetectorSkill s;
  s.per_class.reserve(effective_counts.size());
  for (double n : effective_counts) s.per_class.push_back(skill_from_count(n, kappa));
  return s;
}

std::vector<AugmentedViews> simulate_detections(const Image& image, const DetectorSkill& skill,
                                                const DetectorParams& params,
                                                std::size_t num_views, std::uint64_t seed) {
  const std::size_t K = skill.num_classes();
  std::vector<Detection> origins;
  std::vector<std::vector<Detection>> augmented(num_views);

  // Every object consumes the same number of draws whatever its outcome.
  SimRng rng = SimRng::derive(seed, {kTagDetect, static_cast<std::uint64_t>(image.id)});
  for (const auto& obj : image.objects) {
    const double s = skill.per_class[static_cast<std::size_t>(obj.label)];
    const double u_emit = rng.uniform();
    const double n_quality = rng.normal();
    const double n_difficulty = rng.normal();
    const auto e_origin = normals4(rng);
    struct ViewDraw {
      double u_drop;
      double n_quality;
      std::array<double, 4> e;
    };
    std::vector<ViewDraw> view_draws;
    view_draws.reserve(num_views);
    for (std::size_t m = 0; m < num_views; ++m) {
      const double u_drop = rng.uniform();
      const double nq = rng.normal();
      view_draws.push_back({u_drop, nq, normals4(rng)});
    }
    if (!(u_emit < s)) continue;

    const double difficulty = params.box_noise * (1.0 - s) * std::exp(0.5 * n_difficulty);
    auto quality = [&](double n) {
      n = std::clamp(n, -kQualityNoiseClip, kQualityNoiseClip);
      return std::clamp(s + params.confidence_noise * (1.0 - s) * n, 0.0, 1.0);
    };
    origins.push_back(Detection::make(
        image.id, jitter(obj.box, e_origin, difficulty, image),
        ClassDistribution::peaked(K, obj.label, 0.3 + 0.7 * quality(n_quality))));
    for (std::size_t m = 0; m < num_views; ++m) {
      const auto& vd = view_draws[m];
      if (vd.u_drop < 0.5 * (1.0 - s)) continue;
      augmented[m].push_back(Detection::make(
          image.id, jitter(obj.box, vd.e, difficulty, image),
          ClassDistribution::peaked(K, obj.label, 0.3 + 0.7 * quality(vd.n_quality))));
    }
  }

  SimRng fp = SimRng::derive(seed, {kTagFalsePositive, static_cast<std::uint64_t>(image.id)});
  const int num_fp = fp.poisson(params.fp_rate);
  const double floor_mass = 1.0 / static_cast<double>(K) + 0.02;
  for (int k = 0; k < num_fp; ++k) {
    const auto cls = static_cast<ClassIndex>(fp.uniform_index(K));
    const double u = fp.uniform();
    const double mass = std::min(1.0, std::max(floor_mass, 0.05 + 0.35 * u * u));
    const double side = fp.uniform(0.05, 0.25) * std::sqrt(image.width * image.height);
    const double aspect = std::sqrt(fp.uniform(0.5, 2.0));
    const double w = std::min(side * aspect, 0.9 * image.width);
    const double h = std::min(side / aspect, 0.9 * image.height);
    const BBox box = BBox::from_xywh(fp.uniform(0.0, image.width - w),
                                     fp.uniform(0.0, image.height - h), w, h);
    origins.push_back(
        Detection::make(image.id, box, ClassDistribution::peaked(K, cls, mass)));
    for (std::size_t m = 0; m < num_views; ++m) {
      const bool keep = fp.bernoulli(kFpViewKeep);
      const auto e = normals4(fp);
      const double vm = std::min(1.0, std::max(floor_mass, mass * fp.uniform(0.5, 1.5)));
      if (!keep) continue;
      augmented[m].push_back(Detection::make(image.id, jitter(box, e, kFpViewNoise, image),
                                             ClassDistribution::peaked(K, cls, vm)));
    }
  }
  return match_views(origins, augmented);
}

ImbalanceStats imbalance_factor(std::span<const std::size_t> counts) {
  std::size_t mx = 0;
  std::size_t mn = std::numeric_limits<std::size_t>::max();
  ImbalanceStats st;
  for (std::size_t c : counts) {
    if (c == 0) {
      ++st.zero_classes;
      continue;
    }
    mx = std::max(mx, c);
    mn = std::min(mn, c);
  }
  if (mx == 0) throw InvalidInput("imbalance factor: all class counts are zero");
  st.factor = static_cast<double>(mx) / static_cast<double>(mn);
  return st;
}

std::size_t ALState::total_labelled() const {
  return std::accumulate(per_class_labelled.begin(), per_class_labelled.end(), std::size_t{0});
}

std::size_t ALState::total_spent() const {
  std::size_t n = 0;
  for (const auto& e : budget_ledger) n += e.boxes_spent;
  return n;
}

AnnotationSummary annotate(const Dataset& dataset, std::span<const Candidate> pool,
                           const SelectionResult& selected, std::size_t budget,
                           bool fp_consumes_budget, ALState& state) {
  const auto images = index_images(dataset);
  std::unordered_map<std::size_t, std::size_t> by_id;
  by_id.reserve(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) by_id.emplace(pool[i].id, i);

  const int cycle = state.cycle + 1;
  AnnotationSummary out;
  out.labelled_hist.assign(dataset.num_classes, 0);
  for (std::size_t id : selected.selected) {
    if (out.spent >= budget) break;
    const auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw std::logic_error("selected candidate " + std::to_string(id) + " is not in the pool");
    }
    const Detection& det = pool[it->second].detection();
    const std::size_t img = image_index(images, det.image_id);

    for (const auto& g : state.labelled[img]) {
      if (g.origin_cycle < cycle && iou(g.box, det.box) >= kMatchIou) {
        throw std::logic_error("selected box re-labels object " + std::to_string(g.object_id));
      }
    }

    auto& unlabelled = state.pool[img];
    const Image& image = dataset.images[img];
    std::optional<std::size_t> best;
    double best_iou = 0.0;
    for (std::size_t k = 0; k < unlabelled.size(); ++k) {
      const auto obj = std::find_if(image.objects.begin(), image.objects.end(),
                                    [&](const Object& o) { return o.id == unlabelled[k]; });
      const double o = iou(obj->box, det.box);
      if (o >= kMatchIou && o > best_iou) {
        best = k;
        best_iou = o;
      }
    }
    if (!best) {
      ++out.wasted;
      if (fp_consumes_budget) ++out.spent;
      continue;
    }
    const std::int64_t object_id = unlabelled[*best];
    unlabelled.erase(unlabelled.begin() + static_cast<std::ptrdiff_t>(*best));
    const auto obj = std::find_if(image.objects.begin(), image.objects.end(),
                                  [&](const Object& o) { return o.id == object_id; });
    state.labelled[img].push_back({image.id, object_id, obj->box, obj->label, cycle});
    ++state.per_class_labelled[static_cast<std::size_t>(obj->label)];
    ++out.labelled_hist[static_cast<std::size_t>(obj->label)];
    ++out.labelled;
    ++out.spent;
  }
  state.budget_ledger.push_back({cycle, out.spent});
  return out;
}

std::vector<double> evaluate_detector(const Dataset& eval, const DetectorSkill& skill,
                                      const DetectorParams& params, double score_threshold,
                                      std::uint64_t seed) {
  const std::size_t K = eval.num_classes;
  std::vector<std::size_t> tp(K, 0), fp(K, 0), fn(K, 0);
  for (const auto& image : eval.images) {
    const auto dets = simulate_detections(image, skill, params, 0, seed);
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return dets[a].origin.confidence > dets[b].origin.confidence;
    });
    std::vector<bool> matched(image.objects.size(), false);
    for (std::size_t idx : order) {
      const Detection& d = dets[idx].origin;
      if (d.confidence < score_threshold) continue;
      std::optional<std::size_t> best;
      double best_iou = 0.0;
      for (std::size_t j = 0; j < image.objects.size(); ++j) {
        if (matched[j] || image.objects[j].label != d.predicted_label) continue;
        const double o = iou(image.objects[j].box, d.box);
        if (o >= kMatchIou && o > best_iou) {
          best = j;
          best_iou = o;
        }
      }
      const auto c = static_cast<std::size_t>(d.predicted_label);
      if (best) {
        matched[*best] = true;
        ++tp[c];
      } else {
        ++fp[c];
      }
    }
    for (std::size_t j = 0; j < image.objects.size(); ++j) {
      if (!matched[j]) ++fn[static_cast<std::size_t>(image.objects[j].label)];
    }
  }
  std::vector<double> f1(K, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t c = 0; c < K; ++c) {
    const std::size_t denom = 2 * tp[c] + fp[c] + fn[c];
    if (denom > 0) f1[c] = 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
  }
  return f1;
}

double mean_f1(std::span<const double> per_class_f1) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double f : per_class_f1) {
    if (std::isnan(f)) continue;
    sum += f;
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

Experiment::Experiment(ExperimentConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), seed_(seed) {
  cfg_.validate();
  DatasetConfig dc = cfg_.dataset;
  dc.seed = seed;
  dataset_ = generate_dataset(dc);
  DatasetConfig ec = cfg_.dataset;
  ec.seed = SimRng::derive(seed, {kTagEvalDataset}).next_u64();
  ec.num_images = cfg_.eval_images;
  eval_ = generate_dataset(ec);
}

Experiment::Experiment(ExperimentConfig cfg, std::uint64_t seed, Dataset dataset)
    : cfg_(std::move(cfg)), seed_(seed), dataset_(std::move(dataset)) {
  cfg_.validate();
  if (dataset_.num_classes < 2) throw ConfigError("dataset needs at least 2 classes");
  cfg_.dataset.num_classes = dataset_.num_classes;
  DatasetConfig ec = cfg_.dataset;
  ec.seed = SimRng::derive(seed, {kTagEvalDataset}).next_u64();
  ec.num_images = cfg_.eval_images;
  eval_ = generate_dataset(ec);
}

ALState Experiment::initial_state() const {
  const std::size_t n = dataset_.images.size();
  ALState st;
  st.seed = seed_;
  st.labelled.resize(n);
  st.pool.resize(n);
  st.per_class_labelled.assign(dataset_.num_classes, 0);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  SimRng rng = SimRng::derive(seed_, {kTagInitialPool});
  const std::size_t k = std::min(cfg_.initial_images, n);
  for (std::size_t i = 0; i < k; ++i) std::swap(order[i], order[i + rng.uniform_index(n - i)]);
  std::vector<bool> initial(n, false);
  for (std::size_t i = 0; i < k; ++i) initial[order[i]] = true;

  for (std::size_t i = 0; i < n; ++i) {
    const Image& img = dataset_.images[i];
    for (const auto& o : img.objects) {
      if (initial[i]) {
        st.labelled[i].push_back({img.id, o.id, o.box, o.label, 0});
        ++st.per_class_labelled[static_cast<std::size_t>(o.label)];
        ++st.initial_boxes;
      } else {
        st.pool[i].push_back(o.id);
      }
    }
  }
  st.model_counts = train_surrogate(st, {});
  return st;
}

std::vector<std::size_t> Experiment::initial_hist(const ALState& initial) const {
  std::vector<std::size_t> hist(dataset_.num_classes, 0);
  for (const auto& labels : initial.labelled) {
    for (const auto& g : labels) {
      if (g.origin_cycle == 0) ++hist[static_cast<std::size_t>(g.label)];
    }
  }
  return hist;
}

std::vector<double> Experiment::train_surrogate(
    const ALState& state, std::span<const std::vector<Candidate>> candidates) const {
  const std::size_t K = dataset_.num_classes;
  const auto opts = supervision_options(cfg_.pseudo_mode, cfg_.thresholds);
  const TrainingParams& tp = cfg_.training;
  std::vector<double> cls(K, 0.0), box(K, 0.0);

  for (std::size_t i = 0; i < dataset_.images.size(); ++i) {
    if (state.labelled[i].empty()) continue;
    const Image& image = dataset_.images[i];
    const std::span<const Candidate> cands =
        candidates.empty() ? std::span<const Candidate>{} : std::span<const Candidate>(candidates[i]);
    const auto supervision = build_supervision(cands, state.labelled[i], opts);

    // Every true object acts as an ideal anchor.
    std::vector<TrainingSample> samples;
    samples.reserve(image.objects.size());
    for (const auto& o : image.objects) {
      samples.push_back({o.box, std::vector<double>(K + 1, 0.0), {}});
    }
    const auto assignments = assign(samples, supervision, K, cfg_.pos_iou, cfg_.neg_iou);

    std::vector<bool> claimed(supervision.size(), false);
    for (std::size_t j = 0; j < image.objects.size(); ++j) {
      const auto& a = assignments[j];
      const auto c = static_cast<std::size_t>(image.objects[j].label);
      if (a.role_cls == ClsRole::positive) {
        const PseudoLabel& l = supervision[*a.matched_label];
        claimed[*a.matched_label] = true;
        if (l.label == image.objects[j].label) {
          cls[c] += a.w_cls;
          if (a.role_reg) {
            const double q = std::clamp(
                (a.matched_iou - tp.box_quality_floor) / (1.0 - tp.box_quality_floor), -1.0, 1.0);
            box[c] += a.w_box * q;
          }
        } else {
          cls[static_cast<std::size_t>(l.label)] -= tp.noise_penalty * a.w_cls;
        }
      } else if (a.role_cls == ClsRole::negative) {
        cls[c] -= tp.missing_penalty;
      }
    }
    for (std::size_t k = 0; k < supervision.size(); ++k) {
      const PseudoLabel& l = supervision[k];
      if (claimed[k] || l.source != LabelSource::pseudo) continue;
      const auto c = static_cast<std::size_t>(l.label);
      cls[c] -= tp.noise_penalty * l.w_cls;
      box[c] -= tp.noise_penalty * l.w_box;
    }
  }

  std::vector<double> counts(K);
  for (std::size_t c = 0; c < K; ++c) counts[c] = std::max(0.0, 0.5 * (cls[c] + box[c]));
  return counts;
}

bool Experiment::finished(const ALState& state) const {
  if (state.cycle < 0 || static_cast<std::size_t>(state.cycle) >= cfg_.budgets.size()) return true;
  return std::all_of(state.pool.begin(), state.pool.end(),
                     [](const auto& p) { return p.empty(); });
}

Experiment::CycleResult Experiment::run_cycle(const ALState& state) const {
  if (finished(state)) throw InvalidInput("no annotation budget left");
  const std::size_t K = dataset_.num_classes;
  const int cycle = state.cycle + 1;
  const std::size_t budget = cfg_.budgets[static_cast<std::size_t>(state.cycle)];
  const auto skill = DetectorSkill::from_counts(state.model_counts, cfg_.detector.kappa);
  const std::uint64_t cycle_seed =
      SimRng::derive(seed_, {kTagCycle, static_cast<std::uint64_t>(cycle)}).next_u64();

  // Detect and filter, image by image; candidate ids are global and consecutive.
  std::vector<std::vector<Candidate>> per_image(dataset_.images.size());
  std::size_t next_id = 0;
  for (std::size_t i = 0; i < dataset_.images.size(); ++i) {
    const auto views = simulate_detections(dataset_.images[i], skill, cfg_.detector,
                                           cfg_.num_views, cycle_seed);
    per_image[i] = filter_candidates(views, state.labelled[i], cfg_.tau_cand, next_id);
    next_id += per_image[i].size();
  }

  // Pseudo labels of the current model, for the class prior and diagnostics.
  const auto prior_opts = supervision_options(PseudoMode::task_soft, cfg_.thresholds);
  std::vector<PseudoLabel> prior_labels;
  CycleReport report;
  report.cycle = cycle;
  report.strategy = std::string(to_string(cfg_.strategy));
  report.seed = seed_;
  report.pseudo_hist.assign(K, 0);
  std::vector<std::size_t> pseudo_correct(K, 0), covered(K, 0), unlabelled_objects(K, 0);
  for (std::size_t i = 0; i < dataset_.images.size(); ++i) {
    const Image& image = dataset_.images[i];
    const auto sup = build_supervision(per_image[i], state.labelled[i], prior_opts);
    std::vector<bool> object_covered(image.objects.size(), false);
    for (const auto& l : sup) {
      if (l.source == LabelSource::ground_truth) {
        if (cfg_.prior_includes_gt) prior_labels.push_back(l);
        continue;
      }
      if (l.w_cls <= 0.0) continue;
      prior_labels.push_back(l);
      ++report.pseudo_hist[static_cast<std::size_t>(l.label)];
      for (std::size_t j = 0; j < image.objects.size(); ++j) {
        const auto& obj = image.objects[j];
        if (obj.label == l.label && iou(obj.box, l.box) >= kMatchIou) {
          ++pseudo_correct[static_cast<std::size_t>(l.label)];
          object_covered[j] = true;
          break;
        }
      }
    }
    for (std::int64_t id : state.pool[i]) {
      for (std::size_t j = 0; j < image.objects.size(); ++j) {
        if (image.objects[j].id != id) continue;
        const auto c = static_cast<std::size_t>(image.objects[j].label);
        ++unlabelled_objects[c];
        if (object_covered[j]) ++covered[c];
      }
    }
  }
  report.pseudo_precision.assign(K, 0.0);
  report.pseudo_recall.assign(K, 0.0);
  for (std::size_t c = 0; c < K; ++c) {
    if (report.pseudo_hist[c] > 0) {
      report.pseudo_precision[c] =
          static_cast<double>(pseudo_correct[c]) / static_cast<double>(report.pseudo_hist[c]);
    }
    if (unlabelled_objects[c] > 0) {
      report.pseudo_recall[c] =
          static_cast<double>(covered[c]) / static_cast<double>(unlabelled_objects[c]);
    }
  }
  const auto prior = estimate_class_distribution(prior_labels, K);

  std::vector<Candidate> pool;
  pool.reserve(next_id);
  std::vector<std::size_t> pool_image;
  pool_image.reserve(next_id);
  for (std::size_t i = 0; i < per_image.size(); ++i) {
    for (const auto& c : per_image[i]) {
      pool.push_back(c);
      pool_image.push_back(i);
    }
  }
  BalanceConfig balance = cfg_.balance;
  balance.enabled = cfg_.balance.enabled && cfg_.strategy == Strategy::balanced;
  score_candidates(pool, prior, balance, cfg_.beta);

  const std::size_t k = cfg_.fp_consumes_budget ? budget : pool.size();
  SelectionResult selection;
  switch (cfg_.strategy) {
    case Strategy::uncertainty:
    case Strategy::balanced:
      selection = select_top_k(pool, k);
      break;
    case Strategy::entropy:
      selection = strategy_entropy(pool, k);
      break;
    case Strategy::random:
      selection = strategy_random(
          pool, k,
          SimRng::derive(seed_, {kTagRandomStrategy, static_cast<std::uint64_t>(cycle)}).next_u64());
      break;
    case Strategy::coreset: {
      std::vector<std::vector<double>> features;
      features.reserve(pool.size());
      for (std::size_t p = 0; p < pool.size(); ++p) {
        features.push_back(box_features(pool[p].detection(), dataset_.images[pool_image[p]]));
      }
      std::vector<std::vector<double>> labelled;
      for (std::size_t i = 0; i < state.labelled.size(); ++i) {
        for (const auto& g : state.labelled[i]) {
          labelled.push_back(box_features(g, dataset_.images[i], K));
        }
      }
      selection = strategy_coreset(pool, features, labelled, k);
      break;
    }
  }

  CycleResult out{state, {}};
  ALState& next = out.state;
  const auto summary =
      annotate(dataset_, pool, selection, budget, cfg_.fp_consumes_budget, next);
  next.cycle = cycle;
  next.model_counts = train_surrogate(next, per_image);

  report.budget_spent = summary.spent;
  report.selected_hist = summary.labelled_hist;
  report.labelled_hist = next.per_class_labelled;
  report.imbalance_selected = imbalance_or_none(report.selected_hist);
  report.imbalance_pseudo = imbalance_or_none(report.pseudo_hist);
  report.imbalance_labelled = imbalance_or_none(report.labelled_hist);
  report.per_class_f1 = evaluate_detector(
      eval_, DetectorSkill::from_counts(next.model_counts, cfg_.detector.kappa), cfg_.detector,
      cfg_.eval_score_threshold, SimRng::derive(seed_, {kTagEvaluation}).next_u64());
  report.detection_quality = mean_f1(report.per_class_f1);
  out.report = std::move(report);
  return out;
}

std::vector<CycleReport> Experiment::run_to_end(ALState& state) const {
  std::vector<CycleReport> reports;
  while (!finished(state)) {
    auto r = run_cycle(state);
    state = std::move(r.state);
    reports.push_back(std::move(r.report));
  }
  return reports;
}

}  // namespace boxal
