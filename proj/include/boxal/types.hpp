#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace boxal {

using ImageId = std::int64_t;
using ClassIndex = int;

// Axis-aligned box in pixel coordinates, (x1, y1) top-left, (x2, y2) bottom-right.
struct BBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 1.0;
  double y2 = 1.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x1 + x2); }
  double center_y() const { return 0.5 * (y1 + y2); }

  // Finite corners with strictly positive extent.
  bool valid() const;

  static BBox from_xywh(double x, double y, double w, double h) { return {x, y, x + w, y + h}; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

// Probability vector over K >= 2 foreground classes. Construction validates.
class ClassDistribution {
 public:
  static constexpr double kSumTolerance = 1e-9;

  explicit ClassDistribution(std::vector<double> probs);

  static ClassDistribution uniform(std::size_t num_classes);
  static ClassDistribution point_mass(std::size_t num_classes, ClassIndex cls);
  // Peak `mass` on `cls`, remainder spread evenly over the other classes.
  static ClassDistribution peaked(std::size_t num_classes, ClassIndex cls, double mass);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const { return probs_; }

  // Lowest index among the maximal entries.
  ClassIndex argmax() const;
  double max() const { return probs_[static_cast<std::size_t>(argmax())]; }

  friend bool operator==(const ClassDistribution&, const ClassDistribution&) = default;

 private:
  std::vector<double> probs_;
};

struct Detection {
  ImageId image_id = 0;
  BBox box;
  ClassDistribution dist = ClassDistribution::uniform(2);
  double confidence = 0.5;     // max entry of dist
  ClassIndex predicted_label = 0;  // argmax of dist

  // Derives confidence and predicted_label from `dist`.
  static Detection make(ImageId image_id, const BBox& box, ClassDistribution dist);
};

// A detection on the original image plus its matched counterpart (if any) in
// each augmented view, already mapped back to original coordinates.
struct AugmentedViews {
  Detection origin;
  std::vector<std::optional<Detection>> views;

  std::size_t num_augmentations() const { return views.size(); }
};

struct Candidate {
  std::size_t id = 0;
  AugmentedViews views;
  double uncertainty = 0.0;
  double acquisition = 0.0;

  const Detection& detection() const { return views.origin; }
};

enum class LabelSource { ground_truth, pseudo };

struct GtLabel {
  ImageId image_id = 0;
  std::int64_t object_id = -1;
  BBox box;
  ClassIndex label = 0;
  int origin_cycle = 0;  // 0 = initial fully-labelled pool, n > 0 = AL cycle n

  friend bool operator==(const GtLabel&, const GtLabel&) = default;
};

struct PseudoLabel {
  ImageId image_id = 0;
  BBox box;
  ClassIndex label = 0;
  double confidence = 1.0;
  double cons = 1.0;
  double w_cls = 1.0;
  double w_box = 1.0;
  LabelSource source = LabelSource::ground_truth;
};

}  // namespace boxal
