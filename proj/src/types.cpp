#include "boxal/types.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "boxal/error.hpp"

namespace boxal {

bool BBox::valid() const {
  return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
         x1 < x2 && y1 < y2;
}

ClassDistribution::ClassDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.size() < 2) {
    throw InvalidInput("class distribution needs at least 2 classes, got " +
                       std::to_string(probs_.size()));
  }
  double sum = 0.0;
  for (double p : probs_) {
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
      throw InvalidInput("class probability outside [0,1]: " + std::to_string(p));
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw InvalidInput("class probabilities sum to " + std::to_string(sum));
  }
}

ClassDistribution ClassDistribution::uniform(std::size_t num_classes) {
  return ClassDistribution(
      std::vector<double>(num_classes, 1.0 / static_cast<double>(num_classes)));
}

ClassDistribution ClassDistribution::point_mass(std::size_t num_classes, ClassIndex cls) {
  return peaked(num_classes, cls, 1.0);
}

ClassDistribution ClassDistribution::peaked(std::size_t num_classes, ClassIndex cls,
                                            double mass) {
  if (num_classes < 2 || cls < 0 || static_cast<std::size_t>(cls) >= num_classes) {
    throw InvalidInput("peaked distribution: class " + std::to_string(cls) +
                       " out of range for K=" + std::to_string(num_classes));
  }
  const double rest = (1.0 - mass) / static_cast<double>(num_classes - 1);
  std::vector<double> probs(num_classes, rest);
  probs[static_cast<std::size_t>(cls)] = mass;
  return ClassDistribution(std::move(probs));
}

ClassIndex ClassDistribution::argmax() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs_.size(); ++i) {
    if (probs_[i] > probs_[best]) best = i;
  }
  return static_cast<ClassIndex>(best);
}

Detection Detection::make(ImageId image_id, const BBox& box, ClassDistribution dist) {
  Detection d;
  d.image_id = image_id;
  d.box = box;
  d.predicted_label = dist.argmax();
  d.confidence = dist.max();
  d.dist = std::move(dist);
  return d;
}

}  // namespace boxal
