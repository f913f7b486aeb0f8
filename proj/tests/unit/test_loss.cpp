#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "boxal/error.hpp"
#include "boxal/loss.hpp"
#include "../support/checks.hpp"
#include "../support/oracles.hpp"

using namespace boxal;

namespace {

PseudoLabel label(BBox box, ClassIndex cls, double w_cls, double w_box) {
  PseudoLabel l;
  l.box = box;
  l.label = cls;
  l.w_cls = w_cls;
  l.w_box = w_box;
  l.source = LabelSource::pseudo;
  return l;
}

// Two logits (one class plus background) whose cross entropy for class 0 is `ce`.
std::vector<double> logits_with_ce(double ce) { return {0.0, std::log(std::expm1(ce))}; }

struct Batch {
  std::vector<TrainingSample> samples;
  std::vector<Assignment> assignments;
};

Batch random_batch(oracle::Gen& g, std::size_t K, int max_samples) {
  Batch b;
  const int n = g.integer(1, max_samples);
  for (int i = 0; i < n; ++i) {
    TrainingSample s;
    s.sample_box = g.box(50);
    s.cls_logits.resize(K + 1);
    for (double& v : s.cls_logits) v = g.real(-4, 4);
    for (double& v : s.reg_pred) v = g.real(-2, 2);
    Assignment a;
    const int role = g.integer(0, 2);
    a.role_cls = role == 0 ? ClsRole::positive : (role == 1 ? ClsRole::negative : ClsRole::ignored);
    a.t_cls = role == 0 ? g.integer(0, static_cast<int>(K) - 1) : static_cast<ClassIndex>(K);
    a.w_cls = g.coin(0.2) ? 0.0 : g.real(0, 1);
    a.w_box = g.coin(0.2) ? 0.0 : g.real(0, 1);
    a.role_reg = role == 0 && a.w_box > 0.0;
    for (double& v : a.t_reg) v = g.real(-2, 2);
    b.samples.push_back(s);
    b.assignments.push_back(a);
  }
  return b;
}

// Loss written out directly from the definition of each term.
double reference_total(const Batch& b) {
  double pos = 0, neg = 0, reg = 0;
  std::size_t np = 0, nn = 0, nr = 0;
  for (std::size_t i = 0; i < b.samples.size(); ++i) {
    const auto& s = b.samples[i];
    const auto& a = b.assignments[i];
    if (a.role_cls == ClsRole::positive) {
      ++np;
      pos += a.w_cls * oracle::reference_ce(s.cls_logits, static_cast<std::size_t>(a.t_cls));
      if (a.role_reg) {
        ++nr;
        reg += a.w_box * oracle::reference_smooth_l1(s.reg_pred, a.t_reg);
      }
    } else if (a.role_cls == ClsRole::negative) {
      ++nn;
      neg += oracle::reference_ce(s.cls_logits, s.cls_logits.size() - 1);
    }
  }
  return (np ? pos / static_cast<double>(np) : 0.0) + (nn ? neg / static_cast<double>(nn) : 0.0) +
         (nr ? reg / static_cast<double>(nr) : 0.0);
}

// Packs every logit and regression output into one flat vector.
std::vector<double> flatten(const std::vector<TrainingSample>& samples) {
  std::vector<double> x;
  for (const auto& s : samples) {
    x.insert(x.end(), s.cls_logits.begin(), s.cls_logits.end());
    x.insert(x.end(), s.reg_pred.begin(), s.reg_pred.end());
  }
  return x;
}

std::vector<TrainingSample> unflatten(std::vector<TrainingSample> samples, std::span<const double> x) {
  std::size_t k = 0;
  for (auto& s : samples) {
    for (double& v : s.cls_logits) v = x[k++];
    for (double& v : s.reg_pred) v = x[k++];
  }
  return samples;
}

}  // namespace

TEST(Deltas, IdentityAndScale) {
  const BBox s{10, 10, 30, 50};
  for (double d : regression_deltas(s, s)) EXPECT_DOUBLE_EQ(d, 0.0);
  const auto d = regression_deltas(s, {0, 10, 40, 50});
  EXPECT_DOUBLE_EQ(d[0], 0.0);
  EXPECT_DOUBLE_EQ(d[1], 0.0);
  EXPECT_NEAR(d[2], std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(d[3], 0.0);
  EXPECT_THROW(regression_deltas({0, 0, 0, 5}, s), InvalidInput);
}

TEST(DeltasProperty, DecodeInvertsEncode) {
  oracle::Gen g(71);
  for (int i = 0; i < 10000; ++i) {
    const BBox s = g.box(), t = g.box();
    const BBox back = decode_deltas(s, regression_deltas(s, t));
    ASSERT_NEAR(back.x1, t.x1, 1e-9);
    ASSERT_NEAR(back.y1, t.y1, 1e-9);
    ASSERT_NEAR(back.x2, t.x2, 1e-9);
    ASSERT_NEAR(back.y2, t.y2, 1e-9);
  }
}

TEST(Assign, RolesFromThresholds) {
  const std::vector<PseudoLabel> labels{label({0, 0, 10, 10}, 2, 1.0, 0.0)};
  const std::vector<TrainingSample> samples{{{0, 0, 10, 10}, std::vector<double>(4, 0.0), {}},
                                            {{0, 0, 10, 4.5}, std::vector<double>(4, 0.0), {}},
                                            {{50, 50, 60, 60}, std::vector<double>(4, 0.0), {}}};
  const auto a = assign(samples, labels, 3);
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a[0].role_cls, ClsRole::positive);
  EXPECT_EQ(a[0].t_cls, 2);
  EXPECT_DOUBLE_EQ(a[0].w_cls, 1.0);
  EXPECT_DOUBLE_EQ(a[0].w_box, 0.0);
  EXPECT_FALSE(a[0].role_reg);
  EXPECT_EQ(a[0].matched_label, std::optional<std::size_t>{0});
  EXPECT_EQ(a[1].role_cls, ClsRole::ignored);  // IoU 0.45
  EXPECT_FALSE(a[1].role_reg);
  EXPECT_EQ(a[2].role_cls, ClsRole::negative);
  EXPECT_EQ(a[2].t_cls, 3);
}

TEST(Assign, FullyWeightedLabelGivesBothRoles) {
  const std::vector<PseudoLabel> labels{label({0, 0, 10, 10}, 1, 1.0, 1.0)};
  const std::vector<TrainingSample> samples{{{0, 0, 10, 9}, std::vector<double>(4, 0.0), {}},
                                            {{0, 0, 10, 1}, std::vector<double>(4, 0.0), {}}};
  const auto a = assign(samples, labels, 3);
  EXPECT_NEAR(a[0].matched_iou, 0.9, 1e-12);
  EXPECT_EQ(a[0].role_cls, ClsRole::positive);
  EXPECT_TRUE(a[0].role_reg);
  EXPECT_NEAR(a[1].matched_iou, 0.1, 1e-12);
  EXPECT_EQ(a[1].role_cls, ClsRole::negative);
  EXPECT_FALSE(a[1].role_reg);
}

TEST(Assign, NoLabelsMeansBackground) {
  const std::vector<TrainingSample> samples{{{0, 0, 10, 10}, std::vector<double>(3, 0.0), {}}};
  const auto a = assign(samples, {}, 2);
  EXPECT_EQ(a[0].role_cls, ClsRole::negative);
  EXPECT_EQ(a[0].t_cls, 2);
}

TEST(Assign, BadThresholdsThrow) {
  EXPECT_THROW(assign({}, {}, 2, 0.3, 0.4), InvalidInput);
  EXPECT_THROW(assign({}, {}, 2, 1.5, 0.4), InvalidInput);
}

TEST(AssignProperty, AgreesWithExhaustiveSearch) {
  oracle::Gen g(72);
  for (int i = 0; i < 5000; ++i) {
    const std::string err = checks::assign_instance(g);
    ASSERT_TRUE(err.empty()) << "instance " << i << ": " << err;
  }
}

TEST(Loss, PositiveTermNormalizedByCount) {
  std::vector<TrainingSample> samples{{{0, 0, 1, 1}, logits_with_ce(0.2), {}},
                                      {{0, 0, 1, 1}, logits_with_ce(0.4), {}}};
  std::vector<Assignment> a(2);
  for (auto& x : a) {
    x.role_cls = ClsRole::positive;
    x.t_cls = 0;
  }
  a[0].w_cls = 0.5;
  a[1].w_cls = 1.0;
  const auto out = weighted_loss(samples, a);
  EXPECT_NEAR(out.pos_cls, 0.25, 1e-12);
  EXPECT_EQ(out.num_pos_cls, 2u);
  EXPECT_DOUBLE_EQ(out.reg, 0.0);
  EXPECT_DOUBLE_EQ(out.neg_cls, 0.0);
}

TEST(Loss, ZeroWeightPositiveStillCounts) {
  std::vector<TrainingSample> samples{{{0, 0, 1, 1}, logits_with_ce(0.4), {}},
                                      {{0, 0, 1, 1}, logits_with_ce(0.9), {}}};
  std::vector<Assignment> a(2);
  for (auto& x : a) {
    x.role_cls = ClsRole::positive;
    x.t_cls = 0;
  }
  a[1].w_cls = 0.0;
  EXPECT_NEAR(weighted_loss(samples, a).pos_cls, 0.2, 1e-12);
  EXPECT_NEAR(weighted_loss(samples, a, {true}).pos_cls, 0.4, 1e-12);
}

TEST(Loss, EmptySetsContributeZero) {
  const auto out = weighted_loss({}, {});
  EXPECT_EQ(out.total, 0.0);
}

TEST(Loss, MismatchedLengthsAndNonFiniteThrow) {
  std::vector<TrainingSample> samples{{{0, 0, 1, 1}, {0.0, NAN}, {}}};
  std::vector<Assignment> a(1);
  EXPECT_THROW(weighted_loss(samples, {}), InvalidInput);
  EXPECT_THROW(weighted_loss(samples, a), InvalidInput);
  samples[0].cls_logits = {0.0, 0.0};
  samples[0].reg_pred[2] = INFINITY;
  EXPECT_THROW(weighted_loss(samples, a), InvalidInput);
  EXPECT_THROW(weighted_loss_gradient(samples, a), InvalidInput);
}

TEST(Loss, SmoothL1Branches) {
  EXPECT_DOUBLE_EQ(smooth_l1({0.5, 0, 0, 0}, {0, 0, 0, 0}), 0.125);
  EXPECT_DOUBLE_EQ(smooth_l1({0, 3, 0, 0}, {0, 0, 0, 0}), 2.5);
  EXPECT_DOUBLE_EQ(smooth_l1({1, 0, 0, 0}, {0, 0, 0, 0}), 0.5);
}

TEST(LossProperty, MatchesReferenceBitwise) {
  oracle::Gen g(73);
  for (int i = 0; i < 3000; ++i) {
    const Batch b = random_batch(g, 4, 8);
    ASSERT_EQ(weighted_loss(b.samples, b.assignments).total, reference_total(b));
  }
}

TEST(LossProperty, UnitWeightsEqualUnweightedLoss) {
  oracle::Gen g(77);
  for (int i = 0; i < 3000; ++i) {
    Batch b = random_batch(g, 4, 8);
    for (auto& a : b.assignments) {
      a.w_cls = 1.0;
      a.w_box = 1.0;
      a.role_reg = a.role_cls == ClsRole::positive;
    }
    double pos = 0, neg = 0, reg = 0;
    std::size_t np = 0, nn = 0;
    for (std::size_t k = 0; k < b.samples.size(); ++k) {
      const auto& s = b.samples[k];
      const auto& a = b.assignments[k];
      if (a.role_cls == ClsRole::positive) {
        ++np;
        pos += oracle::reference_ce(s.cls_logits, static_cast<std::size_t>(a.t_cls));
        reg += oracle::reference_smooth_l1(s.reg_pred, a.t_reg);
      } else if (a.role_cls == ClsRole::negative) {
        ++nn;
        neg += oracle::reference_ce(s.cls_logits, s.cls_logits.size() - 1);
      }
    }
    const double n_pos = static_cast<double>(np), n_neg = static_cast<double>(nn);
    const double want = (np ? pos / n_pos : 0.0) + (nn ? neg / n_neg : 0.0) + (np ? reg / n_pos : 0.0);
    ASSERT_EQ(weighted_loss(b.samples, b.assignments).total, want);
  }
}

TEST(LossProperty, LinearInPositiveWeights) {
  oracle::Gen g(74);
  for (int i = 0; i < 3000; ++i) {
    Batch b = random_batch(g, 3, 6);
    const auto base = weighted_loss(b.samples, b.assignments);
    const double c = g.real(0, 3);
    for (auto& a : b.assignments) {
      a.w_cls *= c;
      a.w_box *= c;
    }
    const auto scaled = weighted_loss(b.samples, b.assignments);
    ASSERT_NEAR(scaled.pos_cls, c * base.pos_cls, 1e-9 * (1 + base.pos_cls));
    ASSERT_NEAR(scaled.reg, c * base.reg, 1e-9 * (1 + base.reg));
    ASSERT_EQ(scaled.neg_cls, base.neg_cls);
  }
}

TEST(LossProperty, PermutationInvariant) {
  oracle::Gen g(75);
  for (int i = 0; i < 3000; ++i) {
    Batch b = random_batch(g, 3, 8);
    const double before = weighted_loss(b.samples, b.assignments).total;
    std::vector<std::size_t> perm(b.samples.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), g.engine());
    Batch p;
    for (std::size_t k : perm) {
      p.samples.push_back(b.samples[k]);
      p.assignments.push_back(b.assignments[k]);
    }
    ASSERT_NEAR(weighted_loss(p.samples, p.assignments).total, before, 1e-12 * (1 + before));
  }
}

TEST(GradientProperty, AnalyticMatchesCentralDifferences) {
  oracle::Gen g(76);
  for (int i = 0; i < 300; ++i) {
    Batch b = random_batch(g, 4, 6);
    // Keep regression residuals away from the SmoothL1 kinks at +-1.
    for (std::size_t s = 0; s < b.samples.size(); ++s) {
      for (std::size_t k = 0; k < 4; ++k) {
        const double d = b.samples[s].reg_pred[k] - b.assignments[s].t_reg[k];
        if (std::abs(std::abs(d) - 1.0) < 1e-2) b.samples[s].reg_pred[k] += 0.05;
      }
    }
    const bool mass = g.coin();
    const LossOptions opts{mass};
    const auto fn = [&](std::span<const double> x) {
      return weighted_loss(unflatten(b.samples, x), b.assignments, opts).total;
    };
    const auto numeric = numeric_gradient(fn, flatten(b.samples), 1e-4);
    const auto analytic = weighted_loss_gradient(b.samples, b.assignments, opts);
    std::size_t k = 0;
    for (const auto& sg : analytic) {
      for (double v : sg.cls_logits) ASSERT_NEAR(v, numeric[k++], 1e-5);
      for (double v : sg.reg_pred) ASSERT_NEAR(v, numeric[k++], 1e-5);
    }
  }
}

TEST(Gradient, ZeroWeightAndExactTargetGiveZero) {
  std::vector<TrainingSample> samples{{{0, 0, 1, 1}, {1.0, -1.0, 0.5}, {0.3, 0.1, 0, 0}},
                                      {{0, 0, 1, 1}, {0.2, 0.0, 0.1}, {0.3, -0.2, 0.4, 0}}};
  std::vector<Assignment> a(2);
  for (auto& x : a) {
    x.role_cls = ClsRole::positive;
    x.role_reg = true;
    x.t_cls = 0;
  }
  a[0].w_cls = 0.0;
  a[0].w_box = 0.0;
  a[0].role_reg = false;
  a[1].t_reg = samples[1].reg_pred;
  const auto grad = weighted_loss_gradient(samples, a);
  const auto fn = [&](std::span<const double> x) {
    return weighted_loss(unflatten(samples, x), a).total;
  };
  const auto numeric = numeric_gradient(fn, flatten(samples), 1e-4);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(numeric[k], 0.0);
  for (double v : grad[0].cls_logits) EXPECT_EQ(v, 0.0);
  for (double v : grad[0].reg_pred) EXPECT_EQ(v, 0.0);
  for (double v : grad[1].reg_pred) EXPECT_EQ(v, 0.0);
}

TEST(Gradient, NumericEpsilonRange) {
  const auto fn = [](std::span<const double> x) { return x[0] * x[0]; };
  const std::vector<double> x{3.0};
  EXPECT_NEAR(numeric_gradient(fn, x, 1e-4)[0], 6.0, 1e-8);
  EXPECT_THROW(numeric_gradient(fn, x, 0.0), InvalidInput);
  EXPECT_THROW(numeric_gradient(fn, x, 0.1), InvalidInput);
}

TEST(CrossEntropy, TargetOutOfRangeThrows) {
  const std::vector<double> l{0.0, 1.0};
  EXPECT_THROW(softmax_cross_entropy(l, 2), InvalidInput);
  EXPECT_THROW(softmax_cross_entropy(l, -1), InvalidInput);
  EXPECT_NEAR(softmax_cross_entropy(l, 0), oracle::reference_ce(l, 0), 1e-15);
}
