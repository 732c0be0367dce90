#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "dmfbs/nd/gradcheck.hpp"
#include "dmfbs/objective/losses.hpp"
#include "dmfbs/objective/update.hpp"
#include "fixtures.hpp"

using namespace dmfbs;
using namespace dmfbs::objective;
using nd::Tape;
using nd::Tensor;

namespace {

Var<double> row(Tape<double>& t, std::vector<double> v) { return t.constant(Tensor<double>::row(std::move(v))); }
Var<double> num(Tape<double>& t, double v) { return t.constant(Tensor<double>::scalar(v)); }

const MetaDataset& meta() {
  static const MetaDataset m = fixtures::small_meta(3, 21);
  return m;
}

}  // namespace

TEST(LossSur, HandValues) {
  Tape<double> t;
  auto pred = t.constant(Tensor<double>({3, 1}, {0.1, 0.2, 0.3}));
  EXPECT_DOUBLE_EQ(loss_sur(pred, Tensor<double>({3}, {0.1, 0.2, 0.3})).item(), 0.0);
  EXPECT_NEAR(loss_sur(pred, Tensor<double>({3}, {1.1, 0.2, 0.3})).item(), 1.0, 1e-15);
  EXPECT_NEAR(loss_sur(pred, Tensor<double>({3}, {0.0, 0.0, 1.0})).item(), 0.01 + 0.04 + 0.49, 1e-15);
  EXPECT_THROW(loss_sur(pred, Tensor<double>({2}, {0.0, 0.0})), DimensionError);
}

TEST(LossMr, ZeroCases) {
  Tape<double> t;
  std::vector<Var<double>> mf{row(t, {0, 0}), row(t, {1, 1})};
  // Same prediction across groups.
  std::vector<MRItem<double>> same{{num(t, 0.4), 3, 0}, {num(t, 0.4), 3, 1}};
  EXPECT_DOUBLE_EQ(loss_mr(t, same, mf).item(), 0.0);
  // Different configs never pair.
  std::vector<MRItem<double>> apart{{num(t, 0.0), 1, 0}, {num(t, 5.0), 2, 1}};
  EXPECT_DOUBLE_EQ(loss_mr(t, apart, mf).item(), 0.0);
  // Pairs within one group are skipped.
  std::vector<MRItem<double>> inside{{num(t, 0.0), 1, 0}, {num(t, 5.0), 1, 0}};
  EXPECT_DOUBLE_EQ(loss_mr(t, inside, mf).item(), 0.0);
}

TEST(LossMr, ThreeGroupOracle) {
  Tape<double> t;
  std::vector<Var<double>> mf{row(t, {0, 0}), row(t, {3, 4}), row(t, {0, 1})};
  std::vector<MRItem<double>> items{{num(t, 1.0), 7, 0}, {num(t, 0.5), 7, 1}, {num(t, 2.0), 3, 0},
                                    {num(t, 0.0), 3, 2}, {num(t, 9.0), 5, 1}};
  EXPECT_NEAR(loss_mr(t, items, mf).item(), 1.4732022514355407, 1e-14);
}

TEST(LossDbi, HandValues) {
  Tape<double> t;
  EXPECT_NEAR(loss_dbi_from_similarity(t, {{num(t, 0.5), 1}}, 1e-7).item(), std::log(2.0), 1e-15);
  EXPECT_NEAR(loss_dbi_from_similarity(t, {{num(t, 0.5), 0}}, 1e-7).item(), std::log(2.0), 1e-15);
  // Clamping keeps a perfect miss finite.
  EXPECT_NEAR(loss_dbi_from_similarity(t, {{num(t, 0.0), 1}}, 1e-7).item(), -std::log(1e-7), 1e-9);
  EXPECT_NEAR(loss_dbi_from_similarity(t, {{num(t, 1.0), 1}}, 1e-7).item(), -std::log(1 - 1e-7), 1e-12);
  EXPECT_NEAR(loss_dbi_from_similarity(t, {{num(t, 0.9), 1}, {num(t, 0.2), 0}, {num(t, 0.6), 1}, {num(t, 0.7), 0}}, 1e-7)
                  .item(),
              2.043302495063963, 1e-14);
  EXPECT_THROW(loss_dbi_from_similarity(t, {}, 1e-7), UsageError);
}

TEST(LossDbi, FromMetafeatureNodes) {
  Tape<double> t;
  std::vector<DBIExample<double>> ex{{row(t, {0, 0}), row(t, {0, 0}), 1}, {row(t, {std::log(2.0)}), row(t, {0}), 0}};
  EXPECT_NEAR(loss_dbi(t, ex, 1e-7).item(), -std::log(1 - 1e-7) + std::log(2.0), 1e-12);
}

TEST(Combined, WeightsApply) {
  Tape<double> t;
  TrainConfig cfg;
  EXPECT_NEAR(combined_loss(num(t, 1.0), num(t, 1.0), num(t, 1.0), cfg).item(), 11.1, 1e-14);
  cfg.alpha_mr = 0;
  cfg.alpha_dbi = 0;
  EXPECT_DOUBLE_EQ(combined_loss(num(t, 2.5), num(t, 7.0), num(t, 9.0), cfg).item(), 2.5);
}

TEST(UpdateModel, ZeroGradientLeavesParamsUnchanged) {
  // A zero head with targets that are all zero: SUR and its gradient vanish,
  // and with alpha = 0 nothing else contributes.
  MetaDataset m = meta();
  for (auto& [id, r] : m.responses)
    for (auto& [c, l] : r) l = 0.0;
  auto spec = fixtures::full_spec(m);
  spec.sur.zero_head = true;
  auto p = surrogate::init_model<float>(spec, 1);
  const auto before = p;
  TrainConfig cfg;
  cfg.alpha_mr = 0;
  cfg.alpha_dbi = 0;
  auto opt = nd::OptimizerState::gd(0.1);
  std::mt19937_64 rng(2);
  const auto terms = update_model(m, p, opt, m.datasets[0].id, spec, cfg, rng);
  EXPECT_DOUBLE_EQ(terms.total, 0.0);
  EXPECT_EQ(p, before);
}

TEST(UpdateModel, BitwiseDeterministic) {
  const auto spec = fixtures::full_spec(meta());
  auto run = [&] {
    auto p = surrogate::init_model<float>(spec, 3);
    auto opt = nd::OptimizerState::adam(0.01);
    std::mt19937_64 rng(4);
    for (int i = 0; i < 3; ++i) update_model(meta(), p, opt, meta().datasets[i % 3].id, spec, TrainConfig{}, rng);
    return p;
  };
  EXPECT_EQ(run(), run());
}

TEST(UpdateModel, SamplesRequestedBatch) {
  TrainConfig cfg;
  std::mt19937_64 rng(5);
  const auto plan = sample_plan(meta(), meta().datasets[0].id, cfg, rng);
  EXPECT_EQ(plan.configs.size(), 16u);
  EXPECT_TRUE(plan.has_other);
  EXPECT_NE(plan.other.id, meta().datasets[0].id);
  EXPECT_EQ(plan.dbi_batches.size(), 3u);
  for (std::size_t i = 0; i < plan.configs.size(); ++i) {
    EXPECT_EQ(plan.losses[i], meta().loss(meta().datasets[0].id, plan.configs[i]));
  }
}

TEST(UpdateModel, FewConfigsAreRepeated) {
  MetaDataset m = meta();
  auto& row = m.responses[m.datasets[0].id];
  row = {{0, 1.0}, {1, 2.0}};
  TrainConfig cfg;
  std::mt19937_64 rng(6);
  const auto plan = sample_plan(m, m.datasets[0].id, cfg, rng);
  EXPECT_EQ(plan.configs.size(), 16u);
  for (int c : plan.configs) EXPECT_TRUE(c == 0 || c == 1);
  EXPECT_TRUE(plan.has_other);
}

TEST(UpdateModel, GradientStepMatchesFiniteDifferenceOnSurTerm) {
  // Plain GD with only the SUR term: theta' - theta = -lr * dL/dtheta, which
  // is checked against central differences of the rebuilt loss.
  const auto spec = fixtures::tiny_spec(meta());
  TrainConfig cfg;
  cfg.alpha_mr = 0;
  cfg.alpha_dbi = 0;
  cfg.batch_size = 1;
  const std::string target = meta().datasets[1].id;
  auto p = surrogate::init_model<double>(spec, 7);
  const auto before = p;
  std::mt19937_64 rng(8), replay(8);
  const UpdatePlan plan = sample_plan(meta(), target, cfg, replay, false, false);
  auto opt = nd::OptimizerState::gd(0.5);
  update_model(meta(), p, opt, target, spec, cfg, rng);

  const double h = 1e-6;
  for (const char* name : {"sur.psi2.out.w", "sur.psi1.l0.b", "mfe.e3.out.w"}) {
    auto plus = before, minus = before;
    plus.at(name)[0] += h;
    minus.at(name)[0] -= h;
    auto eval = [&](nd::ParamSet<double>& ps) {
      Tape<double> t(&ps, true);
      return plan_loss(t, plan, meta().grid, spec, cfg).item();
    };
    const double fd = (eval(plus) - eval(minus)) / (2 * h);
    EXPECT_NEAR(p.at(name)[0] - before.at(name)[0], -0.5 * fd, 1e-6) << name;
  }
}

TEST(UpdateModel, CombinedLossGradientCheck) {
  const auto spec = fixtures::tiny_spec(meta());
  TrainConfig cfg;
  cfg.batch_size = 4;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    std::mt19937_64 rng(seed);
    const UpdatePlan plan = sample_plan(meta(), meta().datasets[seed % 3].id, cfg, rng);
    ASSERT_TRUE(plan.has_other);
    const auto p = surrogate::init_model<double>(spec, seed + 100);
    nd::LossClosure<double> f = [&](Tape<double>& t) { return plan_loss(t, plan, meta().grid, spec, cfg); };
    nd::GradCheckOptions opt;
    opt.step = 1e-6;
    opt.max_coords_per_tensor = 4;
    opt.sample_seed = seed;
    EXPECT_LT(nd::grad_check_detailed(f, p, opt).max_rel_error, 1e-4) << "seed " << seed;
  }
}
