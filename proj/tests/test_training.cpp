#include <gtest/gtest.h>

#include <cmath>

#include "ascent.hpp"
#include "pgnn/evalharness.hpp"
#include "pgnn/training.hpp"
#include "test_util.hpp"

using namespace pgnn;

namespace
{
  TrainConfig short_config(std::size_t epochs, std::uint64_t seed = 0)
  {
    TrainConfig c;
    c.epochs = epochs;
    c.patience = 0;
    c.seed = seed;
    return c;
  }

  void expect_same_losses(const RunReport& a, const RunReport& b, double tol)
  {
    ASSERT_EQ(a.epochs.size(), b.epochs.size());
    for (std::size_t e = 0; e < a.epochs.size(); ++e)
    {
      EXPECT_NEAR(a.epochs[e].train_loss, b.epochs[e].train_loss, tol) << "epoch " << e;
      EXPECT_NEAR(a.epochs[e].val_loss, b.epochs[e].val_loss, tol) << "epoch " << e;
    }
  }
}

TEST(Optimizers, SgdOnSquare)
{
  // f(w) = w^2, grad 2w; one step from 1 with lr 0.1 gives 0.8
  Matrix w = Matrix::from_rows({{1.0}});
  Matrix* p = &w;
  sgd_step({&p, 1}, std::vector<Matrix>{Matrix::from_rows({{2.0}})}, 0.1);
  EXPECT_DOUBLE_EQ(w(0, 0), 0.8);
  // weight decay adds wd * w to the gradient: 0.8 - 0.1 * (1.6 + 0.5 * 0.8)
  sgd_step({&p, 1}, std::vector<Matrix>{Matrix::from_rows({{1.6}})}, 0.1, 0.5);
  EXPECT_NEAR(w(0, 0), 0.6, 1e-15);
}

TEST(Optimizers, AdamFirstStepIsLr)
{
  Matrix w = Matrix::from_rows({{1.0, -2.0}});
  Matrix* p = &w;
  AdamState st;
  adam_step({&p, 1}, std::vector<Matrix>{Matrix::from_rows({{3.0, -0.5}})}, st, 0.01);
  EXPECT_NEAR(w(0, 0), 0.99, 1e-8);
  EXPECT_NEAR(w(0, 1), -1.99, 1e-8);
  EXPECT_EQ(st.step, 1u);
}

TEST(Optimizers, NegativeSignAscends)
{
  Matrix w = Matrix::from_rows({{1.0}});
  Matrix* p = &w;
  Optimizer opt(OptimizerKind::Sgd, 0.1, 0.0);
  opt.step({&p, 1}, std::vector<Matrix>{Matrix::from_rows({{2.0}})}, -1.0);
  EXPECT_DOUBLE_EQ(w(0, 0), 1.2);
}

TEST(Config, Validation)
{
  TrainConfig c;
  c.epochs = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.lr = -1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.inner_period = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_EQ(parse_optimizer("sgd"), OptimizerKind::Sgd);
  EXPECT_THROW(parse_optimizer("rmsprop"), std::invalid_argument);
}

TEST(Standard, FitsSeparableGraph)
{
  for (BackboneKind kind : {BackboneKind::Gcn, BackboneKind::Linkx})
  {
    const Graph g = test::small_graph(80, 2, 2, 16, 0.3, 0.01);
    Model model = Model::create(kind, g, 16, 0);
    TrainConfig c = short_config(200);
    c.weight_decay = 0.0;
    const RunReport r = train_standard(model, g, c);
    ASSERT_TRUE(r.ok()) << r.error;
    EXPECT_GE(r.epochs.back().train_acc, 0.99) << to_string(kind);
    EXPECT_LT(r.epochs.back().train_loss, r.epochs.front().train_loss);
  }
}

TEST(Standard, DeterministicAndRestoresBest)
{
  const Graph g = test::small_graph(40, 3);
  Model a = Model::create(BackboneKind::Gcn, g, 8, 1);
  Model b = Model::create(BackboneKind::Gcn, g, 8, 1);
  const RunReport ra = train_standard(a, g, short_config(30));
  const RunReport rb = train_standard(b, g, short_config(30));
  EXPECT_EQ(ra.params_digest, rb.params_digest);
  EXPECT_EQ(a.weights(), b.weights());
  EXPECT_EQ(ra.params_digest, params_digest(a.weights()));
  EXPECT_EQ(ra.best_val_acc, ra.epochs[ra.best_epoch].val_acc);
}

TEST(Standard, EarlyStopping)
{
  const Graph g = test::small_graph(40, 3);
  Model m = Model::create(BackboneKind::Gcn, g, 8, 1);
  TrainConfig c = short_config(500);
  c.patience = 5;
  const RunReport r = train_standard(m, g, c);
  EXPECT_LT(r.epochs.size(), 500u);
  EXPECT_EQ(r.epochs.size(), r.best_epoch + 6);
}

TEST(Random, ZeroBudgetMatchesStandard)
{
  const Graph g = test::small_graph(40, 4);
  Model base = Model::create(BackboneKind::Gcn, g, 8, 2);
  const RunReport standard = train_standard(base, g, short_config(20));
  for (Strategy s : {Strategy::Node, Strategy::Edge, Strategy::Weight, Strategy::Embedding})
  {
    PerturbSpec spec;
    spec.strategy = s;
    spec.ball.radius = 0.0;
    spec.edge_budget = 0.0;
    Model m = Model::create(BackboneKind::Gcn, g, 8, 2);
    const RunReport r = train_random(m, g, short_config(20), spec);
    expect_same_losses(r, standard, 1e-9);
  }
}

TEST(Random, HeavyEdgeDropStaysFinite)
{
  const Graph g = test::small_graph(40, 5);
  PerturbSpec spec;
  spec.strategy = Strategy::Edge;
  spec.edge_budget = 0.9;
  Model m = Model::create(BackboneKind::Gcn, g, 8, 0);
  const RunReport r = train_random(m, g, short_config(30), spec);
  ASSERT_TRUE(r.ok()) << r.error;
  for (const auto& e : r.epochs)
    EXPECT_TRUE(std::isfinite(e.train_loss));
}

TEST(Random, EvaluationIsClean)
{
  // heavy noise during training must not leak into the reported accuracies
  const Graph g = test::small_graph(40, 6);
  PerturbSpec spec;
  spec.strategy = Strategy::Node;
  spec.ball.radius = 50.0;
  Model m = Model::create(BackboneKind::Gcn, g, 8, 0);
  const RunReport r = train_random(m, g, short_config(5), spec);
  const ModelInputs in = m.prepare(g);
  // after restoring, the best epoch's clean validation accuracy is reproducible
  EXPECT_NEAR(r.best_val_acc, accuracy(m.logits(in), g.labels, g.splits.val), 0.0);
}

TEST(Adversarial, FrozenZeroGeneratorMatchesStandard)
{
  for (BackboneKind kind : {BackboneKind::Gcn, BackboneKind::Linkx})
  {
    const Graph g = test::small_graph(40, 7);
    Model base = Model::create(kind, g, 8, 3);
    const RunReport standard = train_standard(base, g, short_config(15));
    for (Strategy s : {Strategy::Node, Strategy::Weight, Strategy::Embedding})
    {
      PerturbSpec spec;
      spec.strategy = s;
      spec.form = Form::Adversarial;
      spec.generator_hidden = 8;
      TrainConfig c = short_config(15);
      c.update_generator = false;
      Model m = Model::create(kind, g, 8, 3);
      GeneratorSet gens = GeneratorSet::create(spec, m, g, 1);
      const RunReport r = train_adversarial(m, g, c, spec, gens);
      expect_same_losses(r, standard, 1e-9);
    }
  }
}

TEST(Adversarial, GeneratorStepsFollowSchedule)
{
  const Graph g = test::small_graph(40, 8);
  PerturbSpec spec;
  spec.strategy = Strategy::Embedding;
  spec.form = Form::Adversarial;
  spec.generator_hidden = 8;
  TrainConfig c = short_config(12);
  c.inner_period = 3;
  Model m = Model::create(BackboneKind::Gcn, g, 8, 0);
  const RunReport r = train(m, g, c, spec);
  ASSERT_EQ(r.epochs.size(), 12u);
  for (std::size_t e = 0; e < 12; ++e)
    EXPECT_EQ(r.epochs[e].generator_step, e % 3 == 2) << e;
}

TEST(Adversarial, EdgeTrainingRuns)
{
  const Graph g = test::small_graph(30, 9);
  PerturbSpec spec;
  spec.strategy = Strategy::Edge;
  spec.form = Form::Adversarial;
  spec.edge_budget = 0.1;
  spec.generator_hidden = 8;
  for (BackboneKind kind : {BackboneKind::Gcn, BackboneKind::Linkx})
  {
    Model m = Model::create(kind, g, 8, 0);
    const RunReport r = train(m, g, short_config(10), spec);
    EXPECT_TRUE(r.ok()) << r.error;
  }
}

TEST(Adversarial, AscentStepRaisesLoss)
{
  PerturbSpec spec;
  spec.strategy = Strategy::Embedding;
  spec.form = Form::Adversarial;
  spec.generator_hidden = 16;
  int raised = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed)
  {
    const auto [before, after] = test::ascent_trial(BackboneKind::Gcn, spec, seed);
    raised += after > before;
  }
  EXPECT_GE(raised, 4);
}
