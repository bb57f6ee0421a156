#include <gtest/gtest.h>

#include <cmath>

#include "pgnn/backbones.hpp"
#include "unification.hpp"

using namespace pgnn;

namespace
{
  ForwardOutput run(const Model& m, const ModelInputs& in, const HookSet& hooks, Tape& tape)
  {
    const auto bound = m.bind(tape, false);
    return m.forward(tape, in, bound, hooks);
  }

  class EachBackbone : public ::testing::TestWithParam<BackboneKind>
  {
  };
}

TEST_P(EachBackbone, EmptyAndZeroHooksAreIdentity)
{
  const Graph g = test::small_graph(12, 1);
  const Model m = Model::create(GetParam(), g, 5, 2);
  const ModelInputs in = m.prepare(g);
  const Matrix clean = m.logits(in);

  Tape tape;
  HookSet zeros;
  zeros.embeddings[0] = [](const Tensor& t) { return t.tape().leaf(Matrix(t.rows(), t.cols())); };
  zeros.embeddings[1] = [](const Tensor& t) { return t.tape().leaf(Matrix(t.rows(), t.cols())); };
  EXPECT_EQ(run(m, in, zeros, tape).logits.value(), clean);
  EXPECT_EQ(run(m, in, {}, tape).logits.value(), clean);
  for (double v : clean.values())
    EXPECT_TRUE(std::isfinite(v));
}

TEST_P(EachBackbone, DeltaShapeMismatchThrows)
{
  const Graph g = test::small_graph(12, 1);
  const Model m = Model::create(GetParam(), g, 5, 2);
  const ModelInputs in = m.prepare(g);
  Tape tape;
  HookSet bad;
  bad.features = test::constant_hook(Matrix(3, 3));
  EXPECT_THROW(run(m, in, bad, tape), ShapeError);
}

TEST_P(EachBackbone, MoreThanOneStrategyRejected)
{
  const Graph g = test::small_graph(12, 1);
  const Model m = Model::create(GetParam(), g, 5, 2);
  const ModelInputs in = m.prepare(g);
  Tape tape;
  HookSet two;
  two.features = test::constant_hook(Matrix(12, g.num_features()));
  two.embeddings[0] = test::constant_hook(Matrix(12, 5));
  EXPECT_THROW(run(m, in, two, tape), std::invalid_argument);
}

TEST_P(EachBackbone, NonexistentLayerRejected)
{
  const Graph g = test::small_graph(12, 1);
  const Model m = Model::create(GetParam(), g, 5, 2);
  const ModelInputs in = m.prepare(g);
  Tape tape;
  HookSet hooks;
  hooks.weights[9] = test::constant_hook(Matrix(1, 1));
  EXPECT_THROW(run(m, in, hooks, tape), std::invalid_argument);
}

TEST_P(EachBackbone, EdgeNodeWeightEqualEmbeddingDelta)
{
  const BackboneKind kind = GetParam();
  const std::size_t weight_layers = kind == BackboneKind::Gcn ? 2 : 3;
  for (std::uint64_t trial = 0; trial < 10; ++trial)
  {
    for (Strategy s : {Strategy::Edge, Strategy::Node})
    {
      const auto r = test::unification_trial(kind, s, 0, trial);
      EXPECT_LT(r.logits_diff, 1e-9) << to_string(s) << " trial " << trial;
      EXPECT_LT(r.hidden_diff, 1e-9) << to_string(s) << " trial " << trial;
    }
    for (std::size_t l = 0; l < weight_layers; ++l)
    {
      const auto r = test::unification_trial(kind, Strategy::Weight, l, trial);
      EXPECT_LT(r.logits_diff, 1e-9) << "weight layer " << l << " trial " << trial;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Backbones, EachBackbone, ::testing::Values(BackboneKind::Gcn, BackboneKind::Linkx),
                         [](const auto& info) { return to_string(info.param); });

TEST(Gcn, HandComputedForward)
{
  // two connected nodes: A~ = 0.5 everywhere
  Graph g;
  g.num_nodes = 2;
  g.edges = {{0, 1}};
  g.features = Matrix::from_rows({{1.0}, {3.0}});
  g.labels = {0, 1};
  const Model m(GcnParams{Matrix::from_rows({{1.0, -1.0}}), Matrix::from_rows({{1.0}, {1.0}})});
  const ModelInputs in = m.prepare(g);
  // z0 = A~ X W0 = [[2,-2],[2,-2]]; relu -> [[2,0],[2,0]]; logits = A~ [[2],[2]] = [[2],[2]]
  EXPECT_LT(max_abs_diff(m.hidden(in), Matrix::from_rows({{2.0, -2.0}, {2.0, -2.0}})), 1e-12);
  EXPECT_LT(max_abs_diff(m.logits(in), Matrix::from_rows({{2.0}, {2.0}})), 1e-12);
}

TEST(Init, GlorotBoundsAndDeterminism)
{
  const GcnParams a = init_gcn(30, 16, 4, 5);
  const GcnParams b = init_gcn(30, 16, 4, 5);
  const GcnParams c = init_gcn(30, 16, 4, 6);
  EXPECT_EQ(a.w0, b.w0);
  EXPECT_EQ(a.w1, b.w1);
  EXPECT_NE(a.w0, c.w0);
  const double bound0 = std::sqrt(6.0 / 46.0);
  for (double v : a.w0.values())
    EXPECT_LE(std::abs(v), bound0);
  const LinkxParams l = init_linkx(10, 30, 8, 3, 1);
  EXPECT_EQ(l.adjacency_weight.shape(), (Shape{10, 8}));
  EXPECT_EQ(l.combine_weight.shape(), (Shape{16, 8}));
  Rng rng(0);
  EXPECT_THROW(glorot_uniform(0, 3, rng), std::invalid_argument);
}

TEST(Model, PrepareChecksShapes)
{
  const Graph g = test::small_graph(12, 1);
  const Model linkx = Model::create(BackboneKind::Linkx, g, 4, 0);
  const Graph other = test::small_graph(14, 1);
  EXPECT_THROW(linkx.prepare(other), ShapeError);
  EXPECT_THROW(Model(GcnParams{Matrix(3, 4), Matrix(5, 2)}), ShapeError);
}
