#ifndef PGNN_TEST_UNIFICATION_HPP
#define PGNN_TEST_UNIFICATION_HPP

#include <random>

#include "pgnn/kernels.hpp"
#include "pgnn/perturb.hpp"
#include "test_util.hpp"

// Perturbing A, X or W is the same as adding an analytically derived delta to
// the pre-activation embedding of the layer they feed. Each trial realizes a
// random perturbation through build_hooks, records the delta it produced,
// derives the equivalent embedding delta and compares both forward passes.
namespace pgnn::test
{
  struct IdentityTrial
  {
    double logits_diff = 0.0;
    double hidden_diff = 0.0;
  };

  inline HookSet::Hook recording(HookSet::Hook inner, Matrix& out)
  {
    return [inner = std::move(inner), &out](const Tensor& target) {
      Tensor d = inner(target);
      out = d.value();
      return d;
    };
  }

  //! strategy in {Edge, Node, Weight}; layer selects the weight for Weight
  inline IdentityTrial unification_trial(BackboneKind kind, Strategy strategy, std::size_t layer, std::uint64_t seed)
  {
    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> nodes(3, 10);
    const std::size_t n = 2 * nodes(rng);
    const Graph g = small_graph(n, rng(), 2, 5, 0.4, 0.15);
    const Model model = Model::create(kind, g, 4, rng());
    const ModelInputs inputs = model.prepare(g);

    PerturbSpec spec;
    spec.strategy = strategy;
    spec.form = Form::Random;
    spec.ball = {rng() % 2 ? Norm::L2 : Norm::LInf, 0.5};
    spec.edge_budget = 0.4;
    if (strategy == Strategy::Weight)
      spec.layers = {layer};
    HookContext ctx{&model, &g, nullptr, rng(), nullptr, AdversaryPhase::Model};
    HookSet hooks = build_hooks(spec, ctx);

    Matrix realized;
    if (strategy == Strategy::Edge)
      hooks.adjacency = recording(hooks.adjacency, realized);
    else if (strategy == Strategy::Node)
      hooks.features = recording(hooks.features, realized);
    else
      hooks.weights[layer] = recording(hooks.weights[layer], realized);

    Tape tape;
    const auto bound = model.bind(tape, false);
    const ForwardOutput perturbed = model.forward(tape, inputs, bound, hooks);

    const auto& w = model.weights();
    const Matrix& x = *inputs.features;
    const Matrix& s = *inputs.structure;
    using kernels::matmul;
    std::size_t target_layer = 0;
    Matrix delta_h;
    if (kind == BackboneKind::Gcn)
    {
      if (strategy == Strategy::Edge)
        delta_h = matmul(realized, matmul(x, w[0]));
      else if (strategy == Strategy::Node)
        delta_h = matmul(s, matmul(realized, w[0]));
      else if (layer == 0)
        delta_h = matmul(s, matmul(x, realized));
      else
      {
        Matrix h1 = model.hidden(inputs);
        for (double& v : h1.values())
          v = std::max(v, 0.0);
        delta_h = matmul(s, matmul(h1, realized));
        target_layer = 1;
      }
    }
    else
    {
      if (strategy == Strategy::Edge)
        delta_h = matmul(realized, w[0]);
      else if (strategy == Strategy::Node)
      {
        delta_h = matmul(realized, w[1]);
        target_layer = 1;
      }
      else if (layer == 0)
        delta_h = matmul(s, realized);
      else if (layer == 1)
      {
        delta_h = matmul(x, realized);
        target_layer = 1;
      }
      else
      {
        // combiner input [relu(A Wa) ; relu(X Wx)]
        Matrix ha = matmul(s, w[0]), hx = matmul(x, w[1]);
        Matrix cat(n, 2 * w[0].cols());
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < w[0].cols(); ++j)
          {
            cat(i, j) = std::max(ha(i, j), 0.0);
            cat(i, j + w[0].cols()) = std::max(hx(i, j), 0.0);
          }
        delta_h = matmul(cat, realized);
        target_layer = 2;
      }
    }

    HookSet embedding;
    embedding.embeddings[target_layer] = constant_hook(delta_h);
    const ForwardOutput equivalent = model.forward(tape, inputs, bound, embedding);
    return {max_abs_diff(perturbed.logits.value(), equivalent.logits.value()),
            max_abs_diff(perturbed.hidden.value(), equivalent.hidden.value())};
  }
}

#endif // PGNN_TEST_UNIFICATION_HPP
