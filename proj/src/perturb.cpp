#include "pgnn/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "pgnn/kernels.hpp"
#include "pgnn/rng.hpp"

namespace pgnn
{
  namespace
  {
    enum Stream : std::uint64_t
    {
      kDelta = 11,
      kEdgeDrop = 12,
      kGenerator = 13,
      kHookFeatures = 21,
      kHookEdges = 22,
      kHookWeights = 23,
      kHookEmbeddings = 24,
    };
  }

  std::string to_string(Norm norm) { return norm == Norm::L2 ? "l2" : "linf"; }

  Norm parse_norm(const std::string& name)
  {
    if (name == "l2")
      return Norm::L2;
    if (name == "linf")
      return Norm::LInf;
    throw std::invalid_argument("unknown norm '" + name + "' (expected l2 or linf)");
  }

  Matrix project_to_ball(const Matrix& d, const NormBall& ball)
  {
    const double r = ball.radius;
    Matrix out = d;
    if (ball.norm == Norm::LInf)
    {
      for (double& v : out.values())
        v = std::clamp(v, -r, r);
      return out;
    }
    for (std::size_t i = 0; i < out.rows(); ++i)
    {
      auto row = out.row(i);
      double sq = 0.0;
      for (double v : row)
        sq += v * v;
      const double nrm = std::sqrt(sq);
      if (nrm > r)
        for (double& v : row)
          v *= r / nrm;
    }
    return out;
  }

  Matrix sample_random_delta(Shape shape, const NormBall& ball, std::uint64_t seed)
  {
    if (!(ball.radius >= 0.0))
      throw std::invalid_argument("sample_random_delta: radius must be non-negative");
    Matrix out(shape.rows, shape.cols);
    if (ball.radius == 0.0 || out.empty())
      return out;
    Rng rng(derive_seed(seed, kDelta));
    if (ball.norm == Norm::LInf)
    {
      std::uniform_real_distribution<double> dist(-ball.radius, ball.radius);
      for (double& v : out.values())
        v = dist(rng);
      return out;
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < shape.rows; ++i)
    {
      auto row = out.row(i);
      double sq = 0.0;
      do
      {
        sq = 0.0;
        for (double& v : row)
        {
          v = normal(rng);
          sq += v * v;
        }
      } while (sq == 0.0);
      const double f = ball.radius / std::sqrt(sq);
      for (double& v : row)
        v *= f;
    }
    return out;
  }

  Matrix EdgeMask::dense() const
  {
    Matrix m(num_nodes, num_nodes);
    for (const Edge& e : dropped)
    {
      m(e.u, e.v) = -1.0;
      m(e.v, e.u) = -1.0;
    }
    return m;
  }

  EdgeMask random_edge_drop(const Graph& g, double drop_prob, std::uint64_t seed)
  {
    if (!(drop_prob >= 0.0 && drop_prob < 1.0))
      throw std::invalid_argument("random_edge_drop: drop probability must lie in [0, 1)");
    EdgeMask mask{g.num_nodes, {}};
    if (drop_prob == 0.0)
      return mask;
    Rng rng(derive_seed(seed, kEdgeDrop));
    std::bernoulli_distribution coin(drop_prob);
    for (const Edge& e : g.edges)
      if (coin(rng))
        mask.dropped.push_back(e);
    return mask;
  }

  std::size_t top_t_count(std::size_t support_size, double t)
  {
    if (!(t > 0.0 && t <= 1.0))
      throw std::invalid_argument("top-t fraction must lie in (0, 1]");
    // tolerance keeps products like 0.05 * 100 from rounding up to 6
    const double raw = std::ceil(t * static_cast<double>(support_size) - 1e-9);
    return std::min(support_size, static_cast<std::size_t>(std::max(0.0, raw)));
  }

  std::vector<Edge> top_t_select(std::span<const double> scores, std::span<const Edge> support, double t)
  {
    if (support.empty())
      throw std::invalid_argument("top_t_select: empty support");
    if (scores.size() != support.size())
      throw ShapeError("top_t_select: " + std::to_string(scores.size()) + " scores for " +
                       std::to_string(support.size()) + " edges");
    const std::size_t keep = top_t_count(support.size(), t);
    std::vector<std::size_t> order(support.size());
    std::iota(order.begin(), order.end(), 0);
    auto better = [&](std::size_t a, std::size_t b) {
      if (scores[a] != scores[b])
        return scores[a] > scores[b];
      return support[a] < support[b];
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(), better);
    std::vector<Edge> out;
    out.reserve(keep);
    for (std::size_t k = 0; k < keep; ++k)
      out.push_back(support[order[k]]);
    std::sort(out.begin(), out.end());
    return out;
  }

  // ---------------------------------------------------------- generators

  DeltaGenerator::DeltaGenerator(std::size_t width, std::size_t hidden, std::uint64_t seed, bool zero_output)
  {
    Rng rng(derive_seed(seed, kGenerator, width));
    params_.push_back(glorot_uniform(width, hidden, rng));
    params_.push_back(zero_output ? Matrix(hidden, width) : glorot_uniform(hidden, width, rng));
  }

  DeltaGenerator::Bound DeltaGenerator::bind(Tape& tape, bool requires_grad) const
  {
    return {tape.leaf(params_[0], requires_grad), tape.leaf(params_[1], requires_grad)};
  }

  Tensor make_adversarial_delta(const DeltaGenerator::Bound& gen, const Tensor& target, const NormBall& ball)
  {
    if (target.cols() != gen.hidden.rows())
      throw ShapeError("generator expects width " + std::to_string(gen.hidden.rows()) + ", target is " +
                       to_string(target.shape()));
    Tensor raw = tanh(matmul(relu(matmul(target, gen.hidden)), gen.output));
    if (ball.radius == 0.0)
      return scale(raw, 0.0);
    Tensor delta = scale(raw, ball.radius);
    if (ball.norm == Norm::L2)
      delta = clip_rows_l2(delta, ball.radius);
    return delta;
  }

  EdgeGenerator::EdgeGenerator(std::size_t nodes, std::size_t hidden, std::size_t embedding_dim, double budget,
                               std::uint64_t seed)
    : budget_(budget)
  {
    top_t_count(1, budget);
    Rng rng(derive_seed(seed, kGenerator, 0xed9e));
    params_.push_back(glorot_uniform(nodes, hidden, rng));
    // a zero output layer would be a fixed point: d(Z Z^T)/dZ vanishes at Z = 0
    params_.push_back(glorot_uniform(hidden, embedding_dim, rng));
  }

  EdgeGenerator::Bound EdgeGenerator::bind(Tape& tape, bool requires_grad) const
  {
    return {tape.leaf(params_[0], requires_grad), tape.leaf(params_[1], requires_grad)};
  }

  Tensor edge_embeddings(const EdgeGenerator::Bound& gen, const Tensor& adjacency)
  {
    if (adjacency.rows() != adjacency.cols() || adjacency.cols() != gen.hidden.rows())
      throw ShapeError("edge generator expects a " + std::to_string(gen.hidden.rows()) + "-node adjacency, got " +
                       to_string(adjacency.shape()));
    return matmul(relu(matmul(adjacency, gen.hidden)), gen.output);
  }

  Matrix edge_scores(const EdgeGenerator& gen, const Matrix& adjacency)
  {
    Tape tape;
    const Tensor z = edge_embeddings(gen.bind(tape, false), tape.leaf(adjacency));
    return kernels::matmul_nt(z.value(), z.value());
  }

  Matrix pgd_perturb(const std::function<Tensor(const Tensor& delta)>& loss_fn, Shape shape, const PgdConfig& cfg)
  {
    if (!(cfg.step > 0.0 && cfg.budget > 0.0) || cfg.steps == 0)
      throw std::invalid_argument("pgd_perturb: step and budget must be positive and steps >= 1");
    Matrix delta(shape.rows, shape.cols);
    for (std::size_t it = 0; it < cfg.steps; ++it)
    {
      Tape tape;
      Tensor d = tape.leaf(delta, true);
      Tensor loss = loss_fn(d);
      tape.backward(loss);
      const Matrix& g = d.grad();
      for (std::size_t k = 0; k < delta.size(); ++k)
      {
        const double gk = g.values()[k];
        const double sign = gk > 0.0 ? 1.0 : (gk < 0.0 ? -1.0 : 0.0);
        delta.values()[k] = std::clamp(delta.values()[k] + cfg.step * sign, -cfg.budget, cfg.budget);
      }
    }
    return delta;
  }

  // -------------------------------------------------------------- specs

  std::string to_string(Strategy s)
  {
    switch (s)
    {
    case Strategy::None: return "none";
    case Strategy::Node: return "node";
    case Strategy::Edge: return "edge";
    case Strategy::Weight: return "weight";
    case Strategy::Embedding: return "embedding";
    }
    return "?";
  }

  std::string to_string(Form f) { return f == Form::Random ? "random" : "adversarial"; }

  Strategy parse_strategy(const std::string& name)
  {
    for (Strategy s : {Strategy::None, Strategy::Node, Strategy::Edge, Strategy::Weight, Strategy::Embedding})
      if (to_string(s) == name)
        return s;
    throw std::invalid_argument("unknown strategy '" + name + "' (expected none, node, edge, weight or embedding)");
  }

  Form parse_form(const std::string& name)
  {
    if (name == "random")
      return Form::Random;
    if (name == "adversarial")
      return Form::Adversarial;
    throw std::invalid_argument("unknown form '" + name + "' (expected random or adversarial)");
  }

  std::vector<std::size_t> PerturbSpec::resolved_layers(const Model& model) const
  {
    if (!layers.empty())
      return layers;
    if (strategy == Strategy::Embedding && model.kind() == BackboneKind::Linkx)
      return {0, 1, 2};
    return {0};
  }

  void PerturbSpec::validate(const Model& model) const
  {
    if (strategy == Strategy::None)
      return;
    if (strategy == Strategy::Edge)
    {
      if (form == Form::Random && !(edge_budget >= 0.0 && edge_budget < 1.0))
        throw std::invalid_argument("edge_budget: random drop probability must lie in [0, 1)");
      if (form == Form::Adversarial && !(edge_budget > 0.0 && edge_budget <= 1.0))
        throw std::invalid_argument("edge_budget: top fraction t must lie in (0, 1]");
    }
    else if (!(ball.radius >= 0.0))
      throw std::invalid_argument("radius must be non-negative");
    if (form == Form::Adversarial && generator_hidden == 0)
      throw std::invalid_argument("generator_hidden must be positive");
    if (strategy == Strategy::Weight)
      for (std::size_t l : resolved_layers(model))
        if (l >= model.weight_layers())
          throw std::invalid_argument("layers: weight layer " + std::to_string(l) + " does not exist in " +
                                      to_string(model.kind()) + " (has " + std::to_string(model.weight_layers()) + ")");
    if (strategy == Strategy::Embedding)
      for (std::size_t l : resolved_layers(model))
        if (l >= model.embedding_layers())
          throw std::invalid_argument("layers: embedding layer " + std::to_string(l) + " does not exist in " +
                                      to_string(model.kind()) + " (has " + std::to_string(model.embedding_layers()) +
                                      ")");
  }

  std::string PerturbSpec::label() const
  {
    if (strategy == Strategy::None)
      return "plain";
    return to_string(strategy) + "-" + to_string(form);
  }

  double effective_radius(const PerturbSpec& spec, const Matrix& target)
  {
    if (!spec.relative_radius || target.empty())
      return spec.ball.radius;
    double scale_sum = 0.0;
    if (spec.ball.norm == Norm::L2)
    {
      for (std::size_t i = 0; i < target.rows(); ++i)
      {
        double sq = 0.0;
        for (double v : target.row(i))
          sq += v * v;
        scale_sum += std::sqrt(sq);
      }
      return spec.ball.radius * scale_sum / static_cast<double>(target.rows());
    }
    for (double v : target.values())
      scale_sum += std::abs(v);
    return spec.ball.radius * scale_sum / static_cast<double>(target.size());
  }

  GeneratorSet GeneratorSet::create(const PerturbSpec& spec, const Model& model, const Graph& g, std::uint64_t seed)
  {
    spec.validate(model);
    GeneratorSet set;
    if (spec.form != Form::Adversarial)
      return set;
    const std::size_t h = spec.generator_hidden;
    switch (spec.strategy)
    {
    case Strategy::None:
      break;
    case Strategy::Node:
      set.features.emplace(g.num_features(), h, seed);
      break;
    case Strategy::Edge:
      set.edges.emplace(g.num_nodes, h, spec.edge_embedding_dim, spec.edge_budget, seed);
      break;
    case Strategy::Weight:
      for (std::size_t l : spec.resolved_layers(model))
        set.weights.emplace(l, DeltaGenerator(model.weights()[l].cols(), h, derive_seed(seed, kHookWeights, l)));
      break;
    case Strategy::Embedding:
      for (std::size_t l : spec.resolved_layers(model))
      {
        // GCN layer 1 emits class logits; every other hooked layer has the hidden width
        std::size_t width = model.weights()[0].cols();
        if (model.kind() == BackboneKind::Gcn && l == 1)
          width = model.weights()[1].cols();
        set.embeddings.emplace(l, DeltaGenerator(width, h, derive_seed(seed, kHookEmbeddings, l)));
      }
      break;
    }
    return set;
  }

  std::vector<Matrix*> GeneratorSet::parameters()
  {
    std::vector<Matrix*> out;
    auto take = [&out](std::vector<Matrix>& ps) {
      for (auto& p : ps)
        out.push_back(&p);
    };
    if (features)
      take(features->parameters());
    for (auto& [l, gen] : weights)
      take(gen.parameters());
    for (auto& [l, gen] : embeddings)
      take(gen.parameters());
    if (edges)
      take(edges->parameters());
    return out;
  }

  GeneratorSet::Bound GeneratorSet::bind(Tape& tape, bool requires_grad) const
  {
    Bound b;
    if (features)
      b.features = features->bind(tape, requires_grad);
    for (const auto& [l, gen] : weights)
      b.weights.emplace(l, gen.bind(tape, requires_grad));
    for (const auto& [l, gen] : embeddings)
      b.embeddings.emplace(l, gen.bind(tape, requires_grad));
    if (edges)
      b.edges = edges->bind(tape, requires_grad);
    return b;
  }

  std::vector<Tensor> GeneratorSet::Bound::tensors() const
  {
    std::vector<Tensor> out;
    auto take = [&out](const auto& bound) {
      out.push_back(bound.hidden);
      out.push_back(bound.output);
    };
    if (features)
      take(*features);
    for (const auto& [l, gen] : weights)
      take(gen);
    for (const auto& [l, gen] : embeddings)
      take(gen);
    if (edges)
      take(*edges);
    return out;
  }

  // ---------------------------------------------------------------- hooks

  namespace
  {
    NormBall resolved_ball(const PerturbSpec& spec, const Matrix& target)
    {
      return {spec.ball.norm, effective_radius(spec, target)};
    }

    //! -(target ⊙ mask) for a constant 0/1 edge mask
    Tensor drop_entries(const Tensor& target, const std::vector<Edge>& dropped)
    {
      Tape& tape = target.tape();
      const std::size_t n = target.rows();
      if (!target.requires_grad())
      {
        Matrix delta(n, n);
        const Matrix& t = target.value();
        for (const Edge& e : dropped)
        {
          delta(e.u, e.v) = -t(e.u, e.v);
          delta(e.v, e.u) = -t(e.v, e.u);
        }
        return tape.leaf(std::move(delta));
      }
      Matrix mask(n, n);
      for (const Edge& e : dropped)
      {
        mask(e.u, e.v) = 1.0;
        mask(e.v, e.u) = 1.0;
      }
      return scale(mul_elem(target, tape.leaf(std::move(mask))), -1.0);
    }

    HookSet random_hooks(const PerturbSpec& spec, const HookContext& ctx)
    {
      HookSet hooks;
      const std::uint64_t seed = ctx.seed;
      switch (spec.strategy)
      {
      case Strategy::None:
        break;
      case Strategy::Node:
        hooks.features = [spec, seed](const Tensor& target) {
          return target.tape().leaf(
            sample_random_delta(target.shape(), resolved_ball(spec, target.value()), derive_seed(seed, kHookFeatures)));
        };
        break;
      case Strategy::Edge: {
        auto mask = std::make_shared<EdgeMask>(random_edge_drop(*ctx.graph, spec.edge_budget, derive_seed(seed, kHookEdges)));
        hooks.adjacency = [mask](const Tensor& target) { return drop_entries(target, mask->dropped); };
        break;
      }
      case Strategy::Weight:
      case Strategy::Embedding: {
        const bool weight = spec.strategy == Strategy::Weight;
        auto& slot = weight ? hooks.weights : hooks.embeddings;
        for (std::size_t l : spec.resolved_layers(*ctx.model))
        {
          const std::uint64_t layer_seed = derive_seed(seed, weight ? kHookWeights : kHookEmbeddings, l);
          slot[l] = [spec, layer_seed](const Tensor& target) {
            return target.tape().leaf(sample_random_delta(target.shape(), resolved_ball(spec, target.value()), layer_seed));
          };
        }
        break;
      }
      }
      return hooks;
    }

    HookSet::Hook delta_hook(const PerturbSpec& spec, const DeltaGenerator::Bound& gen)
    {
      return [spec, gen](const Tensor& target) {
        return make_adversarial_delta(gen, detach(target), resolved_ball(spec, target.value()));
      };
    }

    HookSet adversarial_hooks(const PerturbSpec& spec, const HookContext& ctx)
    {
      if (!ctx.generators)
        throw std::invalid_argument("build_hooks: adversarial form requires bound generators");
      const auto& gens = *ctx.generators;
      HookSet hooks;
      switch (spec.strategy)
      {
      case Strategy::None:
        break;
      case Strategy::Node:
        if (!gens.features)
          throw std::invalid_argument("build_hooks: missing feature generator");
        hooks.features = delta_hook(spec, *gens.features);
        break;
      case Strategy::Weight:
      case Strategy::Embedding: {
        const bool weight = spec.strategy == Strategy::Weight;
        const auto& available = weight ? gens.weights : gens.embeddings;
        auto& slot = weight ? hooks.weights : hooks.embeddings;
        for (std::size_t l : spec.resolved_layers(*ctx.model))
        {
          auto it = available.find(l);
          if (it == available.end())
            throw std::invalid_argument("build_hooks: missing generator for layer " + std::to_string(l));
          slot[l] = delta_hook(spec, it->second);
        }
        break;
      }
      case Strategy::Edge: {
        if (!gens.edges || !ctx.adjacency || !ctx.graph)
          throw std::invalid_argument("build_hooks: edge perturbation needs an edge generator, graph and adjacency");
        const auto gen = *gens.edges;
        const Graph* graph = ctx.graph;
        const auto adjacency = ctx.adjacency;
        const double t = spec.edge_budget;
        const AdversaryPhase phase = ctx.phase;
        hooks.adjacency = [gen, graph, adjacency, t, phase](const Tensor& target) {
          Tape& tape = target.tape();
          if (graph->edges.empty())
            return tape.leaf(Matrix(target.rows(), target.cols()));
          const Tensor z = edge_embeddings(gen, tape.leaf(adjacency));
          const Tensor scores = pair_dot(z, graph->edges);
          const auto selected = top_t_select(scores.value().values(), graph->edges, t);
          if (phase == AdversaryPhase::Model || selected.empty())
            return drop_entries(target, selected);
          // soft magnitudes on the hard top-t support
          const Tensor weight = sigmoid(pair_dot(z, selected));
          const Tensor mask = scatter_pairs(weight, selected, target.rows());
          return scale(mul_elem(target, mask), -1.0);
        };
        break;
      }
      }
      return hooks;
    }
  }

  HookSet build_hooks(const PerturbSpec& spec, const HookContext& ctx)
  {
    if (!ctx.model || !ctx.graph)
      throw std::invalid_argument("build_hooks: context needs a model and a graph");
    spec.validate(*ctx.model);
    return spec.form == Form::Random ? random_hooks(spec, ctx) : adversarial_hooks(spec, ctx);
  }
}
