#include "pgnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "pgnn/backbones.hpp"
#include "pgnn/graph.hpp"
#include "pgnn/perturb.hpp"
#include "pgnn/rng.hpp"

namespace pgnn
{
  double relative_error(double a, double b, double floor)
  {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
  }

  double max_gradient_error(const ProbeFn& probe, std::span<Matrix* const> params, double eps)
  {
    std::vector<Matrix> analytic;
    {
      Tape tape;
      Probe p = probe(tape, true);
      if (p.wrt.size() != params.size())
        throw std::invalid_argument("max_gradient_error: probe bound " + std::to_string(p.wrt.size()) +
                                    " tensors for " + std::to_string(params.size()) + " parameters");
      tape.backward(p.loss);
      for (std::size_t k = 0; k < params.size(); ++k)
        analytic.push_back(p.wrt[k].has_grad() ? p.wrt[k].grad() : Matrix(params[k]->rows(), params[k]->cols()));
    }
    auto eval = [&] {
      Tape tape;
      return probe(tape, false).loss.value()(0, 0);
    };

    double worst = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k)
    {
      auto values = params[k]->values();
      for (std::size_t e = 0; e < values.size(); ++e)
      {
        const double saved = values[e];
        values[e] = saved + eps;
        const double up = eval();
        values[e] = saved - eps;
        const double down = eval();
        values[e] = saved;
        const double numeric = (up - down) / (2.0 * eps);
        worst = std::max(worst, relative_error(analytic[k].values()[e], numeric));
      }
    }
    return worst;
  }

  std::size_t GradCheckSummary::instances() const
  {
    std::size_t n = 0;
    for (const auto& c : cases)
      n += c.instances;
    return n;
  }

  double GradCheckSummary::max_rel_error() const
  {
    double worst = 0.0;
    for (const auto& c : cases)
      worst = std::max(worst, c.max_rel_error);
    return worst;
  }

  bool GradCheckSummary::passed() const
  {
    return !cases.empty() && std::all_of(cases.begin(), cases.end(), [](const auto& c) { return c.passed; });
  }

  namespace
  {
    Matrix uniform(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0)
    {
      std::uniform_real_distribution<double> dist(lo, hi);
      Matrix m(r, c);
      for (double& v : m.values())
        v = dist(rng);
      return m;
    }

    //! sum(out ⊙ R): a generic scalar readout with a dense upstream gradient
    Tensor readout(const Tensor& out, const Matrix& weights)
    {
      return sum(mul_elem(out, out.tape().leaf(weights)));
    }

    std::vector<Matrix*> pointers(std::vector<Matrix>& ms)
    {
      std::vector<Matrix*> out;
      for (auto& m : ms)
        out.push_back(&m);
      return out;
    }

    struct OpCase
    {
      std::string name;
      //! builds the inputs and the readout weights for one instance
      std::function<std::vector<Matrix>(Rng&)> inputs;
      std::function<Tensor(std::span<const Tensor>)> op;
    };

    std::vector<Edge> random_pairs(std::size_t n, std::size_t k, Rng& rng)
    {
      std::vector<Edge> all;
      for (std::size_t u = 0; u < n; ++u)
        for (std::size_t v = u + 1; v < n; ++v)
          all.push_back({u, v});
      std::shuffle(all.begin(), all.end(), rng);
      all.resize(std::min(k, all.size()));
      std::sort(all.begin(), all.end());
      return all;
    }

    //! keeps values away from the relu kink so central differences stay on one side
    Matrix away_from_zero(Matrix m, double gap = 0.05)
    {
      for (double& v : m.values())
        if (std::abs(v) < gap)
          v = v < 0.0 ? v - gap : v + gap;
      return m;
    }

    std::vector<OpCase> op_cases(Rng& rng)
    {
      std::uniform_int_distribution<std::size_t> dim(2, 5);
      const std::size_t r = dim(rng), k = dim(rng), c = dim(rng);
      const auto pairs = std::make_shared<std::vector<Edge>>(random_pairs(6, 5, rng));
      std::vector<int> labels(r);
      std::uniform_int_distribution<int> cls(0, static_cast<int>(c) - 1);
      for (auto& y : labels)
        y = cls(rng);
      auto mask = std::make_shared<std::vector<std::size_t>>();
      for (std::size_t i = 0; i < r; i += 2)
        mask->push_back(i);
      auto lab = std::make_shared<std::vector<int>>(labels);

      auto two = [r, c](Rng& g) { return std::vector<Matrix>{uniform(r, c, g), uniform(r, c, g)}; };
      auto one = [r, c](Rng& g) { return std::vector<Matrix>{uniform(r, c, g)}; };

      std::vector<OpCase> cases;
      cases.push_back({"matmul", [r, k, c](Rng& g) { return std::vector<Matrix>{uniform(r, k, g), uniform(k, c, g)}; },
                       [](auto t) { return matmul(t[0], t[1]); }});
      cases.push_back({"add", two, [](auto t) { return add(t[0], t[1]); }});
      cases.push_back({"sub", two, [](auto t) { return sub(t[0], t[1]); }});
      cases.push_back({"mul_elem", two, [](auto t) { return mul_elem(t[0], t[1]); }});
      cases.push_back({"scale", one, [](auto t) { return scale(t[0], -1.7); }});
      cases.push_back({"concat_cols",
                       [r, k, c](Rng& g) { return std::vector<Matrix>{uniform(r, k, g), uniform(r, c, g)}; },
                       [](auto t) { return concat_cols(t[0], t[1]); }});
      cases.push_back({"relu", [r, c](Rng& g) { return std::vector<Matrix>{away_from_zero(uniform(r, c, g))}; },
                       [](auto t) { return relu(t[0]); }});
      cases.push_back({"sigmoid", [r, c](Rng& g) { return std::vector<Matrix>{uniform(r, c, g, -3, 3)}; },
                       [](auto t) { return sigmoid(t[0]); }});
      cases.push_back({"tanh", [r, c](Rng& g) { return std::vector<Matrix>{uniform(r, c, g, -2, 2)}; },
                       [](auto t) { return pgnn::tanh(t[0]); }});
      cases.push_back({"sum", one, [](auto t) { return scale(sum(t[0]), 1.0); }});
      cases.push_back({"masked_cross_entropy", [r, c](Rng& g) { return std::vector<Matrix>{uniform(r, c, g, -2, 2)}; },
                       [lab, mask](auto t) { return masked_cross_entropy(t[0], *lab, *mask); }});
      // scaled rows: some clipped, some inside the ball
      cases.push_back({"clip_rows_l2", [r, c](Rng& g) { return std::vector<Matrix>{uniform(r, c, g, -1.5, 1.5)}; },
                       [](auto t) { return clip_rows_l2(t[0], 0.9); }});
      cases.push_back({"pair_dot", [](Rng& g) { return std::vector<Matrix>{uniform(6, 3, g)}; },
                       [pairs](auto t) { return pair_dot(t[0], *pairs); }});
      cases.push_back({"scatter_pairs", [pairs](Rng& g) { return std::vector<Matrix>{uniform(pairs->size(), 1, g)}; },
                       [pairs](auto t) { return scatter_pairs(t[0], *pairs, 6); }});
      return cases;
    }

    double check_op(const OpCase& oc, Rng& rng, double eps)
    {
      std::vector<Matrix> params = oc.inputs(rng);
      Matrix readout_weights;
      auto probe = [&](Tape& tape, bool rg) {
        Probe p;
        for (auto& m : params)
          p.wrt.push_back(tape.leaf(m, rg));
        Tensor out = oc.op(p.wrt);
        if (readout_weights.empty())
          readout_weights = uniform(out.rows(), out.cols(), rng);
        p.loss = readout(out, readout_weights);
        return p;
      };
      auto ptrs = pointers(params);
      return max_gradient_error(probe, ptrs, eps);
    }

    Graph tiny_graph(Rng& rng)
    {
      CsbmParams cp;
      cp.nodes = 8;
      cp.classes = 2;
      cp.features = 5;
      cp.intra_p = 0.6;
      cp.inter_p = 0.2;
      cp.seed = rng();
      Graph g = make_csbm(cp);
      if (g.edges.empty())
        g.edges = {{0, 1}, {2, 3}};
      return g;
    }

    struct HookCase
    {
      BackboneKind backbone;
      Strategy strategy;
      Form form;
      AdversaryPhase phase;

      std::string name() const
      {
        std::string s = to_string(backbone) + "/" + to_string(strategy);
        if (strategy != Strategy::None)
        {
          s += "-" + to_string(form);
          if (form == Form::Adversarial)
            s += phase == AdversaryPhase::Model ? "/model-step" : "/generator-step";
        }
        return s;
      }
    };

    //! instances whose relu inputs come this close to 0 are redrawn
    constexpr double kKinkMargin = 1e-3;

    double check_hooks(const HookCase& hc, Rng& rng, double eps)
    {
      for (int attempt = 0;; ++attempt)
      {
        const Graph g = tiny_graph(rng);
        Model model = Model::create(hc.backbone, g, 4, rng());
        const ModelInputs inputs = model.prepare(g);
        const auto adjacency = std::make_shared<const Matrix>(dense_adjacency(g));

        PerturbSpec spec;
        spec.strategy = hc.strategy;
        spec.form = hc.form;
        spec.ball = {rng() % 2 ? Norm::L2 : Norm::LInf, 0.3};
        spec.generator_hidden = 3;
        spec.edge_embedding_dim = 3;
        spec.edge_budget = hc.form == Form::Random ? 0.3 : 0.5;
        if (hc.strategy == Strategy::Weight || hc.strategy == Strategy::Embedding)
        {
          const std::size_t count =
            hc.strategy == Strategy::Weight ? model.weight_layers() : model.embedding_layers();
          spec.layers = {rng() % count};
        }
        const std::uint64_t hook_seed = rng();

        GeneratorSet gens = GeneratorSet::create(spec, model, g, rng());
        // nonzero generator outputs so every path carries gradient
        for (Matrix* p : gens.parameters())
          *p = uniform(p->rows(), p->cols(), rng);

        std::vector<Matrix*> params;
        const bool generator_step = hc.form == Form::Adversarial && hc.phase == AdversaryPhase::Generator;
        if (generator_step)
          params = gens.parameters();
        else
          for (auto& w : model.weights())
            params.push_back(&w);

        // The model step treats every delta as a constant of theta: replay the
        // deltas of the first (analytic) pass in every nudged evaluation.
        std::map<std::string, Matrix> frozen;
        auto freeze = [&frozen](HookSet::Hook& hook, const std::string& key) {
          if (!hook)
            return;
          hook = [inner = hook, key, &frozen](const Tensor& target) {
            if (auto it = frozen.find(key); it != frozen.end())
              return target.tape().leaf(it->second);
            Tensor delta = inner(target);
            frozen.emplace(key, delta.value());
            return delta;
          };
        };

        auto probe = [&](Tape& tape, bool rg) {
          const auto bound = model.bind(tape, rg && !generator_step);
          const auto gen_bound = gens.bind(tape, rg && generator_step);
          HookContext ctx{&model, &g, adjacency, hook_seed, &gen_bound, hc.phase};
          HookSet hooks = build_hooks(spec, ctx);
          if (!generator_step)
          {
            freeze(hooks.features, "features");
            freeze(hooks.adjacency, "adjacency");
            for (auto& [l, h] : hooks.weights)
              freeze(h, "weight" + std::to_string(l));
            for (auto& [l, h] : hooks.embeddings)
              freeze(h, "embedding" + std::to_string(l));
          }
          const ForwardOutput out = model.forward(tape, inputs, bound, hooks);
          Probe p;
          p.loss = masked_cross_entropy(out.logits, g.labels, g.splits.train);
          p.wrt = generator_step ? gen_bound.tensors() : bound;
          return p;
        };
        {
          Tape tape;
          probe(tape, false);
          if (tape.kink_margin() < kKinkMargin && attempt < 100)
            continue;
        }
        return max_gradient_error(probe, params, eps);
      }
    }
  }

  GradCheckSummary run_gradcheck_suite(std::uint64_t seed, std::size_t instances_per_case, double tolerance,
                                       double eps)
  {
    GradCheckSummary summary;
    summary.tolerance = tolerance;
    Rng rng(derive_seed(seed, 0x67c));

    {
      Rng shape_rng(derive_seed(seed, 0x67c, 1));
      const auto names = op_cases(shape_rng);
      for (std::size_t c = 0; c < names.size(); ++c)
      {
        GradCheckCase gc{names[c].name, 0, 0.0, true};
        for (std::size_t i = 0; i < instances_per_case; ++i)
        {
          // fresh shapes per instance
          Rng instance_rng(derive_seed(seed, 0x67d, c * 1000 + i));
          const auto cases = op_cases(instance_rng);
          gc.max_rel_error = std::max(gc.max_rel_error, check_op(cases[c], instance_rng, eps));
          ++gc.instances;
        }
        gc.passed = gc.max_rel_error < tolerance;
        summary.cases.push_back(gc);
      }
    }

    std::vector<HookCase> hook_cases;
    for (BackboneKind b : {BackboneKind::Gcn, BackboneKind::Linkx})
    {
      hook_cases.push_back({b, Strategy::None, Form::Random, AdversaryPhase::Model});
      for (Strategy s : {Strategy::Node, Strategy::Edge, Strategy::Weight, Strategy::Embedding})
      {
        hook_cases.push_back({b, s, Form::Random, AdversaryPhase::Model});
        hook_cases.push_back({b, s, Form::Adversarial, AdversaryPhase::Model});
        hook_cases.push_back({b, s, Form::Adversarial, AdversaryPhase::Generator});
      }
    }
    for (const auto& hc : hook_cases)
    {
      GradCheckCase gc{hc.name(), 0, 0.0, true};
      for (std::size_t i = 0; i < instances_per_case; ++i)
      {
        gc.max_rel_error = std::max(gc.max_rel_error, check_hooks(hc, rng, eps));
        ++gc.instances;
      }
      gc.passed = gc.max_rel_error < tolerance;
      summary.cases.push_back(gc);
    }
    return summary;
  }
}
