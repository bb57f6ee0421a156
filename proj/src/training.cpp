#include "pgnn/training.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "pgnn/evalharness.hpp"
#include "pgnn/rng.hpp"

namespace pgnn
{
  std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::Sgd ? "sgd" : "adam"; }

  OptimizerKind parse_optimizer(const std::string& name)
  {
    if (name == "sgd")
      return OptimizerKind::Sgd;
    if (name == "adam")
      return OptimizerKind::Adam;
    throw std::invalid_argument("unknown optimizer '" + name + "' (expected sgd or adam)");
  }

  void TrainConfig::validate() const
  {
    if (epochs < 1)
      throw std::invalid_argument("train.epochs must be >= 1");
    if (!(lr > 0.0) || !std::isfinite(lr))
      throw std::invalid_argument("train.lr must be positive");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay))
      throw std::invalid_argument("train.weight_decay must be non-negative");
    if (inner_period < 1)
      throw std::invalid_argument("train.inner_period must be >= 1");
    if (!(generator_lr > 0.0) || !std::isfinite(generator_lr))
      throw std::invalid_argument("train.generator_lr must be positive");
  }

  double RunReport::train_seconds() const
  {
    double total = 0.0;
    for (const auto& e : epochs)
      total += e.seconds;
    return total;
  }

  namespace
  {
    void check_step_args(std::span<Matrix* const> params, std::span<const Matrix> grads)
    {
      if (params.size() != grads.size())
        throw std::invalid_argument("optimizer: " + std::to_string(grads.size()) + " gradients for " +
                                    std::to_string(params.size()) + " parameters");
      for (std::size_t k = 0; k < params.size(); ++k)
        if (params[k]->shape() != grads[k].shape())
          throw ShapeError("optimizer: gradient " + to_string(grads[k].shape()) + " for parameter " +
                           to_string(params[k]->shape()));
    }
  }

  void sgd_step(std::span<Matrix* const> params, std::span<const Matrix> grads, double lr, double weight_decay)
  {
    check_step_args(params, grads);
    for (std::size_t k = 0; k < params.size(); ++k)
    {
      auto w = params[k]->values();
      auto g = grads[k].values();
      for (std::size_t e = 0; e < w.size(); ++e)
        w[e] -= lr * (g[e] + weight_decay * w[e]);
    }
  }

  void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state, double lr,
                 double weight_decay)
  {
    check_step_args(params, grads);
    if (state.m.empty())
      for (const Matrix* p : params)
      {
        state.m.emplace_back(p->rows(), p->cols());
        state.v.emplace_back(p->rows(), p->cols());
      }
    if (state.m.size() != params.size())
      throw std::invalid_argument("adam_step: optimizer state belongs to a different parameter group");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k)
    {
      auto w = params[k]->values();
      auto g = grads[k].values();
      auto m = state.m[k].values();
      auto v = state.v[k].values();
      for (std::size_t e = 0; e < w.size(); ++e)
      {
        const double ge = g[e] + weight_decay * w[e];
        m[e] = state.beta1 * m[e] + (1.0 - state.beta1) * ge;
        v[e] = state.beta2 * v[e] + (1.0 - state.beta2) * ge * ge;
        w[e] -= lr * (m[e] / c1) / (std::sqrt(v[e] / c2) + state.epsilon);
      }
    }
  }

  Optimizer::Optimizer(OptimizerKind kind, double lr, double weight_decay)
    : kind_(kind), lr_(lr), weight_decay_(weight_decay)
  {
  }

  void Optimizer::step(std::span<Matrix* const> params, std::span<const Matrix> grads, double sign)
  {
    std::vector<Matrix> signed_grads;
    std::span<const Matrix> g = grads;
    if (sign != 1.0)
    {
      signed_grads.assign(grads.begin(), grads.end());
      for (auto& m : signed_grads)
        for (double& v : m.values())
          v *= sign;
      g = signed_grads;
    }
    if (kind_ == OptimizerKind::Sgd)
      sgd_step(params, g, lr_, weight_decay_);
    else
      adam_step(params, g, adam_, lr_, weight_decay_);
  }

  std::string params_digest(std::span<const Matrix> params)
  {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](const void* data, std::size_t bytes) {
      const auto* p = static_cast<const unsigned char*>(data);
      for (std::size_t i = 0; i < bytes; ++i)
      {
        h ^= p[i];
        h *= 0x100000001b3ULL;
      }
    };
    for (const Matrix& m : params)
    {
      const std::uint64_t dims[2] = {m.rows(), m.cols()};
      feed(dims, sizeof dims);
      feed(m.values().data(), m.size() * sizeof(double));
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, h >>= 4)
      out[static_cast<std::size_t>(i)] = hex[h & 0xf];
    return out;
  }

  namespace
  {
    enum Stream : std::uint64_t
    {
      kEpochNoise = 31,
      kGenerators = 32,
    };

    using Clock = std::chrono::steady_clock;

    std::vector<Matrix*> model_params(Model& model)
    {
      std::vector<Matrix*> out;
      for (auto& w : model.weights())
        out.push_back(&w);
      return out;
    }

    std::vector<Matrix> grads_of(std::span<const Tensor> tensors)
    {
      std::vector<Matrix> out;
      out.reserve(tensors.size());
      for (const auto& t : tensors)
        out.push_back(t.has_grad() ? t.grad() : Matrix(t.rows(), t.cols()));
      return out;
    }

    //! one optimization step; returns the loss it was computed on
    using StepFn = std::function<double(std::size_t epoch, bool& generator_step)>;

    //! Shared epoch loop: step, clean evaluation, early stopping and restoring
    //! the best-validation parameters.
    RunReport run_loop(Model& model, const Graph& g, const TrainConfig& cfg, const std::string& method,
                       const StepFn& step)
    {
      cfg.validate();
      if (g.splits.train.empty() || g.splits.val.empty() || g.splits.test.empty())
        throw DatasetError("training needs non-empty train, validation and test splits");

      RunReport report;
      report.method = method;
      report.seed = cfg.seed;
      const ModelInputs clean = model.prepare(g);
      std::vector<Matrix> best = model.weights();
      bool have_best = false;

      for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch)
      {
        EpochRecord rec;
        try
        {
          const auto start = Clock::now();
          rec.train_loss = step(epoch, rec.generator_step);
          rec.seconds = std::chrono::duration<double>(Clock::now() - start).count();

          const Matrix logits = model.logits(clean);
          rec.train_acc = accuracy(logits, g.labels, g.splits.train);
          rec.val_acc = accuracy(logits, g.labels, g.splits.val);
          Tape tape;
          rec.val_loss =
            masked_cross_entropy(tape.leaf(logits), g.labels, g.splits.val).value()(0, 0);
        }
        catch (const NumericError& e)
        {
          report.status = "diverged";
          report.error = "epoch " + std::to_string(epoch) + ": " + e.what();
          break;
        }
        report.epochs.push_back(rec);

        if (!have_best || rec.val_acc > report.best_val_acc)
        {
          have_best = true;
          report.best_val_acc = rec.val_acc;
          report.best_epoch = epoch;
          best = model.weights();
        }
        else if (cfg.patience > 0 && epoch - report.best_epoch >= cfg.patience)
          break;
      }

      model.weights() = std::move(best);
      if (report.ok())
        report.test_acc = accuracy(model.logits(clean), g.labels, g.splits.test);
      report.params_digest = params_digest(model.weights());
      return report;
    }

    double model_step(Model& model, const ModelInputs& inputs, const Graph& g, Optimizer& opt,
                      const std::function<HookSet(Tape&)>& make_hooks)
    {
      Tape tape;
      const auto bound = model.bind(tape, true);
      const HookSet hooks = make_hooks ? make_hooks(tape) : HookSet{};
      const ForwardOutput out = model.forward(tape, inputs, bound, hooks);
      const Tensor loss = masked_cross_entropy(out.logits, g.labels, g.splits.train);
      tape.backward(loss);
      auto params = model_params(model);
      opt.step(params, grads_of(bound));
      return loss.value()(0, 0);
    }
  }

  RunReport train_standard(Model& model, const Graph& g, const TrainConfig& cfg)
  {
    const ModelInputs inputs = model.prepare(g);
    Optimizer opt(cfg.optimizer, cfg.lr, cfg.weight_decay);
    return run_loop(model, g, cfg, "plain", [&](std::size_t, bool&) {
      return model_step(model, inputs, g, opt, nullptr);
    });
  }

  RunReport train_random(Model& model, const Graph& g, const TrainConfig& cfg, const PerturbSpec& spec)
  {
    if (spec.strategy == Strategy::None)
      return train_standard(model, g, cfg);
    if (spec.form != Form::Random)
      throw std::invalid_argument("train_random requires a random-form perturbation");
    spec.validate(model);
    const ModelInputs inputs = model.prepare(g);
    Optimizer opt(cfg.optimizer, cfg.lr, cfg.weight_decay);
    return run_loop(model, g, cfg, spec.label(), [&](std::size_t epoch, bool&) {
      return model_step(model, inputs, g, opt, [&](Tape&) {
        HookContext ctx{&model, &g, nullptr, derive_seed(cfg.seed, kEpochNoise, epoch), nullptr, AdversaryPhase::Model};
        return build_hooks(spec, ctx);
      });
    });
  }

  RunReport train_adversarial(Model& model, const Graph& g, const TrainConfig& cfg, const PerturbSpec& spec,
                              GeneratorSet& gens)
  {
    if (spec.form != Form::Adversarial || spec.strategy == Strategy::None)
      throw std::invalid_argument("train_adversarial requires an adversarial-form perturbation");
    spec.validate(model);
    const ModelInputs inputs = model.prepare(g);
    std::shared_ptr<const Matrix> adjacency;
    if (spec.strategy == Strategy::Edge)
      adjacency = model.kind() == BackboneKind::Linkx ? inputs.structure
                                                      : std::make_shared<const Matrix>(dense_adjacency(g));

    Optimizer opt(cfg.optimizer, cfg.lr, cfg.weight_decay);
    Optimizer gen_opt(cfg.optimizer, cfg.generator_lr, 0.0);
    const double gen_sign = cfg.generator_ascent ? -1.0 : 1.0;

    return run_loop(model, g, cfg, spec.label(), [&](std::size_t epoch, bool& generator_step) {
      const std::size_t t = epoch % cfg.inner_period + 1;
      generator_step = cfg.update_generator && t == cfg.inner_period;
      const std::uint64_t seed = derive_seed(cfg.seed, kEpochNoise, epoch);
      if (!generator_step)
        return model_step(model, inputs, g, opt, [&](Tape& tape) {
          const GeneratorSet::Bound gen_bound = gens.bind(tape, false);
          HookContext ctx{&model, &g, adjacency, seed, &gen_bound, AdversaryPhase::Model};
          return build_hooks(spec, ctx);
        });

      Tape tape;
      const auto bound = model.bind(tape, false);
      const GeneratorSet::Bound gen_bound = gens.bind(tape, true);
      HookContext ctx{&model, &g, adjacency, seed, &gen_bound, AdversaryPhase::Generator};
      const ForwardOutput out = model.forward(tape, inputs, bound, build_hooks(spec, ctx));
      const Tensor loss = masked_cross_entropy(out.logits, g.labels, g.splits.train);
      tape.backward(loss);
      auto params = gens.parameters();
      gen_opt.step(params, grads_of(gen_bound.tensors()), gen_sign);
      return loss.value()(0, 0);
    });
  }

  RunReport train(Model& model, const Graph& g, const TrainConfig& cfg, const PerturbSpec& spec)
  {
    if (spec.strategy == Strategy::None)
      return train_standard(model, g, cfg);
    if (spec.form == Form::Random)
      return train_random(model, g, cfg, spec);
    GeneratorSet gens = GeneratorSet::create(spec, model, g, derive_seed(cfg.seed, kGenerators));
    return train_adversarial(model, g, cfg, spec, gens);
  }
}
