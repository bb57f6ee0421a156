#ifndef PGNN_PERTURB_HPP
#define PGNN_PERTURB_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pgnn/backbones.hpp"
#include "pgnn/graph.hpp"
#include "pgnn/tensor.hpp"

namespace pgnn
{
  enum class Norm
  {
    L2,   //!< per-row Euclidean norm
    LInf, //!< per-element absolute value
  };

  struct NormBall
  {
    Norm norm = Norm::L2;
    double radius = 0.1;
  };

  std::string to_string(Norm norm);
  Norm parse_norm(const std::string& name);

  //! L-inf: clamp to [-r, r]; L2: scale each row by min(1, r / |row|)
  Matrix project_to_ball(const Matrix& d, const NormBall& ball);

  //! L-inf: iid uniform in [-r, r]; L2: iid Gaussian rows rescaled to norm exactly r
  Matrix sample_random_delta(Shape shape, const NormBall& ball, std::uint64_t seed);

  //! Edge-drop perturbation: dense form has -1 at both (u,v) and (v,u) for every
  //! dropped edge and 0 elsewhere.
  struct EdgeMask
  {
    std::size_t num_nodes = 0;
    std::vector<Edge> dropped;

    Matrix dense() const;
  };

  EdgeMask random_edge_drop(const Graph& g, double drop_prob, std::uint64_t seed);

  //! number of support entries kept by a top-t selection: ceil(t * k)
  std::size_t top_t_count(std::size_t support_size, double t);

  //! The ceil(t * |support|) support entries with the largest scores; ties go to
  //! the lexicographically smaller edge. Result is sorted by (u, v).
  std::vector<Edge> top_t_select(std::span<const double> scores, std::span<const Edge> support, double t);

  //! Row-wise two-layer MLP producing a bounded additive delta:
  //! delta = r * tanh(relu(T B1) B2), followed by a row clip for the L2 ball.
  class DeltaGenerator
  {
  public:
    DeltaGenerator(std::size_t width, std::size_t hidden, std::uint64_t seed, bool zero_output = true);

    struct Bound
    {
      Tensor hidden;
      Tensor output;
    };

    Bound bind(Tape& tape, bool requires_grad) const;
    std::size_t width() const noexcept { return params_[0].rows(); }
    std::vector<Matrix>& parameters() noexcept { return params_; }
    const std::vector<Matrix>& parameters() const noexcept { return params_; }

  private:
    std::vector<Matrix> params_;
  };

  Tensor make_adversarial_delta(const DeltaGenerator::Bound& gen, const Tensor& target, const NormBall& ball);

  //! Node embeddings Z = relu(A B1) B2 scored pairwise as M = Z Z^T.
  class EdgeGenerator
  {
  public:
    EdgeGenerator(std::size_t nodes, std::size_t hidden, std::size_t embedding_dim, double budget, std::uint64_t seed);

    struct Bound
    {
      Tensor hidden;
      Tensor output;
    };

    Bound bind(Tape& tape, bool requires_grad) const;
    double budget() const noexcept { return budget_; }
    std::vector<Matrix>& parameters() noexcept { return params_; }
    const std::vector<Matrix>& parameters() const noexcept { return params_; }

  private:
    std::vector<Matrix> params_;
    double budget_;
  };

  Tensor edge_embeddings(const EdgeGenerator::Bound& gen, const Tensor& adjacency);
  //! full n x n score matrix M = Z Z^T
  Matrix edge_scores(const EdgeGenerator& gen, const Matrix& adjacency);

  struct PgdConfig
  {
    double step = 0.01;
    double budget = 0.1;
    std::size_t steps = 10;
  };

  //! Signed-gradient ascent from zero, clamped to the L-inf ball after every
  //! step. loss_fn receives the current delta as a grad-requiring leaf.
  Matrix pgd_perturb(const std::function<Tensor(const Tensor& delta)>& loss_fn, Shape shape, const PgdConfig& cfg);

  enum class Strategy
  {
    None,
    Node,
    Edge,
    Weight,
    Embedding,
  };

  enum class Form
  {
    Random,
    Adversarial,
  };

  std::string to_string(Strategy s);
  std::string to_string(Form f);
  Strategy parse_strategy(const std::string& name);
  Form parse_form(const std::string& name);

  //! One perturbation variant: strategy x form with its budget.
  struct PerturbSpec
  {
    Strategy strategy = Strategy::None;
    Form form = Form::Random;
    NormBall ball;
    //! radius is a multiple of the target's scale (mean row norm for L2, mean |entry| for L-inf)
    bool relative_radius = true;
    //! drop probability (random) or top fraction t (adversarial) for edges
    double edge_budget = 0.05;
    //! weight / embedding layers; empty selects the backbone default
    std::vector<std::size_t> layers;
    std::size_t generator_hidden = 64;
    std::size_t edge_embedding_dim = 16;

    std::vector<std::size_t> resolved_layers(const Model& model) const;
    //! throws std::invalid_argument for combinations the backbone cannot honor
    void validate(const Model& model) const;
    std::string label() const;
  };

  //! absolute radius for a target under the spec's scaling rule
  double effective_radius(const PerturbSpec& spec, const Matrix& target);

  //! adversarial generator parameters (beta) for one run
  struct GeneratorSet
  {
    std::optional<DeltaGenerator> features;
    std::map<std::size_t, DeltaGenerator> weights;
    std::map<std::size_t, DeltaGenerator> embeddings;
    std::optional<EdgeGenerator> edges;

    static GeneratorSet create(const PerturbSpec& spec, const Model& model, const Graph& g, std::uint64_t seed);
    std::vector<Matrix*> parameters();

    struct Bound
    {
      std::optional<DeltaGenerator::Bound> features;
      std::map<std::size_t, DeltaGenerator::Bound> weights;
      std::map<std::size_t, DeltaGenerator::Bound> embeddings;
      std::optional<EdgeGenerator::Bound> edges;

      //! tensors in the same order as GeneratorSet::parameters()
      std::vector<Tensor> tensors() const;
    };

    Bound bind(Tape& tape, bool requires_grad) const;
  };

  enum class AdversaryPhase
  {
    Model,     //!< hard edge drops, generator treated as constant
    Generator, //!< soft edge magnitudes so beta receives gradient
  };

  struct HookContext
  {
    const Model* model = nullptr;
    const Graph* graph = nullptr;
    //! 0/1 adjacency of the graph; generator input for edge perturbations
    std::shared_ptr<const Matrix> adjacency;
    std::uint64_t seed = 0;
    const GeneratorSet::Bound* generators = nullptr;
    AdversaryPhase phase = AdversaryPhase::Model;
  };

  HookSet build_hooks(const PerturbSpec& spec, const HookContext& ctx);
}

#endif // PGNN_PERTURB_HPP
