#ifndef PGNN_TRAINING_HPP
#define PGNN_TRAINING_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pgnn/backbones.hpp"
#include "pgnn/graph.hpp"
#include "pgnn/perturb.hpp"

namespace pgnn
{
  enum class OptimizerKind
  {
    Sgd,
    Adam,
  };

  std::string to_string(OptimizerKind kind);
  OptimizerKind parse_optimizer(const std::string& name);

  struct TrainConfig
  {
    std::size_t epochs = 1000;
    double lr = 0.01;
    double weight_decay = 5e-4;
    OptimizerKind optimizer = OptimizerKind::Adam;
    //! adversarial runs: every inner_period-th step updates the generator
    std::size_t inner_period = 5;
    double generator_lr = 0.01;
    //! stop after this many epochs without a validation-accuracy improvement; 0 disables
    std::size_t patience = 100;
    //! false freezes the generator (an infinite inner period)
    bool update_generator = true;
    //! generator maximizes the task loss; false descends it instead
    bool generator_ascent = true;
    std::uint64_t seed = 0;

    //! throws std::invalid_argument naming the offending field
    void validate() const;
  };

  struct EpochRecord
  {
    //! loss of the step actually taken (perturbed forward for perturbed runs)
    double train_loss = 0.0;
    //! clean-forward metrics
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
    //! wall-clock of the optimization step, excluding evaluation
    double seconds = 0.0;
    //! true when this epoch updated generator parameters instead of the model
    bool generator_step = false;
  };

  struct RunReport
  {
    std::string method;
    std::string status = "ok"; //!< "ok" or "diverged"
    std::string error;
    std::uint64_t seed = 0;
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_val_acc = 0.0;
    //! test accuracy of the best-validation parameters (clean forward)
    double test_acc = 0.0;
    //! FNV-1a digest of the restored best parameters
    std::string params_digest;

    bool ok() const { return status == "ok"; }
    double train_seconds() const;
  };

  //! plain gradient step with L2 weight decay added to the gradient
  void sgd_step(std::span<Matrix* const> params, std::span<const Matrix> grads, double lr, double weight_decay = 0.0);

  struct AdamState
  {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t step = 0;
    std::vector<Matrix> m;
    std::vector<Matrix> v;
  };

  //! bias-corrected Adam; weight decay is added to the gradient
  void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state, double lr,
                 double weight_decay = 0.0);

  //! owns the optimizer state for one parameter group
  class Optimizer
  {
  public:
    Optimizer(OptimizerKind kind, double lr, double weight_decay);
    //! descends when sign = +1, ascends when sign = -1
    void step(std::span<Matrix* const> params, std::span<const Matrix> grads, double sign = 1.0);

  private:
    OptimizerKind kind_;
    double lr_;
    double weight_decay_;
    AdamState adam_;
  };

  //! 64-bit FNV-1a over the raw bytes of every parameter, as 16 hex digits
  std::string params_digest(std::span<const Matrix> params);

  RunReport train_standard(Model& model, const Graph& g, const TrainConfig& cfg);
  RunReport train_random(Model& model, const Graph& g, const TrainConfig& cfg, const PerturbSpec& spec);
  RunReport train_adversarial(Model& model, const Graph& g, const TrainConfig& cfg, const PerturbSpec& spec,
                              GeneratorSet& gens);

  //! dispatches on spec.strategy / spec.form; creates generators as needed
  RunReport train(Model& model, const Graph& g, const TrainConfig& cfg, const PerturbSpec& spec);
}

#endif // PGNN_TRAINING_HPP
