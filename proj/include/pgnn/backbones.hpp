#ifndef PGNN_BACKBONES_HPP
#define PGNN_BACKBONES_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pgnn/graph.hpp"
#include "pgnn/rng.hpp"
#include "pgnn/tensor.hpp"

namespace pgnn
{
  enum class BackboneKind
  {
    Gcn,
    Linkx,
  };

  std::string to_string(BackboneKind kind);
  BackboneKind parse_backbone(const std::string& name);

  //! two-layer GCN: F -> hidden -> classes
  struct GcnParams
  {
    Matrix w0;
    Matrix w1;
  };

  //! LINKX with single-layer adjacency/feature encoders and a linear head
  struct LinkxParams
  {
    Matrix adjacency_weight; // n x h
    Matrix feature_weight;   // F x h
    Matrix combine_weight;   // 2h x h
    Matrix output_weight;    // h x c
  };

  //! Additive perturbation hooks. Each hook receives the (already bound) target
  //! and returns a delta of the same shape that is added before any nonlinearity.
  //!
  //! Injection points:
  //!   features   -> X
  //!   adjacency  -> the propagation operator of the first layer (normalized
  //!                 adjacency for GCN, raw adjacency for LINKX)
  //!   weights    -> weight matrix by layer index
  //!   embeddings -> pre-activation output of a layer by index
  struct HookSet
  {
    using Hook = std::function<Tensor(const Tensor& target)>;

    Hook features;
    Hook adjacency;
    std::map<std::size_t, Hook> weights;
    std::map<std::size_t, Hook> embeddings;

    bool empty() const;
    //! throws std::invalid_argument when hooks of more than one strategy are set
    void validate() const;
  };

  struct ForwardOutput
  {
    Tensor logits;
    //! representation used by the uniformity statistic
    Tensor hidden;
  };

  //! Layer-0 pre-activation is adj_pert (X_pert W0_pert) + dH0; logits are
  //! adj (relu(.) W1_pert) + dH1. The adjacency hook acts on the first layer only.
  ForwardOutput gcn_forward(const Tensor& features, const Tensor& norm_adj, const Tensor& w0, const Tensor& w1,
                            const HookSet& hooks);

  //! embedding layers: 0 adjacency branch, 1 feature branch, 2 combined
  ForwardOutput linkx_forward(const Tensor& features, const Tensor& adjacency, std::span<const Tensor> weights,
                              const HookSet& hooks);

  Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);
  GcnParams init_gcn(std::size_t features, std::size_t hidden, std::size_t classes, std::uint64_t seed);
  LinkxParams init_linkx(std::size_t nodes, std::size_t features, std::size_t hidden, std::size_t classes,
                         std::uint64_t seed);

  //! constant model inputs, shared across forward passes
  struct ModelInputs
  {
    std::shared_ptr<const Matrix> features;
    //! normalized adjacency (GCN) or 0/1 adjacency (LINKX)
    std::shared_ptr<const Matrix> structure;
  };

  //! A backbone with its trainable weights.
  class Model
  {
  public:
    Model(GcnParams params);
    Model(LinkxParams params);

    static Model create(BackboneKind kind, const Graph& g, std::size_t hidden, std::uint64_t seed);

    BackboneKind kind() const noexcept { return kind_; }
    std::vector<Matrix>& weights() noexcept { return weights_; }
    const std::vector<Matrix>& weights() const noexcept { return weights_; }

    std::size_t weight_layers() const noexcept { return weights_.size(); }
    std::size_t embedding_layers() const noexcept { return kind_ == BackboneKind::Gcn ? 2 : 3; }

    ModelInputs prepare(const Graph& g) const;
    std::vector<Tensor> bind(Tape& tape, bool requires_grad) const;
    ForwardOutput forward(Tape& tape, const ModelInputs& inputs, std::span<const Tensor> bound,
                          const HookSet& hooks) const;

    //! clean forward without gradients
    Matrix logits(const ModelInputs& inputs) const;
    Matrix hidden(const ModelInputs& inputs) const;

  private:
    BackboneKind kind_;
    std::vector<Matrix> weights_;
  };
}

#endif // PGNN_BACKBONES_HPP
