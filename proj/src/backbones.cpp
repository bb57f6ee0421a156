#include "pgnn/backbones.hpp"

#include <cmath>
#include <stdexcept>

namespace pgnn
{
  std::string to_string(BackboneKind kind)
  {
    return kind == BackboneKind::Gcn ? "gcn" : "linkx";
  }

  BackboneKind parse_backbone(const std::string& name)
  {
    if (name == "gcn")
      return BackboneKind::Gcn;
    if (name == "linkx")
      return BackboneKind::Linkx;
    throw std::invalid_argument("unknown backbone '" + name + "' (expected gcn or linkx)");
  }

  bool HookSet::empty() const
  {
    return !features && !adjacency && weights.empty() && embeddings.empty();
  }

  void HookSet::validate() const
  {
    const int active = (features ? 1 : 0) + (adjacency ? 1 : 0) + (weights.empty() ? 0 : 1) + (embeddings.empty() ? 0 : 1);
    if (active > 1)
      throw std::invalid_argument("HookSet: at most one perturbation strategy may be active per forward pass");
  }

  namespace
  {
    Tensor perturbed(const HookSet::Hook& hook, const Tensor& target, const char* what)
    {
      if (!hook)
        return target;
      Tensor delta = hook(target);
      if (delta.shape() != target.shape())
        throw ShapeError(std::string(what) + " delta has shape " + to_string(delta.shape()) + ", target " +
                         to_string(target.shape()));
      return add(target, delta);
    }

    const HookSet::Hook* find(const std::map<std::size_t, HookSet::Hook>& hooks, std::size_t layer)
    {
      auto it = hooks.find(layer);
      return it == hooks.end() ? nullptr : &it->second;
    }

    Tensor perturbed_at(const std::map<std::size_t, HookSet::Hook>& hooks, std::size_t layer, const Tensor& target,
                        const char* what)
    {
      const auto* hook = find(hooks, layer);
      return hook ? perturbed(*hook, target, what) : target;
    }

    void check_layers(const std::map<std::size_t, HookSet::Hook>& hooks, std::size_t count, const char* what)
    {
      for (const auto& [layer, hook] : hooks)
        if (layer >= count)
          throw std::invalid_argument(std::string(what) + " hook targets layer " + std::to_string(layer) +
                                      " but the backbone has " + std::to_string(count));
    }
  }

  ForwardOutput gcn_forward(const Tensor& features, const Tensor& norm_adj, const Tensor& w0, const Tensor& w1,
                            const HookSet& hooks)
  {
    hooks.validate();
    check_layers(hooks.weights, 2, "weight");
    check_layers(hooks.embeddings, 2, "embedding");

    const Tensor x = perturbed(hooks.features, features, "feature");
    const Tensor a0 = perturbed(hooks.adjacency, norm_adj, "adjacency");
    const Tensor w0p = perturbed_at(hooks.weights, 0, w0, "weight");
    const Tensor w1p = perturbed_at(hooks.weights, 1, w1, "weight");

    const Tensor z0 = perturbed_at(hooks.embeddings, 0, matmul(a0, matmul(x, w0p)), "embedding");
    const Tensor h1 = relu(z0);
    const Tensor z1 = perturbed_at(hooks.embeddings, 1, matmul(norm_adj, matmul(h1, w1p)), "embedding");
    return {z1, z0};
  }

  ForwardOutput linkx_forward(const Tensor& features, const Tensor& adjacency, std::span<const Tensor> weights,
                              const HookSet& hooks)
  {
    if (weights.size() != 4)
      throw std::invalid_argument("linkx_forward expects 4 weight tensors");
    hooks.validate();
    check_layers(hooks.weights, 4, "weight");
    check_layers(hooks.embeddings, 3, "embedding");

    const Tensor x = perturbed(hooks.features, features, "feature");
    const Tensor a = perturbed(hooks.adjacency, adjacency, "adjacency");
    Tensor w[4];
    for (std::size_t k = 0; k < 4; ++k)
      w[k] = perturbed_at(hooks.weights, k, weights[k], "weight");

    const Tensor h_adj = relu(perturbed_at(hooks.embeddings, 0, matmul(a, w[0]), "embedding"));
    const Tensor h_feat = relu(perturbed_at(hooks.embeddings, 1, matmul(x, w[1]), "embedding"));
    const Tensor mixed = add(add(matmul(concat_cols(h_adj, h_feat), w[2]), h_adj), h_feat);
    const Tensor z = perturbed_at(hooks.embeddings, 2, mixed, "embedding");
    return {matmul(relu(z), w[3]), z};
  }

  Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng)
  {
    if (fan_in == 0 || fan_out == 0)
      throw std::invalid_argument("glorot_uniform: dimensions must be positive");
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix w(fan_in, fan_out);
    for (double& v : w.values())
      v = dist(rng);
    return w;
  }

  GcnParams init_gcn(std::size_t features, std::size_t hidden, std::size_t classes, std::uint64_t seed)
  {
    Rng rng(derive_seed(seed, 0x6763'6e00));
    GcnParams p;
    p.w0 = glorot_uniform(features, hidden, rng);
    p.w1 = glorot_uniform(hidden, classes, rng);
    return p;
  }

  LinkxParams init_linkx(std::size_t nodes, std::size_t features, std::size_t hidden, std::size_t classes,
                         std::uint64_t seed)
  {
    Rng rng(derive_seed(seed, 0x6c69'6e6b));
    LinkxParams p;
    p.adjacency_weight = glorot_uniform(nodes, hidden, rng);
    p.feature_weight = glorot_uniform(features, hidden, rng);
    p.combine_weight = glorot_uniform(2 * hidden, hidden, rng);
    p.output_weight = glorot_uniform(hidden, classes, rng);
    return p;
  }

  Model::Model(GcnParams params) : kind_(BackboneKind::Gcn)
  {
    if (params.w0.cols() != params.w1.rows())
      throw ShapeError("GcnParams: hidden widths disagree");
    weights_ = {std::move(params.w0), std::move(params.w1)};
  }

  Model::Model(LinkxParams p) : kind_(BackboneKind::Linkx)
  {
    const std::size_t h = p.adjacency_weight.cols();
    if (p.feature_weight.cols() != h || p.combine_weight.rows() != 2 * h || p.combine_weight.cols() != h ||
        p.output_weight.rows() != h)
      throw ShapeError("LinkxParams: inconsistent hidden widths");
    weights_ = {std::move(p.adjacency_weight), std::move(p.feature_weight), std::move(p.combine_weight),
                std::move(p.output_weight)};
  }

  Model Model::create(BackboneKind kind, const Graph& g, std::size_t hidden, std::uint64_t seed)
  {
    const auto classes = static_cast<std::size_t>(g.num_classes());
    if (kind == BackboneKind::Gcn)
      return Model(init_gcn(g.num_features(), hidden, classes, seed));
    return Model(init_linkx(g.num_nodes, g.num_features(), hidden, classes, seed));
  }

  ModelInputs Model::prepare(const Graph& g) const
  {
    ModelInputs in;
    in.features = std::make_shared<const Matrix>(g.features);
    if (kind_ == BackboneKind::Gcn)
      in.structure = std::make_shared<const Matrix>(normalize_adjacency(g).matrix);
    else
      in.structure = std::make_shared<const Matrix>(dense_adjacency(g));
    if (in.features->rows() != in.structure->rows())
      throw ShapeError("feature rows do not match node count");
    if (in.features->cols() != weights_[kind_ == BackboneKind::Gcn ? 0 : 1].rows())
      throw ShapeError("feature width does not match the model's input width");
    if (kind_ == BackboneKind::Linkx && in.structure->cols() != weights_[0].rows())
      throw ShapeError("LINKX adjacency encoder expects " + std::to_string(weights_[0].rows()) + " nodes");
    return in;
  }

  std::vector<Tensor> Model::bind(Tape& tape, bool requires_grad) const
  {
    std::vector<Tensor> out;
    out.reserve(weights_.size());
    for (const auto& w : weights_)
      out.push_back(tape.leaf(w, requires_grad));
    return out;
  }

  ForwardOutput Model::forward(Tape& tape, const ModelInputs& inputs, std::span<const Tensor> bound,
                               const HookSet& hooks) const
  {
    if (bound.size() != weights_.size())
      throw std::invalid_argument("Model::forward: expected " + std::to_string(weights_.size()) + " bound weights");
    const Tensor x = tape.leaf(inputs.features);
    const Tensor s = tape.leaf(inputs.structure);
    if (kind_ == BackboneKind::Gcn)
      return gcn_forward(x, s, bound[0], bound[1], hooks);
    return linkx_forward(x, s, bound, hooks);
  }

  Matrix Model::logits(const ModelInputs& inputs) const
  {
    Tape tape;
    auto bound = bind(tape, false);
    return forward(tape, inputs, bound, {}).logits.value();
  }

  Matrix Model::hidden(const ModelInputs& inputs) const
  {
    Tape tape;
    auto bound = bind(tape, false);
    return forward(tape, inputs, bound, {}).hidden.value();
  }
}
