#include "pgnn/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace pgnn
{
  using nlohmann::json;

  namespace
  {
    //! Typed access to one JSON object that remembers which keys were read.
    class Section
    {
    public:
      Section(const json& j, std::string path) : j_(j), path_(std::move(path))
      {
        if (!j_.is_object())
          throw ConfigError(where() + " must be an object");
      }

      ~Section() = default;

      bool has(const std::string& key) const { return j_.contains(key); }

      const json& raw(const std::string& key)
      {
        seen_.insert(key);
        return j_.at(key);
      }

      std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

      template <class T>
      void get(const std::string& key, T& out)
      {
        if (!has(key))
          return;
        const json& v = raw(key);
        try
        {
          if constexpr (std::is_same_v<T, bool>)
          {
            if (!v.is_boolean())
              throw ConfigError("expected true or false");
          }
          else if constexpr (std::is_unsigned_v<T>)
          {
            if (!v.is_number_unsigned())
              throw ConfigError("expected a non-negative integer");
          }
          else if constexpr (std::is_floating_point_v<T>)
          {
            if (!v.is_number())
              throw ConfigError("expected a number");
          }
          else if constexpr (std::is_same_v<T, std::string>)
          {
            if (!v.is_string())
              throw ConfigError("expected a string");
          }
          out = v.get<T>();
        }
        catch (const std::exception& e)
        {
          throw ConfigError(key_path(key) + ": " + e.what());
        }
      }

      //! throws on keys never read
      void finish() const
      {
        for (auto it = j_.begin(); it != j_.end(); ++it)
          if (!seen_.count(it.key()))
            throw ConfigError("unknown key '" + key_path(it.key()) + "'");
      }

    private:
      std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

      const json& j_;
      std::string path_;
      std::set<std::string> seen_;
    };

    template <class Enum, class Parse>
    void get_enum(Section& s, const std::string& key, Enum& out, Parse parse)
    {
      std::string name;
      s.get(key, name);
      if (!s.has(key))
        return;
      try
      {
        out = parse(name);
      }
      catch (const std::invalid_argument& e)
      {
        throw ConfigError(s.key_path(key) + ": " + e.what());
      }
    }

    CsbmParams parse_csbm(const json& j, const std::string& path)
    {
      Section s(j, path);
      CsbmParams p;
      s.get("nodes", p.nodes);
      s.get("classes", p.classes);
      s.get("features", p.features);
      s.get("intra_p", p.intra_p);
      s.get("inter_p", p.inter_p);
      s.get("feature_noise", p.feature_noise);
      s.get("seed", p.seed);
      s.finish();
      return p;
    }

    DatasetConfig parse_dataset(const json& j, const std::string& path)
    {
      Section s(j, path);
      DatasetConfig d;
      s.get("name", d.name);
      if (s.has("path") && s.has("csbm"))
        throw ConfigError(path + ": set either 'path' or 'csbm', not both");
      if (s.has("path"))
      {
        std::string p;
        s.get("path", p);
        d.path = p;
        d.csbm.reset();
      }
      if (s.has("csbm"))
        d.csbm = parse_csbm(s.raw("csbm"), s.key_path("csbm"));
      s.finish();
      return d;
    }

    PerturbSpec parse_perturb(const json& j, const std::string& path)
    {
      Section s(j, path);
      PerturbSpec p;
      get_enum(s, "strategy", p.strategy, parse_strategy);
      get_enum(s, "form", p.form, parse_form);
      get_enum(s, "norm", p.ball.norm, parse_norm);
      s.get("radius", p.ball.radius);
      s.get("relative_radius", p.relative_radius);
      s.get("edge_budget", p.edge_budget);
      if (s.has("layers"))
      {
        const json& l = s.raw("layers");
        if (!l.is_array())
          throw ConfigError(s.key_path("layers") + ": expected an array of layer indices");
        for (const auto& v : l)
        {
          if (!v.is_number_unsigned())
            throw ConfigError(s.key_path("layers") + ": expected non-negative integers");
          p.layers.push_back(v.get<std::size_t>());
        }
      }
      s.get("generator_hidden", p.generator_hidden);
      s.get("edge_embedding_dim", p.edge_embedding_dim);
      s.finish();
      return p;
    }

    std::vector<PerturbSpec> parse_perturb_list(Section& s, const std::string& key)
    {
      const json& arr = s.raw(key);
      if (!arr.is_array())
        throw ConfigError(s.key_path(key) + ": expected an array");
      std::vector<PerturbSpec> out;
      for (std::size_t i = 0; i < arr.size(); ++i)
        out.push_back(parse_perturb(arr[i], s.key_path(key) + "[" + std::to_string(i) + "]"));
      return out;
    }

    TrainConfig parse_train(const json& j, const std::string& path)
    {
      Section s(j, path);
      TrainConfig t;
      s.get("epochs", t.epochs);
      s.get("lr", t.lr);
      s.get("weight_decay", t.weight_decay);
      get_enum(s, "optimizer", t.optimizer, parse_optimizer);
      s.get("inner_period", t.inner_period);
      s.get("generator_lr", t.generator_lr);
      s.get("patience", t.patience);
      s.get("update_generator", t.update_generator);
      s.get("generator_ascent", t.generator_ascent);
      s.finish();
      return t;
    }

    json perturb_json(const PerturbSpec& p)
    {
      return {{"strategy", to_string(p.strategy)},
              {"form", to_string(p.form)},
              {"norm", to_string(p.ball.norm)},
              {"radius", p.ball.radius},
              {"relative_radius", p.relative_radius},
              {"edge_budget", p.edge_budget},
              {"layers", p.layers},
              {"generator_hidden", p.generator_hidden},
              {"edge_embedding_dim", p.edge_embedding_dim}};
    }

    json dataset_json(const DatasetConfig& d)
    {
      json j = {{"name", d.name}};
      if (d.path)
        j["path"] = d.path->string();
      if (d.csbm)
        j["csbm"] = {{"nodes", d.csbm->nodes},     {"classes", d.csbm->classes}, {"features", d.csbm->features},
                     {"intra_p", d.csbm->intra_p}, {"inter_p", d.csbm->inter_p}, {"feature_noise", d.csbm->feature_noise},
                     {"seed", d.csbm->seed}};
      return j;
    }

    json config_json(const ExperimentConfig& c)
    {
      auto specs = [](const std::vector<PerturbSpec>& v) {
        json a = json::array();
        for (const auto& p : v)
          a.push_back(perturb_json(p));
        return a;
      };
      json datasets = json::array();
      for (const auto& d : c.grid.datasets)
        datasets.push_back(dataset_json(d));
      json backbones = json::array();
      for (auto b : c.grid.backbones)
        backbones.push_back(to_string(b));
      const TrainConfig& t = c.train;
      return {{"dataset", dataset_json(c.dataset)},
              {"backbone", to_string(c.backbone)},
              {"hidden", c.hidden},
              {"perturb", perturb_json(c.perturb)},
              {"auto_radius", c.auto_radius},
              {"train",
               {{"epochs", t.epochs},
                {"lr", t.lr},
                {"weight_decay", t.weight_decay},
                {"optimizer", to_string(t.optimizer)},
                {"inner_period", t.inner_period},
                {"generator_lr", t.generator_lr},
                {"patience", t.patience},
                {"update_generator", t.update_generator},
                {"generator_ascent", t.generator_ascent}}},
              {"seeds", c.seeds},
              {"out", c.out.string()},
              {"parallel", c.parallel},
              {"grid", {{"datasets", datasets}, {"backbones", backbones}, {"perturbs", specs(c.grid.perturbs)}}},
              {"sweep", {{"ratios", c.sweep.ratios}, {"methods", specs(c.sweep.methods)}}},
              {"timing", {{"epochs", c.timing.epochs}, {"repeats", c.timing.repeats}, {"methods", specs(c.timing.methods)}}}};
    }

    PerturbSpec spec_of(Strategy s, Form f)
    {
      PerturbSpec p;
      p.strategy = s;
      p.form = f;
      return p;
    }

    //! a model with the backbone's layer structure, for validating specs before any data is loaded
    Model layout_model(BackboneKind kind)
    {
      if (kind == BackboneKind::Gcn)
        return Model(GcnParams{Matrix(1, 1), Matrix(1, 1)});
      return Model(LinkxParams{Matrix(1, 1), Matrix(1, 1), Matrix(2, 1), Matrix(1, 1)});
    }

    void validate_spec(const PerturbSpec& spec, BackboneKind kind, const std::string& path)
    {
      try
      {
        spec.validate(layout_model(kind));
        if (spec.strategy != Strategy::None && spec.strategy != Strategy::Edge && !(spec.ball.radius >= 0.0))
          throw std::invalid_argument("radius must be non-negative");
        if (spec.form == Form::Adversarial && spec.strategy == Strategy::Edge && spec.edge_embedding_dim == 0)
          throw std::invalid_argument("edge_embedding_dim must be positive");
      }
      catch (const std::invalid_argument& e)
      {
        throw ConfigError(path + " (" + to_string(kind) + "): " + e.what());
      }
    }

    void validate_dataset(const DatasetConfig& d, const std::string& path)
    {
      if (d.name.empty() || d.name.find_first_of(",|\n") != std::string::npos)
        throw ConfigError(path + ".name: must be non-empty without ',' or '|'");
      if (!d.path && !d.csbm)
        throw ConfigError(path + ": needs 'path' or 'csbm'");
      if (d.csbm)
      {
        const auto& c = *d.csbm;
        if (c.classes < 2 || c.nodes < 2 * c.classes || c.nodes % c.classes != 0 || c.features < 1)
          throw ConfigError(path + ".csbm: needs classes >= 2, nodes a multiple of classes (at least twice) and "
                                   "features >= 1");
        if (!(c.intra_p >= 0.0 && c.intra_p <= 1.0) || !(c.inter_p >= 0.0 && c.inter_p <= 1.0))
          throw ConfigError(path + ".csbm: edge probabilities must lie in [0, 1]");
        if (!(c.feature_noise >= 0.0))
          throw ConfigError(path + ".csbm.feature_noise: must be non-negative");
      }
    }

    const std::map<std::string, std::string>& descriptions()
    {
      static const std::map<std::string, std::string> d = {
        {"dataset.name", "label used in reports"},
        {"dataset.path", "directory with edges.tsv, features.csv, labels.txt and optional splits.json"},
        {"dataset.csbm.nodes", "synthetic graph: node count"},
        {"dataset.csbm.classes", "synthetic graph: number of equally sized classes"},
        {"dataset.csbm.features", "synthetic graph: feature width"},
        {"dataset.csbm.intra_p", "synthetic graph: same-class edge probability"},
        {"dataset.csbm.inter_p", "synthetic graph: cross-class edge probability"},
        {"dataset.csbm.feature_noise", "synthetic graph: feature noise scale around the class mean"},
        {"dataset.csbm.seed", "synthetic graph: generator seed"},
        {"backbone", "gcn or linkx"},
        {"hidden", "hidden width"},
        {"perturb.strategy", "none, node, edge, weight or embedding"},
        {"perturb.form", "random or adversarial"},
        {"perturb.norm", "l2 (per row) or linf (per entry)"},
        {"perturb.radius", "ball radius; a multiple of the target's scale when relative_radius is set"},
        {"perturb.relative_radius", "scale the radius by the mean row norm (l2) or mean |entry| (linf) of the target"},
        {"perturb.edge_budget", "edge strategy: drop probability (random) or top fraction t (adversarial)"},
        {"perturb.layers", "weight or embedding layer indices; empty selects the backbone default"},
        {"perturb.generator_hidden", "adversarial generators: hidden width"},
        {"perturb.edge_embedding_dim", "adversarial edge generator: node embedding width"},
        {"auto_radius", "choose perturb.radius from {0.01, 0.05, 0.1, 0.5} by validation accuracy"},
        {"train.epochs", "maximum epochs"},
        {"train.lr", "model learning rate"},
        {"train.weight_decay", "L2 penalty added to model gradients"},
        {"train.optimizer", "adam or sgd"},
        {"train.inner_period", "adversarial: every inner_period-th step updates the generator"},
        {"train.generator_lr", "adversarial: generator learning rate"},
        {"train.patience", "early stop after this many epochs without a validation gain; 0 disables"},
        {"train.update_generator", "adversarial: false keeps the generator at its initial value"},
        {"train.generator_ascent", "adversarial: generator maximizes the task loss (false descends it)"},
        {"seeds", "run seeds; --seeds overrides"},
        {"out", "output directory; --out overrides"},
        {"parallel", "grid cells run concurrently; --parallel overrides"},
        {"grid.datasets", "grid: dataset objects; empty uses 'dataset'"},
        {"grid.backbones", "grid: backbone names; empty uses 'backbone'"},
        {"grid.perturbs", "grid: perturb objects; empty uses plain plus 'perturb'"},
        {"sweep.ratios", "sweep: sorted ratios of random edges added at evaluation"},
        {"sweep.methods", "sweep: perturb objects trained and compared"},
        {"timing.epochs", "timing: epochs per measured run"},
        {"timing.repeats", "timing: measured runs per method (>= 3)"},
        {"timing.methods", "timing: perturb objects to time"},
      };
      return d;
    }

    void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& out)
    {
      if (j.is_object() && !j.empty())
      {
        for (auto it = j.begin(); it != j.end(); ++it)
          flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
        return;
      }
      out.emplace_back(prefix, j.dump());
    }
  }

  Graph DatasetConfig::load() const
  {
    if (path)
      return load_dataset(*path);
    if (csbm)
      return make_csbm(*csbm);
    throw DatasetError("dataset '" + name + "' has neither a path nor a synthetic spec");
  }

  ExperimentConfig::ExperimentConfig()
  {
    perturb = spec_of(Strategy::Embedding, Form::Random);
    sweep.methods = {spec_of(Strategy::None, Form::Random), spec_of(Strategy::Embedding, Form::Random)};
    timing.methods = {spec_of(Strategy::None, Form::Random), spec_of(Strategy::Node, Form::Random),
                      spec_of(Strategy::Embedding, Form::Random)};
  }

  void ExperimentConfig::validate() const
  {
    validate_dataset(dataset, "dataset");
    if (hidden < 1)
      throw ConfigError("hidden: must be >= 1");
    try
    {
      train.validate();
    }
    catch (const std::invalid_argument& e)
    {
      throw ConfigError(e.what());
    }
    validate_spec(perturb, backbone, "perturb");
    if (seeds.empty())
      throw ConfigError("seeds: at least one seed is required");
    if (parallel < 1)
      throw ConfigError("parallel: must be >= 1");
    for (std::size_t i = 0; i < grid.datasets.size(); ++i)
      validate_dataset(grid.datasets[i], "grid.datasets[" + std::to_string(i) + "]");
    {
      std::vector<BackboneKind> kinds = grid.backbones.empty() ? std::vector{backbone} : grid.backbones;
      for (auto kind : kinds)
        for (std::size_t i = 0; i < grid.perturbs.size(); ++i)
          validate_spec(grid.perturbs[i], kind, "grid.perturbs[" + std::to_string(i) + "]");
    }
    if (sweep.ratios.empty() || !std::is_sorted(sweep.ratios.begin(), sweep.ratios.end()))
      throw ConfigError("sweep.ratios: must be a non-empty sorted list");
    for (double r : sweep.ratios)
      if (!(r >= 0.0))
        throw ConfigError("sweep.ratios: ratios must be non-negative");
    for (std::size_t i = 0; i < sweep.methods.size(); ++i)
      validate_spec(sweep.methods[i], backbone, "sweep.methods[" + std::to_string(i) + "]");
    if (timing.epochs < 1)
      throw ConfigError("timing.epochs: must be >= 1");
    if (timing.repeats < 3)
      throw ConfigError("timing.repeats: must be >= 3");
    for (std::size_t i = 0; i < timing.methods.size(); ++i)
      validate_spec(timing.methods[i], backbone, "timing.methods[" + std::to_string(i) + "]");
  }

  ExperimentConfig parse_config(const std::string& text)
  {
    json j;
    try
    {
      j = json::parse(text);
    }
    catch (const json::parse_error& e)
    {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    Section s(j, "");
    ExperimentConfig c;
    if (s.has("dataset"))
      c.dataset = parse_dataset(s.raw("dataset"), "dataset");
    get_enum(s, "backbone", c.backbone, parse_backbone);
    s.get("hidden", c.hidden);
    if (s.has("perturb"))
      c.perturb = parse_perturb(s.raw("perturb"), "perturb");
    s.get("auto_radius", c.auto_radius);
    if (s.has("train"))
      c.train = parse_train(s.raw("train"), "train");
    if (s.has("seeds"))
    {
      const json& seeds = s.raw("seeds");
      if (!seeds.is_array())
        throw ConfigError("seeds: expected an array of non-negative integers");
      c.seeds.clear();
      for (const auto& v : seeds)
      {
        if (!v.is_number_unsigned())
          throw ConfigError("seeds: expected non-negative integers");
        c.seeds.push_back(v.get<std::uint64_t>());
      }
    }
    if (s.has("out"))
    {
      std::string out;
      s.get("out", out);
      c.out = out;
    }
    s.get("parallel", c.parallel);
    if (s.has("grid"))
    {
      Section g(s.raw("grid"), "grid");
      if (g.has("datasets"))
      {
        const json& arr = g.raw("datasets");
        if (!arr.is_array())
          throw ConfigError("grid.datasets: expected an array");
        for (std::size_t i = 0; i < arr.size(); ++i)
          c.grid.datasets.push_back(parse_dataset(arr[i], "grid.datasets[" + std::to_string(i) + "]"));
      }
      if (g.has("backbones"))
      {
        const json& arr = g.raw("backbones");
        if (!arr.is_array())
          throw ConfigError("grid.backbones: expected an array");
        for (const auto& v : arr)
        {
          if (!v.is_string())
            throw ConfigError("grid.backbones: expected backbone names");
          try
          {
            c.grid.backbones.push_back(parse_backbone(v.get<std::string>()));
          }
          catch (const std::invalid_argument& e)
          {
            throw ConfigError(std::string("grid.backbones: ") + e.what());
          }
        }
      }
      if (g.has("perturbs"))
        c.grid.perturbs = parse_perturb_list(g, "perturbs");
      g.finish();
    }
    if (s.has("sweep"))
    {
      Section w(s.raw("sweep"), "sweep");
      if (w.has("ratios"))
      {
        const json& arr = w.raw("ratios");
        if (!arr.is_array())
          throw ConfigError("sweep.ratios: expected an array");
        c.sweep.ratios.clear();
        for (const auto& v : arr)
        {
          if (!v.is_number())
            throw ConfigError("sweep.ratios: expected numbers");
          c.sweep.ratios.push_back(v.get<double>());
        }
      }
      if (w.has("methods"))
        c.sweep.methods = parse_perturb_list(w, "methods");
      w.finish();
    }
    if (s.has("timing"))
    {
      Section t(s.raw("timing"), "timing");
      t.get("epochs", c.timing.epochs);
      t.get("repeats", c.timing.repeats);
      if (t.has("methods"))
        c.timing.methods = parse_perturb_list(t, "methods");
      t.finish();
    }
    s.finish();
    c.validate();
    return c;
  }

  ExperimentConfig load_config(const std::filesystem::path& path)
  {
    std::ifstream in(path);
    if (!in)
      throw ConfigError("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
  }

  std::string default_config_json() { return config_json(ExperimentConfig{}).dump(2) + "\n"; }

  std::string config_reference()
  {
    std::vector<std::pair<std::string, std::string>> keys;
    flatten(config_json(ExperimentConfig{}), "", keys);
    std::string out;
    for (const auto& [key, value] : keys)
    {
      auto it = descriptions().find(key);
      out += key + " = " + value;
      if (it != descriptions().end())
        out += "    # " + it->second;
      out += "\n";
    }
    out += "\nperturb objects inside grid.perturbs, sweep.methods and timing.methods take the same keys as 'perturb'.\n";
    out += "dataset objects take either 'path' or 'csbm'; setting 'path' removes the synthetic default.\n";
    return out;
  }

  std::vector<std::uint64_t> parse_seed_list(const std::string& text)
  {
    std::vector<std::uint64_t> out;
    std::string item;
    std::istringstream ss(text);
    while (std::getline(ss, item, ','))
    {
      std::uint64_t v = 0;
      auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
      if (item.empty() || ec != std::errc{} || ptr != item.data() + item.size())
        throw ConfigError("--seeds: '" + item + "' is not a non-negative integer");
      out.push_back(v);
    }
    if (out.empty())
      throw ConfigError("--seeds: empty list");
    return out;
  }
}
