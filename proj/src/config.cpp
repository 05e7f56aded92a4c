#include "penex/config.hpp"

#include <cstdlib>
#include <set>

#include "penex/errors.hpp"
#include "penex/io.hpp"

namespace penex {

using nlohmann::json;

namespace {

/// Reads fields from one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ParameterError(where_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& into) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      into = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ParameterError(where_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw ParameterError(where_ + ": unknown key '" + key + "'");
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace

void DatasetSpec::validate() const {
  if (kind == "csv") {
    if (path.empty()) throw ParameterError("dataset: csv kind needs a path");
    if (!std::filesystem::exists(path))
      throw ParameterError("dataset: file not found: " + path.string());
    return;
  }
  if (kind != "blobs" && kind != "rings" && kind != "categorical")
    throw ParameterError("dataset: unknown kind '" + kind + "'");
  if (n == 0) throw ParameterError("dataset: n must be positive");
  if (kind == "categorical") {
    if (probs.size() < 2) throw ParameterError("dataset: categorical needs at least two classes");
  } else if (classes < 2) {
    throw ParameterError("dataset: need at least two classes");
  }
  if (kind == "blobs" && (dim < 2 || !(spread > 0.0)))
    throw ParameterError("dataset: blobs need dim >= 2 and a positive spread");
  if (kind == "rings" && !(noise >= 0.0)) throw ParameterError("dataset: noise must be >= 0");
}

ExperimentConfig::ExperimentConfig() {
  train.model.hidden_dims = {32};
}

void ExperimentConfig::validate() const {
  dataset.validate();
  if (!(noise_fraction >= 0.0 && noise_fraction <= 1.0))
    throw ParameterError("noise_fraction must lie in [0, 1]");
  if (!(split_ratio > 0.0 && split_ratio < 1.0))
    throw ParameterError("split_ratio must lie in (0, 1)");
  if (rounds < 0) throw ParameterError("rounds must be nonnegative");
  train.validate();
  for (double a : sweep)
    if (!(a > 0.0)) throw ParameterError("sweep alphas must be positive");
}

json to_json(const LossSpec& s) {
  return {{"kind", std::string(to_string(s.kind))},
          {"alpha", s.alpha},
          {"rho", s.rho ? json(*s.rho) : json(nullptr)},
          {"smooth_eps", s.smooth_eps},
          {"conf_lambda", s.conf_lambda},
          {"focal_gamma", s.focal_gamma},
          {"conex_rho", s.conex_rho},
          {"nu", s.nu},
          {"squared_penalty_verbatim", s.squared_penalty_verbatim}};
}

LossSpec loss_spec_from_json(const json& j, LossSpec s) {
  Section sec(j, "loss");
  std::string kind(to_string(s.kind));
  sec.get("kind", kind);
  s.kind = loss_kind_from_string(kind);
  sec.get("alpha", s.alpha);
  if (const json* rho = sec.child("rho"); rho && !rho->is_null()) s.rho = rho->get<double>();
  sec.get("smooth_eps", s.smooth_eps);
  sec.get("conf_lambda", s.conf_lambda);
  sec.get("focal_gamma", s.focal_gamma);
  sec.get("conex_rho", s.conex_rho);
  sec.get("nu", s.nu);
  sec.get("squared_penalty_verbatim", s.squared_penalty_verbatim);
  sec.finish();
  return s;
}

json to_json(const ModelSpec& m) {
  return {{"input_dim", m.input_dim},
          {"hidden_dims", m.hidden_dims},
          {"num_classes", m.num_classes},
          {"dropout_p", m.dropout_p},
          {"conex_hard", m.conex_hard}};
}

ModelSpec model_spec_from_json(const json& j, ModelSpec m) {
  Section sec(j, "model");
  sec.get("input_dim", m.input_dim);
  sec.get("hidden_dims", m.hidden_dims);
  sec.get("num_classes", m.num_classes);
  sec.get("dropout_p", m.dropout_p);
  sec.get("conex_hard", m.conex_hard);
  sec.finish();
  return m;
}

namespace {

json to_json(const OptimSpec& o) {
  return {{"kind", std::string(to_string(o.kind))},
          {"learning_rate", o.learning_rate},
          {"beta1", o.beta1},
          {"beta2", o.beta2},
          {"adam_eps", o.adam_eps},
          {"grad_clip_value", o.grad_clip_value ? json(*o.grad_clip_value) : json(nullptr)},
          {"clip_mode", o.clip_mode == ClipMode::kValue ? "value" : "global_norm"}};
}

OptimSpec optim_from_json(const json& j, OptimSpec o) {
  Section sec(j, "optim");
  std::string kind(to_string(o.kind));
  sec.get("kind", kind);
  o.kind = optim_kind_from_string(kind);
  sec.get("learning_rate", o.learning_rate);
  sec.get("beta1", o.beta1);
  sec.get("beta2", o.beta2);
  sec.get("adam_eps", o.adam_eps);
  if (const json* c = sec.child("grad_clip_value"); c && !c->is_null())
    o.grad_clip_value = c->get<double>();
  std::string mode = o.clip_mode == ClipMode::kValue ? "value" : "global_norm";
  sec.get("clip_mode", mode);
  if (mode == "value")
    o.clip_mode = ClipMode::kValue;
  else if (mode == "global_norm")
    o.clip_mode = ClipMode::kGlobalNorm;
  else
    throw ParameterError("optim.clip_mode: expected 'value' or 'global_norm'");
  sec.finish();
  return o;
}

json to_json(const PenaltyParams& p) {
  return {{"beta", p.beta}, {"rho_min", p.rho_min}, {"rho_max", p.rho_max}, {"eps_guard", p.eps_guard}};
}

PenaltyParams penalty_from_json(const json& j, PenaltyParams p) {
  Section sec(j, "penalty");
  sec.get("beta", p.beta);
  sec.get("rho_min", p.rho_min);
  sec.get("rho_max", p.rho_max);
  sec.get("eps_guard", p.eps_guard);
  sec.finish();
  return p;
}

TrainConfig train_from_json(const json& j, TrainConfig t) {
  Section sec(j, "train");
  if (const json* c = sec.child("loss")) t.loss = loss_spec_from_json(*c, t.loss);
  if (const json* c = sec.child("model")) t.model = model_spec_from_json(*c, t.model);
  if (const json* c = sec.child("optim")) t.optim = optim_from_json(*c, t.optim);
  if (const json* c = sec.child("penalty")) t.penalty = penalty_from_json(*c, t.penalty);
  sec.get("epochs", t.epochs);
  sec.get("batch_size", t.batch_size);
  sec.get("halt_on_divergence", t.halt_on_divergence);
  sec.finish();
  return t;
}

json to_json(const DatasetSpec& d) {
  return {{"kind", d.kind},   {"n", d.n},         {"classes", d.classes},
          {"dim", d.dim},     {"spread", d.spread}, {"noise", d.noise},
          {"probs", d.probs}, {"path", d.path.string()}, {"standardize", d.standardize}};
}

DatasetSpec dataset_from_json(const json& j, DatasetSpec d) {
  Section sec(j, "dataset");
  sec.get("kind", d.kind);
  sec.get("n", d.n);
  sec.get("classes", d.classes);
  sec.get("dim", d.dim);
  sec.get("spread", d.spread);
  sec.get("noise", d.noise);
  sec.get("probs", d.probs);
  std::string path = d.path.string();
  sec.get("path", path);
  d.path = path;
  sec.get("standardize", d.standardize);
  sec.finish();
  return d;
}

}  // namespace

json to_json(const TrainConfig& t) {
  return {{"loss", to_json(t.loss)},
          {"model", to_json(t.model)},
          {"optim", to_json(t.optim)},
          {"penalty", to_json(t.penalty)},
          {"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"halt_on_divergence", t.halt_on_divergence}};
}

json to_json(const ExperimentConfig& c) {
  json ablations = json::array();
  for (LossKind k : c.ablations) ablations.push_back(std::string(to_string(k)));
  return {{"name", c.name},
          {"seed", c.seed},
          {"dataset", to_json(c.dataset)},
          {"noise_fraction", c.noise_fraction},
          {"split_ratio", c.split_ratio},
          {"train", to_json(c.train)},
          {"sweep", c.sweep},
          {"ablations", ablations},
          {"rounds", c.rounds},
          {"output_dir", c.output_dir.string()}};
}

ExperimentConfig experiment_from_json(const json& j) {
  ExperimentConfig c;
  Section sec(j, "config");
  sec.get("name", c.name);
  sec.get("seed", c.seed);
  if (const json* d = sec.child("dataset")) c.dataset = dataset_from_json(*d, c.dataset);
  sec.get("noise_fraction", c.noise_fraction);
  sec.get("split_ratio", c.split_ratio);
  if (const json* t = sec.child("train")) c.train = train_from_json(*t, c.train);
  sec.get("sweep", c.sweep);
  if (const json* a = sec.child("ablations")) {
    c.ablations.clear();
    for (const auto& k : *a) c.ablations.push_back(loss_kind_from_string(k.get<std::string>()));
  }
  sec.get("rounds", c.rounds);
  std::string out = c.output_dir.string();
  sec.get("output_dir", out);
  c.output_dir = out;
  sec.finish();
  return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  const std::string text = io::read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
  ExperimentConfig c = experiment_from_json(j);
  // Relative dataset paths are resolved against the config file.
  if (!c.dataset.path.empty() && c.dataset.path.is_relative())
    c.dataset.path = path.parent_path() / c.dataset.path;
  return c;
}

void apply_env_overrides(ExperimentConfig& config) {
  if (const char* out = std::getenv("PENEX_OUTPUT_DIR"); out && *out) config.output_dir = out;
  if (const char* seed = std::getenv("PENEX_SEED"); seed && *seed) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(seed, &used);
      if (used != std::string(seed).size()) throw std::invalid_argument("trailing characters");
      config.seed = v;
    } catch (const std::exception&) {
      throw ParameterError(std::string("PENEX_SEED is not an unsigned integer: ") + seed);
    }
  }
}

Dataset make_dataset(const ExperimentConfig& config, std::vector<std::string>* warnings) {
  const DatasetSpec& d = config.dataset;
  d.validate();
  const std::uint64_t seed = derive_seed(config.seed, 100);
  Dataset data;
  if (d.kind == "blobs")
    data = gen_blobs(d.n, d.classes, d.dim, d.spread, seed);
  else if (d.kind == "rings")
    data = gen_rings(d.n, d.classes, d.noise, seed);
  else if (d.kind == "categorical")
    data = gen_categorical_single_x(d.probs, d.n, seed, d.dim);
  else
    data = load_csv(d.path, d.standardize, warnings);
  if (config.noise_fraction > 0.0)
    data = flip_labels(data, config.noise_fraction, derive_seed(config.seed, 101));
  return data;
}

std::pair<Dataset, Dataset> make_split(const ExperimentConfig& config,
                                       std::vector<std::string>* warnings) {
  return split(make_dataset(config, warnings), config.split_ratio, derive_seed(config.seed, 102));
}

}  // namespace penex
