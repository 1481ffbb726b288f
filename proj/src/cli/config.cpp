#include "msbdl/cli.hpp"
#include "msbdl/error.hpp"
#include "msbdl/io.hpp"

#include <json.hpp>

#include <cmath>
#include <limits>
#include <set>

namespace msbdl::cli {

using json = nlohmann::json;

namespace {

std::string type_name(const json& j) { return j.type_name(); }

// Reads the keys of one object and rejects any key that was never asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + "must be an object, got " + type_name(j_));
  }

  bool has(const char* key) const { return j_.contains(key); }

  const json* raw(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <class T>
  std::optional<T> get(const char* key) {
    const json* v = raw(key);
    if (!v) return std::nullopt;
    return convert<T>(*v, field(key));
  }

  template <class T>
  T get_or(const char* key, T fallback) {
    auto v = get<T>(key);
    return v ? *v : fallback;
  }

  template <class T>
  T require(const char* key) {
    auto v = get<T>(key);
    if (!v) throw ConfigError("missing required field '" + field(key) + "'");
    return *v;
  }

  Section sub(const char* key) {
    const json* v = raw(key);
    static const json empty = json::object();
    return Section(v ? *v : empty, field(key));
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown key '" + field(k) + "'");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <class T>
  static T convert(const json& v, const std::string& name);

 private:
  std::string where() const { return path_.empty() ? "config: " : "'" + path_ + "' "; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <>
double Section::convert<double>(const json& v, const std::string& name) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
  }
  throw ConfigError("field '" + name + "' must be a number, got " + type_name(v));
}

template <>
Index Section::convert<Index>(const json& v, const std::string& name) {
  if (v.is_number_integer()) return v.get<Index>();
  throw ConfigError("field '" + name + "' must be an integer, got " + type_name(v));
}

template <>
std::uint64_t Section::convert<std::uint64_t>(const json& v, const std::string& name) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  throw ConfigError("field '" + name + "' must be a non-negative integer, got " + type_name(v));
}

template <>
bool Section::convert<bool>(const json& v, const std::string& name) {
  if (v.is_boolean()) return v.get<bool>();
  throw ConfigError("field '" + name + "' must be true or false, got " + type_name(v));
}

template <>
std::string Section::convert<std::string>(const json& v, const std::string& name) {
  if (v.is_string()) return v.get<std::string>();
  throw ConfigError("field '" + name + "' must be a string, got " + type_name(v));
}

template <>
std::vector<double> Section::convert<std::vector<double>>(const json& v, const std::string& name) {
  if (!v.is_array()) throw ConfigError("field '" + name + "' must be an array of numbers");
  std::vector<double> out;
  for (std::size_t k = 0; k < v.size(); ++k) out.push_back(convert<double>(v[k], name + "[" + std::to_string(k) + "]"));
  return out;
}

template <>
std::vector<Index> Section::convert<std::vector<Index>>(const json& v, const std::string& name) {
  if (!v.is_array()) throw ConfigError("field '" + name + "' must be an array of integers");
  std::vector<Index> out;
  for (std::size_t k = 0; k < v.size(); ++k) out.push_back(convert<Index>(v[k], name + "[" + std::to_string(k) + "]"));
  return out;
}

template <>
SupportTree Section::convert<SupportTree>(const json& v, const std::string& name) {
  if (!v.is_array()) throw ConfigError("field '" + name + "' must be an array of leaf arrays");
  std::vector<std::vector<Index>> sets;
  for (std::size_t k = 0; k < v.size(); ++k)
    sets.push_back(convert<std::vector<Index>>(v[k], name + "[" + std::to_string(k) + "]"));
  try {
    return SupportTree(std::move(sets));
  } catch (const InvalidArgument& e) {
    throw ConfigError("field '" + name + "': " + e.what());
  }
}

template <class T>
T checked(T v, bool ok, const std::string& name, const char* rule) {
  if (!ok) throw ConfigError("field '" + name + "' " + rule);
  return v;
}

PriorKind parse_kind(const std::string& s, const std::string& name) {
  try {
    return parse_prior_kind(s);
  } catch (const InvalidArgument&) {
    throw ConfigError("field '" + name + "' must be one_to_one, atom_to_subspace or hierarchical, got '" + s + "'");
  }
}

DataConfig parse_data(Section s) {
  DataConfig d;
  d.kind = s.require<std::string>("kind");
  static const std::set<std::string> kinds{"one_to_one", "atom_to_subspace", "hierarchical", "labeled", "paired"};
  if (!kinds.count(d.kind))
    throw ConfigError("field '" + s.field("kind") +
                      "' must be one of one_to_one, atom_to_subspace, hierarchical, labeled, paired");
  d.dims = s.require<std::vector<Index>>("dims");
  d.atoms = s.require<std::vector<Index>>("atoms");
  d.snr_db = s.require<std::vector<double>>("snr_db");
  d.sparsity = s.get_or<Index>("sparsity", d.sparsity);
  d.samples = s.get_or<Index>("samples", d.samples);
  if (d.kind == "paired") d.test_samples = s.get_or<Index>("test_samples", d.test_samples);
  if (d.kind == "labeled") d.classes = s.get_or<Index>("classes", d.classes);
  if (d.kind == "atom_to_subspace" || d.kind == "hierarchical") d.tree = s.get<SupportTree>("tree");
  if (d.kind == "hierarchical") d.leaf_probability = s.get_or<double>("leaf_probability", d.leaf_probability);
  s.finish();
  if (d.dims.size() != d.atoms.size() || d.dims.size() != d.snr_db.size())
    throw ConfigError("fields 'data.dims', 'data.atoms' and 'data.snr_db' need one entry per modality");
  if (d.dims.empty()) throw ConfigError("field 'data.dims' must not be empty");
  for (Index v : d.dims) checked(v, v > 0, "data.dims", "must be positive");
  for (Index v : d.atoms) checked(v, v > 0, "data.atoms", "must be positive");
  for (double v : d.snr_db) checked(v, !std::isnan(v) && v > -std::numeric_limits<double>::infinity(), "data.snr_db", "must be finite or \"inf\"");
  checked(d.samples, d.samples > 0, "data.samples", "must be positive");
  checked(d.sparsity, d.sparsity > 0, "data.sparsity", "must be positive");
  if (d.kind == "paired" && (d.dims.size() != 2 || d.dims[0] != d.dims[1] || d.atoms[0] != d.atoms[1]))
    throw ConfigError("paired data needs two modalities with equal 'data.dims' and 'data.atoms'");
  if (d.kind == "labeled")
    for (Index a : d.atoms) checked(a, a == d.atoms[0], "data.atoms", "must be equal for labeled data");
  return d;
}

}  // namespace

AnnealSchedule AnnealConfig::resolve(Index modality_count) const {
  AnnealSchedule s = AnnealSchedule::defaults(modality_count);
  if (sigma0) s.sigma0 = *sigma0;
  if (sigma_inf) s.sigma_inf = *sigma_inf;
  if (alpha_sigma) s.alpha_sigma = *alpha_sigma;
  if (beta0) s.beta0 = *beta0;
  if (beta_inf) s.beta_inf = *beta_inf;
  if (alpha_beta) s.alpha_beta = *alpha_beta;
  if (validation_period) s.validation_period = *validation_period;
  return s;
}

std::string Config::hash() const { return io::hex(io::fnv1a(canonical)); }

Config parse_config(std::string_view text, const Overrides& overrides, std::string_view origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string(origin) + ": " + e.what());
  }
  if (!doc.is_object()) throw ConfigError(std::string(origin) + ": top level must be an object");
  if (overrides.seed) doc["seed"] = *overrides.seed;
  if (overrides.threads) doc["run"]["threads"] = *overrides.threads;

  Config c;
  {
    // worker count does not change any result, so it stays out of the hash
    json key = doc;
    if (key.contains("run") && key["run"].is_object()) key["run"].erase("threads");
    c.canonical = key.dump();
  }
  Section top(doc, "");
  c.seed = top.get_or<std::uint64_t>("seed", 0);
  if (top.has("data")) c.data = parse_data(top.sub("data"));

  {
    Section m = top.sub("model");
    if (auto p = m.get<std::string>("prior")) c.model.prior = parse_kind(*p, "model.prior");
    c.model.atoms = m.get<Index>("atoms");
    c.model.tree = m.get<SupportTree>("tree");
    if (c.model.atoms) checked(*c.model.atoms, *c.model.atoms > 0, "model.atoms", "must be positive");
    m.finish();
  }

  {
    Section r = top.sub("run");
    auto& run = c.run;
    if (auto v = r.get<std::string>("variant")) {
      try {
        run.variant = parse_variant(*v);
      } catch (const InvalidArgument&) {
        throw ConfigError("field 'run.variant' must be one of MSBDL, MSBDL-1, MSBDL-2, MSBDL-3, MSBDL-4");
      }
    }
    run.batch_size = r.get_or<Index>("batch_size", run.batch_size);
    run.max_outer_iters = r.get_or<Index>("max_outer_iters", run.max_outer_iters);
    run.max_inner_iters = r.get_or<Index>("max_inner_iters", run.max_inner_iters);
    run.inner_tol = r.get_or<double>("inner_tol", run.inner_tol);
    run.prune_epsilon = r.get_or<double>("prune_epsilon", run.prune_epsilon);
    run.sigma_patience = r.get_or<Index>("sigma_patience", run.sigma_patience);
    run.cg_tol = r.get_or<double>("cg_tol", run.cg_tol);
    run.cg_max_iter = r.get_or<Index>("cg_max_iter", run.cg_max_iter);
    run.threads = r.get_or<Index>("threads", run.threads);
    run.record_inner = r.get_or<bool>("record_inner", run.record_inner);
    c.anneal.sigma0 = r.get<std::vector<double>>("sigma0");
    c.anneal.sigma_inf = r.get<double>("sigma_inf");
    c.anneal.alpha_sigma = r.get<double>("alpha_sigma");
    {
      Section cl = r.sub("cleaning");
      run.cleaning.enabled = cl.get_or<bool>("enabled", run.cleaning.enabled);
      run.cleaning.period = cl.get_or<Index>("period", run.cleaning.period);
      run.cleaning.coherence = cl.get_or<double>("coherence", run.cleaning.coherence);
      run.cleaning.energy = cl.get_or<double>("energy", run.cleaning.energy);
      cl.finish();
    }
    r.finish();
    checked(run.threads, run.threads >= 1, "run.threads", "must be >= 1");
  }

  if (top.has("supervised")) {
    Section s = top.sub("supervised");
    SupervisedConfig sc;
    sc.td.nu = s.get_or<double>("nu", sc.td.nu);
    sc.td.validation_iterations = s.get_or<Index>("validation_iterations", sc.td.validation_iterations);
    sc.validation_fraction = s.get_or<double>("validation_fraction", sc.validation_fraction);
    c.anneal.beta0 = s.get<std::vector<double>>("beta0");
    c.anneal.beta_inf = s.get<double>("beta_inf");
    c.anneal.alpha_beta = s.get<double>("alpha_beta");
    c.anneal.validation_period = s.get<Index>("validation_period");
    s.finish();
    checked(sc.td.nu, sc.td.nu >= 0.0, "supervised.nu", "must be >= 0");
    checked(sc.validation_fraction, sc.validation_fraction > 0.0 && sc.validation_fraction < 1.0,
            "supervised.validation_fraction", "must lie in (0, 1)");
    c.supervised = sc;
  }

  {
    Section i = top.sub("inference");
    c.inference_iterations = i.get_or<Index>("iterations", c.inference_iterations);
    c.inference_tol = i.get_or<double>("tol", c.inference_tol);
    i.finish();
    checked(c.inference_iterations, c.inference_iterations >= 1, "inference.iterations", "must be >= 1");
  }

  {
    Section e = top.sub("experiment");
    c.trials = e.get_or<Index>("trials", c.trials);
    e.finish();
    checked(c.trials, c.trials >= 1, "experiment.trials", "must be >= 1");
  }

  top.finish();
  return c;
}

Config load_config(const fs::path& path, const Overrides& overrides) {
  return parse_config(io::read_text(path), overrides, path.string());
}

}  // namespace msbdl::cli
