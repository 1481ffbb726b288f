#include "msbdl/cli.hpp"
#include "msbdl/error.hpp"
#include "msbdl/io.hpp"
#include "msbdl/log.hpp"
#include "msbdl/metrics.hpp"

#include "random.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cmath>
#include <iostream>
#include <map>
#include <sstream>
#include <numeric>

#ifndef MSBDL_VERSION
#define MSBDL_VERSION "0.0.0"
#endif

namespace msbdl::cli {

using json = nlohmann::json;

namespace {

std::string numbered(const char* stem, Index j, const char* ext = ".mat") {
  return stem + std::to_string(j + 1) + ext;
}

json tree_json(const SupportTree& t) { return json(t.branches()); }

SupportTree tree_from(const json& j) { return SupportTree(j.get<std::vector<std::vector<Index>>>()); }

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

void write_json(const fs::path& path, const json& j) { io::write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  try {
    return json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::string dataset_id_of(const fs::path& dir, Index modalities, bool labels, const std::optional<SupportTree>& tree) {
  std::uint64_t h = io::fnv1a("");
  for (Index j = 0; j < modalities; ++j) h = io::fnv1a(io::read_text(dir / numbered("Y", j)), h);
  if (labels) h = io::fnv1a(io::read_text(dir / "H.mat"), h);
  if (tree) h = io::fnv1a(tree_json(*tree).dump(), h);
  return io::hex(h);
}

void write_data_dir(const fs::path& dir, const MultimodalDataset& ds, const std::string& kind,
                    const std::vector<Index>& atoms, const std::optional<SupportTree>& tree, const Config& config) {
  ensure_dir(dir);
  for (Index j = 0; j < ds.modality_count(); ++j) io::write_matrix(dir / numbered("Y", j), ds.modalities[j]);
  if (ds.labels) io::write_matrix(dir / "H.mat", *ds.labels);
  json m;
  m["format"] = "msbdl-data";
  m["version"] = MSBDL_VERSION;
  m["kind"] = kind;
  m["modalities"] = ds.modality_count();
  m["samples"] = ds.sample_count();
  m["atoms"] = atoms;
  m["labels"] = ds.labels.has_value();
  m["tree"] = tree ? tree_json(*tree) : json(nullptr);
  m["seed"] = config.seed;
  m["config_hash"] = config.hash();
  m["dataset_id"] = dataset_id_of(dir, ds.modality_count(), ds.labels.has_value(), tree);
  write_json(dir / "manifest.json", m);
}

void write_truth(const fs::path& dir, const SyntheticTruth& truth) {
  ensure_dir(dir);
  for (std::size_t j = 0; j < truth.dictionaries.size(); ++j) {
    const auto jj = static_cast<Index>(j);
    io::write_matrix(dir / numbered("D", jj), truth.dictionaries[j]);
    io::write_matrix(dir / numbered("X", jj), truth.codes[j]);
    io::write_matrix(dir / numbered("support", jj), (truth.codes[j].array() != 0.0).cast<double>().matrix());
  }
}

std::vector<Matrix> read_truth_dictionaries(const fs::path& dir) {
  std::vector<Matrix> out;
  for (Index j = 0; fs::exists(dir / numbered("D", j)); ++j) out.push_back(io::read_matrix(dir / numbered("D", j)));
  if (out.empty()) throw IoError(dir.string() + ": no true dictionaries (D1.mat)");
  return out;
}

PriorKind data_prior(const std::string& kind) {
  if (kind == "atom_to_subspace") return PriorKind::atom_to_subspace;
  if (kind == "hierarchical") return PriorKind::hierarchical;
  return PriorKind::one_to_one;
}

SyntheticSpec synthetic_spec(const DataConfig& d, std::uint64_t seed) {
  SyntheticSpec s;
  s.kind = data_prior(d.kind);
  s.dims = d.dims;
  s.atoms = d.atoms;
  s.sparsity = d.sparsity;
  s.samples = d.samples;
  s.snr_db = d.snr_db;
  s.tree = d.tree;
  s.leaf_probability = d.leaf_probability;
  s.seed = seed;
  return s;
}

const DataConfig& need_data(const Config& config) {
  if (!config.data) throw ConfigError("missing required section 'data'");
  return *config.data;
}

PriorSpec resolve_prior(const Config& config, const std::string& data_kind, const std::vector<Index>& data_atoms,
                        const std::optional<SupportTree>& data_tree) {
  const PriorKind kind = config.model.prior ? *config.model.prior : data_prior(data_kind);
  if (kind == PriorKind::one_to_one) {
    if (config.model.atoms) return PriorSpec::one_to_one(*config.model.atoms);
    if (!data_atoms.empty()) return PriorSpec::one_to_one(data_atoms.front());
    throw ConfigError("missing required field 'model.atoms' (the data does not record an atom count)");
  }
  SupportTree tree;
  if (config.model.tree)
    tree = *config.model.tree;
  else if (data_tree)
    tree = *data_tree;
  else if (data_atoms.size() == 2)
    tree = SupportTree::most_uniform(data_atoms[0], data_atoms[1]);
  else
    throw ConfigError("missing required field 'model.tree' (the data does not record a support tree)");
  return kind == PriorKind::atom_to_subspace ? PriorSpec::atom_to_subspace(tree) : PriorSpec::hierarchical(tree);
}

RunConfig resolve_run(const Config& config, Index modalities) {
  RunConfig run = config.run;
  run.anneal = config.anneal.resolve(modalities);
  run.seed = config.seed;
  return run;
}

FitResult fit_dataset(const Config& config, const MultimodalDataset& ds, const PriorSpec& prior) {
  const RunConfig run = resolve_run(config, ds.modality_count());
  if (!config.supervised) return fit(ds, prior, run);
  if (!ds.labels) throw ConfigError("section 'supervised' needs labelled data (H.mat)");
  const Index l = ds.sample_count();
  const auto val = std::max<Index>(1, static_cast<Index>(std::llround(config.supervised->validation_fraction * l)));
  if (val >= l) throw ConfigError("field 'supervised.validation_fraction' leaves no training samples");
  std::vector<Index> train(static_cast<std::size_t>(l - val)), valid(static_cast<std::size_t>(val));
  std::iota(train.begin(), train.end(), Index{0});
  std::iota(valid.begin(), valid.end(), l - val);
  SupervisedSplit split{ds.select(train), ds.select(valid)};
  return fit_supervised(split, prior, run, config.supervised->td);
}

std::string trace_csv(const FitReport& r) {
  std::string s = "iteration,loglik";
  const std::size_t j = r.sigma_trace.empty() ? 0 : r.sigma_trace.front().size();
  for (std::size_t k = 0; k < j; ++k) s += ",sigma_" + std::to_string(k + 1);
  s += '\n';
  for (std::size_t t = 0; t < r.loglik_trace.size(); ++t) {
    s += std::to_string(t + 1) + "," + io::format_double(r.loglik_trace[t]);
    for (double v : r.sigma_trace[t]) s += "," + io::format_double(v);
    s += '\n';
  }
  return s;
}

json report_json(const FitReport& r) {
  json j;
  j["iterations_run"] = r.iterations_run;
  j["converged"] = r.converged;
  j["final_loglik"] = r.loglik_trace.empty() ? json(nullptr) : json(r.loglik_trace.back());
  j["prune_log"] = r.prune_log;
  json cl = json::array();
  for (const auto& e : r.cleaning_log)
    cl.push_back({{"iteration", e.iteration}, {"modality", e.modality + 1}, {"atom", e.atom}, {"data_column", e.data_column}});
  j["cleaning_log"] = cl;
  if (!r.beta_trace.empty()) {
    j["beta_trace"] = r.beta_trace;
    j["validation_trace"] = r.validation_trace;
  }
  return j;
}

double parse_double(const std::string& s, const fs::path& where) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw IoError(where.string() + ": bad number '" + s + "'");
  return v;
}

// scalars.csv: "name,value" rows for sigma_j and beta_j.
std::map<std::string, double> read_scalars(const fs::path& path) {
  std::map<std::string, double> out;
  std::istringstream in(io::read_text(path));
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw IoError(path.string() + ": malformed row '" + line + "'");
    out[line.substr(0, comma)] = parse_double(line.substr(comma + 1), path);
  }
  return out;
}

double scalar(const std::map<std::string, double>& m, const std::string& key, const fs::path& path) {
  auto it = m.find(key);
  if (it == m.end()) throw IoError(path.string() + ": missing " + key);
  return it->second;
}

// Recovery metrics shared by eval and experiment, in a fixed order.
using MetricList = std::vector<std::pair<std::string, std::optional<double>>>;

MetricList recovery_metrics(const std::vector<Matrix>& truth, const std::optional<SupportTree>& truth_tree,
                            const ModelState& model, const std::vector<Matrix>& codes) {
  if (truth.size() != model.dictionaries.size())
    throw InvalidArgument("truth has " + std::to_string(truth.size()) + " dictionaries, the model " +
                          std::to_string(model.dictionaries.size()));
  MetricList out;
  for (std::size_t j = 0; j < truth.size(); ++j) {
    if (truth[j].rows() != model.dictionaries[j].rows())
      throw InvalidArgument("dictionary " + std::to_string(j + 1) + ": truth and model dimensions differ");
    out.emplace_back("recovery_" + std::to_string(j + 1), recovery_probability(truth[j], model.dictionaries[j]));
  }
  for (std::size_t j = 0; j < model.sigmas.size(); ++j)
    out.emplace_back("sigma_" + std::to_string(j + 1), model.sigmas[j]);
  // supports are comparable atom for atom only under the one-to-one prior
  const bool comparable = !codes.empty() && model.prior.kind == PriorKind::one_to_one;
  out.emplace_back("support_agreement", comparable ? std::optional<double>(support_agreement(codes)) : std::nullopt);
  if (model.prior.structured() && truth_tree && truth.size() == 2) {
    const SupportTree& tree_hat = *model.prior.tree;
    const auto theta = vartheta_scores(truth[1], model.dictionaries[1], *truth_tree, tree_hat);
    const auto rho = varrho_scores(truth[1], model.dictionaries[1], *truth_tree);
    out.emplace_back("vartheta_singleton", theta.first);
    out.emplace_back("vartheta_multi", theta.second);
    out.emplace_back("varrho_singleton", rho.first);
    out.emplace_back("varrho_multi", rho.second);
    out.emplace_back("branch_sizes_agree",
                     branch_sizes_agree(truth[0], model.dictionaries[0], *truth_tree, tree_hat) ? 1.0 : 0.0);
  }
  return out;
}

json metrics_json(const MetricList& m) {
  json j = json::object();
  for (const auto& [k, v] : m) j[k] = optional_json(v);
  return j;
}

struct TruthDir {
  std::vector<Matrix> dictionaries;
  std::optional<SupportTree> tree;
  std::string dataset_id;
};

TruthDir read_truth_dir(const fs::path& dir) {
  const auto manifest = read_json(dir / "manifest.json");
  TruthDir t;
  t.dictionaries = read_truth_dictionaries(dir / "truth");
  if (manifest.contains("tree") && !manifest["tree"].is_null()) t.tree = tree_from(manifest["tree"]);
  t.dataset_id = manifest.at("dataset_id").get<std::string>();
  return t;
}

void require_dir(const fs::path& p, const char* what) {
  if (!fs::is_directory(p)) throw IoError(std::string(what) + " directory " + p.string() + " does not exist");
}

}  // namespace

// ---------------------------------------------------------------------------

DataDir read_data_dir(const fs::path& dir) {
  require_dir(dir, "data");
  DataDir out;
  json manifest;
  const bool has_manifest = fs::exists(dir / "manifest.json");
  if (has_manifest) {
    manifest = read_json(dir / "manifest.json");
    out.kind = manifest.value("kind", std::string());
    if (manifest.contains("atoms")) out.atoms = manifest["atoms"].get<std::vector<Index>>();
    if (manifest.contains("tree") && !manifest["tree"].is_null()) out.tree = tree_from(manifest["tree"]);
  }
  for (Index j = 0; fs::exists(dir / numbered("Y", j)); ++j)
    out.dataset.modalities.push_back(io::read_matrix(dir / numbered("Y", j)));
  if (out.dataset.modalities.empty()) throw IoError(dir.string() + ": no modality files (Y1.mat)");
  const bool labels = fs::exists(dir / "H.mat");
  if (labels) out.dataset.labels = io::read_matrix(dir / "H.mat");
  out.dataset.validate();
  out.dataset_id = dataset_id_of(dir, out.dataset.modality_count(), labels, out.tree);
  if (has_manifest && manifest.contains("dataset_id") && manifest["dataset_id"] != out.dataset_id)
    throw IoError(dir.string() + ": data files do not match manifest.json");
  return out;
}

void write_model_dir(const fs::path& dir, const FitResult& result, const std::string& dataset_id,
                     const Config& config) {
  ensure_dir(dir);
  const ModelState& m = result.model;
  for (Index j = 0; j < m.modality_count(); ++j) {
    io::write_matrix(dir / numbered("D", j), m.dictionaries[j]);
    if (static_cast<std::size_t>(j) < result.codes.size()) io::write_matrix(dir / numbered("X", j), result.codes[j]);
    if (m.classifier) io::write_matrix(dir / numbered("W", j), m.classifier->weights[j]);
  }
  io::write_matrix(dir / "gammas.mat", m.gammas);
  std::string scalars = "name,value\n";
  for (std::size_t j = 0; j < m.sigmas.size(); ++j)
    scalars += "sigma_" + std::to_string(j + 1) + "," + io::format_double(m.sigmas[j]) + "\n";
  if (m.classifier)
    for (std::size_t j = 0; j < m.classifier->betas.size(); ++j)
      scalars += "beta_" + std::to_string(j + 1) + "," + io::format_double(m.classifier->betas[j]) + "\n";
  io::write_text(dir / "scalars.csv", scalars);
  io::write_text(dir / "trace.csv", trace_csv(result.report));
  write_json(dir / "report.json", report_json(result.report));

  json man;
  man["format"] = "msbdl-model";
  man["version"] = MSBDL_VERSION;
  man["prior"] = to_string(m.prior.kind);
  man["atoms"] = m.prior.kind == PriorKind::one_to_one ? json(m.prior.atoms) : json(nullptr);
  man["tree"] = m.prior.tree ? tree_json(*m.prior.tree) : json(nullptr);
  man["modalities"] = m.modality_count();
  man["supervised"] = m.classifier.has_value();
  man["codes"] = !result.codes.empty();
  man["variant"] = to_string(config.run.variant);
  man["seed"] = config.seed;
  man["config_hash"] = config.hash();
  man["dataset_id"] = dataset_id;
  write_json(dir / "manifest.json", man);
}

ModelDir read_model_dir(const fs::path& dir) {
  require_dir(dir, "model");
  const auto man = read_json(dir / "manifest.json");
  if (man.value("format", std::string()) != "msbdl-model") throw IoError(dir.string() + ": not a model directory");
  ModelDir out;
  out.dataset_id = man.at("dataset_id").get<std::string>();
  out.config_hash = man.at("config_hash").get<std::string>();
  auto& m = out.model;
  const PriorKind kind = parse_prior_kind(man.at("prior").get<std::string>());
  m.prior = kind == PriorKind::one_to_one        ? PriorSpec::one_to_one(man.at("atoms").get<Index>())
            : kind == PriorKind::atom_to_subspace ? PriorSpec::atom_to_subspace(tree_from(man.at("tree")))
                                                  : PriorSpec::hierarchical(tree_from(man.at("tree")));
  const Index j_count = man.at("modalities").get<Index>();
  const auto scalars = read_scalars(dir / "scalars.csv");
  const bool supervised = man.value("supervised", false);
  Classifier cls;
  for (Index j = 0; j < j_count; ++j) {
    m.dictionaries.push_back(io::read_matrix(dir / numbered("D", j)));
    m.sigmas.push_back(scalar(scalars, "sigma_" + std::to_string(j + 1), dir / "scalars.csv"));
    if (man.value("codes", false)) out.codes.push_back(io::read_matrix(dir / numbered("X", j)));
    if (supervised) {
      cls.weights.push_back(io::read_matrix(dir / numbered("W", j)));
      cls.betas.push_back(scalar(scalars, "beta_" + std::to_string(j + 1), dir / "scalars.csv"));
    }
  }
  if (supervised) m.classifier = std::move(cls);
  m.gammas = io::read_matrix(dir / "gammas.mat");
  m.validate();
  return out;
}

// ---------------------------------------------------------------------------

void cmd_synth(const Config& config, const fs::path& out_dir) {
  const DataConfig& d = need_data(config);
  if (d.kind == "paired") {
    PairedSpec spec;
    spec.dim = d.dims[0];
    spec.atoms = d.atoms[0];
    spec.sparsity = d.sparsity;
    spec.train_samples = d.samples;
    spec.test_samples = d.test_samples;
    spec.clean_snr_db = d.snr_db[0];
    spec.noisy_snr_db = d.snr_db[1];
    spec.seed = config.seed;
    const auto data = gen_paired(spec);
    write_data_dir(out_dir / "train", data.train, d.kind, d.atoms, std::nullopt, config);
    write_data_dir(out_dir / "test", data.test, d.kind, d.atoms, std::nullopt, config);
    ensure_dir(out_dir / "truth");
    io::write_matrix(out_dir / "truth" / "D1.mat", data.dictionary);
    log::info("wrote paired data to " + out_dir.string());
    return;
  }
  SyntheticData data;
  if (d.kind == "labeled") {
    LabeledSpec spec;
    spec.dims = d.dims;
    spec.atoms = d.atoms[0];
    spec.classes = d.classes;
    spec.sparsity = d.sparsity;
    spec.samples = d.samples;
    spec.snr_db = d.snr_db;
    spec.seed = config.seed;
    data = gen_labeled(spec);
  } else {
    data = generate(synthetic_spec(d, config.seed));
  }
  write_data_dir(out_dir, data.dataset, d.kind, d.atoms, data.truth.tree, config);
  write_truth(out_dir / "truth", data.truth);
  log::info("wrote " + std::to_string(data.dataset.sample_count()) + " samples to " + out_dir.string());
}

void cmd_fit(const Config& config, const fs::path& data_dir, const fs::path& out_dir) {
  const DataDir data = read_data_dir(data_dir);
  const PriorSpec prior = resolve_prior(config, data.kind, data.atoms, data.tree);
  FitResult result;
  try {
    result = fit_dataset(config, data.dataset, prior);
  } catch (const NumericalError& e) {
    throw NumericalError("fit on " + data_dir.string() + ": " + e.what());
  }
  write_model_dir(out_dir, result, data.dataset_id, config);
  log::info("model written to " + out_dir.string());
}

void cmd_eval(const fs::path& model_dir, const fs::path& truth_dir, const fs::path& out_dir) {
  const ModelDir md = read_model_dir(model_dir);
  const TruthDir truth = read_truth_dir(truth_dir);
  if (md.dataset_id != truth.dataset_id)
    throw ConfigError("manifest mismatch: the model was trained on dataset " + md.dataset_id + ", the truth is for " +
                      truth.dataset_id);
  const auto metrics = recovery_metrics(truth.dictionaries, truth.tree, md.model, md.codes);
  ensure_dir(out_dir);
  json j = metrics_json(metrics);
  j["dataset_id"] = md.dataset_id;
  j["config_hash"] = md.config_hash;
  write_json(out_dir / "metrics.json", j);
  std::string csv = "name,value\n";
  for (const auto& [k, v] : metrics) csv += k + "," + (v ? io::format_double(*v) : std::string()) + "\n";
  io::write_text(out_dir / "metrics.csv", csv);
  for (std::size_t jj = 0; jj < truth.dictionaries.size(); ++jj) {
    const Vector iota = atom_alignments(truth.dictionaries[jj], md.model.dictionaries[jj]);
    std::string h = "atom,iota\n";
    for (Index a = 0; a < iota.size(); ++a) h += std::to_string(a) + "," + io::format_double(iota(a)) + "\n";
    io::write_text(out_dir / numbered("iota_", static_cast<Index>(jj), ".csv"), h);
  }
}

void cmd_denoise(const Config& config, const fs::path& model_dir, const fs::path& data_dir, const fs::path& out_dir) {
  const ModelDir md = read_model_dir(model_dir);
  if (md.model.modality_count() != 2) throw InvalidArgument("denoising needs a bimodal model");
  if (md.codes.size() != 2) throw IoError(model_dir.string() + ": training codes X1.mat/X2.mat are needed to form P");
  const Matrix p = cross_modal_map(md.codes[0], md.codes[1]);
  const DataDir data = read_data_dir(data_dir);
  // two modalities: Y1 is the clean reference, Y2 the noisy input; one modality: Y1 is the noisy input
  const Index jn = data.dataset.modality_count() >= 2 ? 1 : 0;
  const Matrix& noisy = data.dataset.modalities[static_cast<std::size_t>(jn)];
  const Matrix estimate = denoise(md.model, p, noisy, config.inference_iterations, config.run.threads);
  ensure_dir(out_dir);
  io::write_matrix(out_dir / "Y1_hat.mat", estimate);
  io::write_matrix(out_dir / "P.mat", p);
  json report;
  report["samples"] = estimate.cols();
  if (jn == 1) {
    const Matrix& clean = data.dataset.modalities[0];
    report["input_snr_db"] = output_snr(clean, noisy);
    report["output_snr_db"] = output_snr(clean, estimate);
    const Vector in = per_sample_snr(clean, noisy), out = per_sample_snr(clean, estimate);
    std::string csv = "sample,input_snr_db,output_snr_db\n";
    for (Index i = 0; i < out.size(); ++i)
      csv += std::to_string(i) + "," + io::format_double(in(i)) + "," + io::format_double(out(i)) + "\n";
    io::write_text(out_dir / "snr.csv", csv);
  }
  write_json(out_dir / "snr.json", report);
}

void cmd_classify(const Config& config, const fs::path& model_dir, const fs::path& data_dir, const fs::path& out_dir,
                  bool require_accuracy) {
  const ModelDir md = read_model_dir(model_dir);
  if (!md.model.classifier) throw InvalidArgument("model in " + model_dir.string() + " has no classifier");
  const DataDir data = read_data_dir(data_dir);
  if (require_accuracy && !data.dataset.labels)
    throw InvalidArgument("accuracy requested but " + data_dir.string() + " has no labels (H.mat)");
  const bool scored = data.dataset.one_of_c();
  if (require_accuracy && !scored)
    throw InvalidArgument("accuracy requested but the labels in " + data_dir.string() + " are not one class per sample");
  if (data.dataset.modality_count() > md.model.modality_count())
    throw InvalidArgument("data has more modalities than the model");
  std::string csv = "sample,modality,class\n";
  json acc = json::object();
  for (Index j = 0; j < data.dataset.modality_count(); ++j) {
    const auto pred = classify(md.model, data.dataset.modalities[j], j, config.inference_iterations, config.run.threads);
    Index hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      csv += std::to_string(i) + "," + std::to_string(j + 1) + "," + std::to_string(pred[i]) + "\n";
      if (scored) hits += (*data.dataset.labels)(pred[i], static_cast<Index>(i)) != 0.0;
    }
    if (scored) acc["accuracy_" + std::to_string(j + 1)] = static_cast<double>(hits) / static_cast<double>(pred.size());
  }
  ensure_dir(out_dir);
  io::write_text(out_dir / "predictions.csv", csv);
  if (scored) write_json(out_dir / "accuracy.json", acc);
}

std::uint64_t trial_seed(std::uint64_t seed, Index trial) {
  auto rng = detail::make_rng(seed, detail::kStreamTrials, static_cast<std::uint64_t>(trial));
  return rng();
}

int cmd_experiment(const Config& config, const fs::path& out_dir) {
  const DataConfig& d = need_data(config);
  if (d.kind == "labeled" || d.kind == "paired")
    throw ConfigError("field 'data.kind': experiments run on one_to_one, atom_to_subspace or hierarchical data");
  ensure_dir(out_dir);
  std::vector<std::string> names;
  std::vector<std::vector<std::optional<double>>> rows;
  json failures = json::array();
  std::string csv;
  std::vector<std::string> lines;
  for (Index t = 0; t < config.trials; ++t) {
    const std::uint64_t seed = trial_seed(config.seed, t);
    Config trial = config;
    trial.seed = seed;
    try {
      const auto data = generate(synthetic_spec(d, seed));
      const PriorSpec prior = resolve_prior(trial, d.kind, d.atoms, data.truth.tree);
      const FitResult res = fit_dataset(trial, data.dataset, prior);
      auto metrics = recovery_metrics(data.truth.dictionaries, data.truth.tree, res.model, res.codes);
      metrics.emplace_back("iterations", static_cast<double>(res.report.iterations_run));
      if (names.empty())
        for (const auto& m : metrics) names.push_back(m.first);
      std::vector<std::optional<double>> row;
      std::string line = std::to_string(t) + "," + std::to_string(seed) + ",ok";
      for (const auto& m : metrics) {
        row.push_back(m.second);
        line += "," + (m.second ? io::format_double(*m.second) : std::string());
      }
      rows.push_back(std::move(row));
      lines.push_back(line);
      log::info("trial " + std::to_string(t + 1) + "/" + std::to_string(config.trials) + " done");
    } catch (const std::exception& e) {
      log::warn("trial " + std::to_string(t + 1) + " failed: " + e.what());
      failures.push_back({{"trial", t}, {"seed", seed}, {"error", e.what()}});
      lines.push_back(std::to_string(t) + "," + std::to_string(seed) + ",failed");
    }
  }
  csv = "trial,seed,status";
  for (const auto& n : names) csv += "," + n;
  csv += "\n";
  for (const auto& l : lines) csv += l + "\n";
  io::write_text(out_dir / "trials.csv", csv);

  json summary;
  summary["trials"] = config.trials;
  summary["succeeded"] = rows.size();
  summary["failures"] = failures;
  summary["config_hash"] = config.hash();
  json metrics = json::object();
  for (std::size_t k = 0; k < names.size(); ++k) {
    std::vector<double> v;
    for (const auto& r : rows)
      if (r[k]) v.push_back(*r[k]);
    if (v.empty()) {
      metrics[names[k]] = {{"mean", nullptr}, {"std", nullptr}, {"count", 0}};
      continue;
    }
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    metrics[names[k]] = {{"mean", mean}, {"std", sd}, {"count", v.size()}};
  }
  summary["metrics"] = metrics;
  write_json(out_dir / "summary.json", summary);
  return failures.empty() ? kSuccess : kPartialFailure;
}

// ---------------------------------------------------------------------------

int run(int argc, char** argv) {
  CLI::App app{"Multimodal sparse Bayesian dictionary learning"};
  app.set_version_flag("--version", std::string(MSBDL_VERSION));
  app.require_subcommand(1);
  std::string level = "info";
  app.add_option("--log-level", level, "debug, info, warn, error or off")
      ->check(CLI::IsMember({"debug", "info", "warn", "error", "off"}));

  std::string config_path, data_dir, out_dir, model_dir, truth_dir;
  std::uint64_t seed = 0;
  Index threads = 1;
  bool accuracy = false;
  auto* seed_opt = static_cast<CLI::Option*>(nullptr);
  auto* threads_opt = static_cast<CLI::Option*>(nullptr);

  auto common = [&](CLI::App* sub, bool need_config) {
    auto* c = sub->add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
    if (need_config) c->required();
    sub->add_option("--out", out_dir, "output directory")->required();
    seed_opt = sub->add_option("--seed-override", seed, "replace the configured seed");
    threads_opt = sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  };
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset and its ground truth");
  common(synth, true);
  auto* seed_synth = seed_opt;
  auto* threads_synth = threads_opt;
  auto* fitc = app.add_subcommand("fit", "learn dictionaries from a data directory");
  common(fitc, true);
  fitc->add_option("--data", data_dir, "data directory")->required()->check(CLI::ExistingDirectory);
  auto* seed_fit = seed_opt;
  auto* threads_fit = threads_opt;
  auto* eval = app.add_subcommand("eval", "score a model against synthetic ground truth");
  eval->add_option("--model", model_dir, "model directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--truth,--data", truth_dir, "synthetic data directory with truth/")
      ->required()
      ->check(CLI::ExistingDirectory);
  eval->add_option("--out", out_dir, "output directory")->required();
  auto* den = app.add_subcommand("denoise", "map noisy modality-2 data to modality-1 estimates");
  common(den, false);
  den->add_option("--model", model_dir, "model directory")->required()->check(CLI::ExistingDirectory);
  den->add_option("--data", data_dir, "data directory (Y1 clean reference, Y2 noisy)")
      ->required()
      ->check(CLI::ExistingDirectory);
  auto* seed_den = seed_opt;
  auto* threads_den = threads_opt;
  auto* cls = app.add_subcommand("classify", "predict classes with a supervised model");
  common(cls, false);
  cls->add_option("--model", model_dir, "model directory")->required()->check(CLI::ExistingDirectory);
  cls->add_option("--data", data_dir, "data directory")->required()->check(CLI::ExistingDirectory);
  cls->add_flag("--accuracy", accuracy, "fail unless labels are available for an accuracy report");
  auto* seed_cls = seed_opt;
  auto* threads_cls = threads_opt;
  auto* exp = app.add_subcommand("experiment", "repeated synth, fit and eval with per-trial seeds");
  common(exp, true);
  auto* seed_exp = seed_opt;
  auto* threads_exp = threads_opt;

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kSuccess : kUsageError;
  }

  log::set_level(level == "debug"  ? log::Level::debug
                 : level == "info" ? log::Level::info
                 : level == "warn" ? log::Level::warn
                 : level == "error" ? log::Level::error
                                    : log::Level::off);

  const auto overrides_for = [&](CLI::Option* s, CLI::Option* t) {
    Overrides o;
    if (s && s->count()) o.seed = seed;
    if (t && t->count()) o.threads = threads;
    return o;
  };
  const auto config_for = [&](CLI::Option* s, CLI::Option* t) {
    const Overrides o = overrides_for(s, t);
    return config_path.empty() ? parse_config("{}", o) : load_config(config_path, o);
  };

  try {
    if (*synth) {
      cmd_synth(config_for(seed_synth, threads_synth), out_dir);
    } else if (*fitc) {
      cmd_fit(config_for(seed_fit, threads_fit), data_dir, out_dir);
    } else if (*eval) {
      cmd_eval(model_dir, truth_dir, out_dir);
    } else if (*den) {
      cmd_denoise(config_for(seed_den, threads_den), model_dir, data_dir, out_dir);
    } else if (*cls) {
      cmd_classify(config_for(seed_cls, threads_cls), model_dir, data_dir, out_dir, accuracy);
    } else if (*exp) {
      return cmd_experiment(config_for(seed_exp, threads_exp), out_dir);
    }
  } catch (const NumericalError& e) {
    std::cerr << "msbdl: numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const std::exception& e) {
    std::cerr << "msbdl: " << e.what() << "\n";
    return kUsageError;
  }
  return kSuccess;
}

}  // namespace msbdl::cli
