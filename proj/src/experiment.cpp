// SPDX-License-Identifier: Apache-2.0
#include "tgnn/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace tgnn::exp {

using nlohmann::json;

namespace {

// Strict walker: every listed key is required, anything else is rejected,
// and errors carry the full key path.
class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object())
      throw ConfigError(path_ + ": expected an object");
  }

  Node object(const std::string& key) const {
    return Node(get(key), path_ + "." + key);
  }

  double number(const std::string& key) const {
    const json& v = get(key);
    if (!v.is_number())
      throw ConfigError(path_ + "." + key + ": expected a number");
    return v.get<double>();
  }

  int integer(const std::string& key) const {
    const json& v = get(key);
    if (!v.is_number_integer())
      throw ConfigError(path_ + "." + key + ": expected an integer");
    return v.get<int>();
  }

  std::uint64_t uinteger(const std::string& key) const {
    const json& v = get(key);
    if (!v.is_number_unsigned() && !v.is_number_integer())
      throw ConfigError(path_ + "." + key + ": expected an unsigned integer");
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string& key) const {
    const json& v = get(key);
    if (!v.is_boolean())
      throw ConfigError(path_ + "." + key + ": expected a boolean");
    return v.get<bool>();
  }

  std::string str(const std::string& key) const {
    const json& v = get(key);
    if (!v.is_string())
      throw ConfigError(path_ + "." + key + ": expected a string");
    return v.get<std::string>();
  }

  std::vector<double> number_list(const std::string& key) const {
    const json& v = get(key);
    if (!v.is_array())
      throw ConfigError(path_ + "." + key + ": expected an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number())
        throw ConfigError(path_ + "." + key + ": expected an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  void finish(std::initializer_list<const char*> allowed) const {
    for (const auto& item : j_.items()) {
      bool known = false;
      for (const char* k : allowed)
        if (item.key() == k) {
          known = true;
          break;
        }
      if (!known)
        throw ConfigError(path_ + ": unknown key '" + item.key() + "'");
    }
  }

 private:
  const json& get(const std::string& key) const {
    auto it = j_.find(key);
    if (it == j_.end())
      throw ConfigError(path_ + ": missing required key '" + key + "'");
    return *it;
  }

  const json& j_;
  std::string path_;
};

std::string offset_to_line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return std::to_string(line) + ":" + std::to_string(col);
}

}  // namespace

physics::PdeCoefficients ExperimentConfig::pde_coefficients() const {
  physics::PdeCoefficients c;
  c.specific_storage = grid.specific_storage;
  c.residual_scale = pde_residual_scale > 0.0 ? pde_residual_scale
                                              : 1.0 / grid.specific_storage;
  return c;
}

metrics::EvalSpec ExperimentConfig::eval_spec() const {
  metrics::EvalSpec s;
  s.final_step_only = metrics.final_step_only;
  return s;
}

void ExperimentConfig::validate() const {
  if (schema_version != 1)
    throw ConfigError("config: unsupported schema_version");
  grid.validate();
  covariance.validate();
  if (kle_terms < 1) throw ConfigError("config: scenario.covariance.n_terms >= 1");
  sampling.validate();
  architecture.validate();
  trainer.validate();
  constraints.validate();
  if (pde_residual_scale < 0.0)
    throw ConfigError("config: constraints.pde_residual_scale must be >= 0");
  if (threads < 1) throw ConfigError("config: threads must be >= 1");
  for (double l : metrics.noise_levels)
    if (l < 0.0) throw ConfigError("config: metrics.noise_levels must be >= 0");
}

net::Architecture scenario_architecture(const ExperimentConfig& cfg) {
  net::Architecture a = cfg.architecture;
  a.input_scale = {cfg.grid.total_time(), cfg.covariance.length_x,
                   cfg.covariance.length_y};
  return a;
}

std::string ExperimentConfig::to_json() const {
  json j;
  j["schema_version"] = schema_version;
  j["master_seed"] = master_seed;
  j["output_dir"] = output_dir;
  j["threads"] = threads;
  j["scenario"]["grid"] = {{"nx", grid.nx},
                           {"ny", grid.ny},
                           {"dx", grid.dx},
                           {"dy", grid.dy},
                           {"dt", grid.dt},
                           {"n_steps", grid.n_steps},
                           {"specific_storage", grid.specific_storage}};
  j["scenario"]["boundary"] = {{"left_head", boundary.left_head},
                               {"right_head", boundary.right_head}};
  j["scenario"]["covariance"] = {
      {"length_x", covariance.length_x},
      {"length_y", covariance.length_y},
      {"correlation_length", covariance.correlation_length},
      {"variance", covariance.variance},
      {"mean_log_k", covariance.mean_log_k},
      {"n_terms", kle_terms}};
  j["sampling"] = {{"n_data", sampling.n_data},   {"n_ic", sampling.n_ic},
                   {"n_bc", sampling.n_bc},       {"n_pde", sampling.n_pde},
                   {"n_ec", sampling.n_ec},       {"n_ek", sampling.n_ek},
                   {"train_t_max", sampling.train_t_max}};
  j["model"] = {{"hidden_layers", architecture.n_hidden},
                {"width", architecture.width},
                {"activation", "tanh"}};
  j["trainer"] = {
      {"mode", trainer.mode == train::TrainMode::Dual ? "dual" : "fixed"},
      {"fixed_weights", trainer.fixed_weights},
      {"max_epochs", trainer.max_epochs},
      {"learning_rate", trainer.adam.learning_rate},
      {"adam_beta1", trainer.adam.beta1},
      {"adam_beta2", trainer.adam.beta2},
      {"adam_epsilon", trainer.adam.epsilon},
      {"multiplier_step", trainer.multiplier_step},
      {"checkpoint_every", trainer.checkpoint_every},
      {"stopping",
       {{"rule", trainer.stopping.kind == train::StoppingRule::Kind::Dynamic
                     ? "dynamic"
                     : "fixed"},
        {"window", trainer.stopping.window},
        {"threshold", trainer.stopping.threshold},
        {"on_deltas", trainer.stopping.on_deltas}}}};
  j["constraints"] = {{"head_min", constraints.head_min},
                      {"head_max", constraints.head_max},
                      {"ec_enabled", constraints.ec_enabled},
                      {"ek_enabled", constraints.ek_enabled},
                      {"pde_residual_scale", pde_residual_scale}};
  j["metrics"] = {
      {"eval_window", metrics.final_step_only ? "final" : "all"},
      {"noise_levels", metrics.noise_levels}};
  return j.dump(2) + "\n";
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text,
                                                  const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ":" + offset_to_line_col(text, e.byte) + ": " +
                      e.what());
  }

  ExperimentConfig cfg;
  Node root(j, origin);
  root.finish({"schema_version", "master_seed", "output_dir", "threads",
               "scenario", "sampling", "model", "trainer", "constraints",
               "metrics"});
  cfg.schema_version = root.integer("schema_version");
  cfg.master_seed = root.uinteger("master_seed");
  cfg.output_dir = root.str("output_dir");
  cfg.threads = root.integer("threads");

  Node scenario = root.object("scenario");
  scenario.finish({"grid", "boundary", "covariance"});
  Node grid = scenario.object("grid");
  grid.finish({"nx", "ny", "dx", "dy", "dt", "n_steps", "specific_storage"});
  cfg.grid.nx = grid.integer("nx");
  cfg.grid.ny = grid.integer("ny");
  cfg.grid.dx = grid.number("dx");
  cfg.grid.dy = grid.number("dy");
  cfg.grid.dt = grid.number("dt");
  cfg.grid.n_steps = grid.integer("n_steps");
  cfg.grid.specific_storage = grid.number("specific_storage");

  Node boundary = scenario.object("boundary");
  boundary.finish({"left_head", "right_head"});
  cfg.boundary.left_head = boundary.number("left_head");
  cfg.boundary.right_head = boundary.number("right_head");

  Node cov = scenario.object("covariance");
  cov.finish({"length_x", "length_y", "correlation_length", "variance",
              "mean_log_k", "n_terms"});
  cfg.covariance.length_x = cov.number("length_x");
  cfg.covariance.length_y = cov.number("length_y");
  cfg.covariance.correlation_length = cov.number("correlation_length");
  cfg.covariance.variance = cov.number("variance");
  cfg.covariance.mean_log_k = cov.number("mean_log_k");
  cfg.kle_terms = cov.integer("n_terms");

  Node sampling = root.object("sampling");
  sampling.finish(
      {"n_data", "n_ic", "n_bc", "n_pde", "n_ec", "n_ek", "train_t_max"});
  cfg.sampling.n_data = sampling.integer("n_data");
  cfg.sampling.n_ic = sampling.integer("n_ic");
  cfg.sampling.n_bc = sampling.integer("n_bc");
  cfg.sampling.n_pde = sampling.integer("n_pde");
  cfg.sampling.n_ec = sampling.integer("n_ec");
  cfg.sampling.n_ek = sampling.integer("n_ek");
  cfg.sampling.train_t_max = sampling.number("train_t_max");

  Node model = root.object("model");
  model.finish({"hidden_layers", "width", "activation"});
  cfg.architecture.n_hidden = model.integer("hidden_layers");
  cfg.architecture.width = model.integer("width");
  if (model.str("activation") != "tanh")
    throw ConfigError(origin + ".model.activation: only 'tanh' is supported");

  Node trainer = root.object("trainer");
  trainer.finish({"mode", "fixed_weights", "max_epochs", "learning_rate",
                  "adam_beta1", "adam_beta2", "adam_epsilon",
                  "multiplier_step", "checkpoint_every", "stopping"});
  const std::string mode = trainer.str("mode");
  if (mode == "dual")
    cfg.trainer.mode = train::TrainMode::Dual;
  else if (mode == "fixed")
    cfg.trainer.mode = train::TrainMode::FixedWeights;
  else
    throw ConfigError(origin + ".trainer.mode: must be 'dual' or 'fixed'");
  const auto weights = trainer.number_list("fixed_weights");
  if (weights.size() != 6)
    throw ConfigError(origin +
                      ".trainer.fixed_weights: expected exactly 6 entries");
  std::copy(weights.begin(), weights.end(), cfg.trainer.fixed_weights.begin());
  cfg.trainer.max_epochs = trainer.integer("max_epochs");
  cfg.trainer.adam.learning_rate = trainer.number("learning_rate");
  cfg.trainer.adam.beta1 = trainer.number("adam_beta1");
  cfg.trainer.adam.beta2 = trainer.number("adam_beta2");
  cfg.trainer.adam.epsilon = trainer.number("adam_epsilon");
  cfg.trainer.multiplier_step = trainer.number("multiplier_step");
  cfg.trainer.checkpoint_every = trainer.integer("checkpoint_every");
  Node stopping = trainer.object("stopping");
  stopping.finish({"rule", "window", "threshold", "on_deltas"});
  const std::string rule = stopping.str("rule");
  if (rule == "fixed")
    cfg.trainer.stopping.kind = train::StoppingRule::Kind::FixedEpochs;
  else if (rule == "dynamic")
    cfg.trainer.stopping.kind = train::StoppingRule::Kind::Dynamic;
  else
    throw ConfigError(origin +
                      ".trainer.stopping.rule: must be 'fixed' or 'dynamic'");
  cfg.trainer.stopping.window = stopping.integer("window");
  cfg.trainer.stopping.threshold = stopping.number("threshold");
  cfg.trainer.stopping.on_deltas = stopping.boolean("on_deltas");

  Node constraints = root.object("constraints");
  constraints.finish({"head_min", "head_max", "ec_enabled", "ek_enabled",
                      "pde_residual_scale"});
  cfg.constraints.head_min = constraints.number("head_min");
  cfg.constraints.head_max = constraints.number("head_max");
  cfg.constraints.ec_enabled = constraints.boolean("ec_enabled");
  cfg.constraints.ek_enabled = constraints.boolean("ek_enabled");
  cfg.pde_residual_scale = constraints.number("pde_residual_scale");

  Node metrics = root.object("metrics");
  metrics.finish({"eval_window", "noise_levels"});
  const std::string window = metrics.str("eval_window");
  if (window == "all")
    cfg.metrics.final_step_only = false;
  else if (window == "final")
    cfg.metrics.final_step_only = true;
  else
    throw ConfigError(origin +
                      ".metrics.eval_window: must be 'all' or 'final'");
  cfg.metrics.noise_levels = metrics.number_list("noise_levels");

  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str(), path.string());
}

void write_once(const std::filesystem::path& path, const std::string& text) {
  if (std::filesystem::exists(path)) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    if (buf.str() != text)
      throw ConfigError("refusing to overwrite existing artifact with "
                        "different content: " +
                        path.string());
    return;  // identical content already on disk
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write file: " + path.string());
  out << text;
}

namespace {

void write_fingerprints(const std::filesystem::path& dir,
                        std::uint64_t master_seed) {
  std::ostringstream kv;
  kv << "master_seed=" << master_seed << "\n";
  kv << "field_seed=" << derive_seed(master_seed, kFieldTag) << "\n";
  kv << "data_seed=" << derive_seed(master_seed, kDataTag) << "\n";
  kv << "init_seed=" << derive_seed(master_seed, kInitTag) << "\n";
  kv << "multiplier_seed=" << derive_seed(master_seed, kMultiplierTag) << "\n";
  kv << "noise_seed=" << derive_seed(master_seed, kNoiseTag) << "\n";
  kv << "field_file_fnv1a=" << to_hex(fnv1a_file(dir / "field.txt")) << "\n";
  kv << "solution_file_fnv1a=" << to_hex(fnv1a_file(dir / "solution.txt"))
     << "\n";
  write_once(dir / "fingerprints.kv", kv.str());
}

}  // namespace

RunArtifacts ensure_artifacts(const ExperimentConfig& cfg,
                              const std::filesystem::path& dir,
                              std::uint64_t master_seed) {
  std::filesystem::create_directories(dir);
  write_once(dir / "config.resolved.json", cfg.to_json());

  const auto field_path = dir / "field.txt";
  std::optional<kle::FieldRealization> field;
  if (std::filesystem::exists(field_path)) {
    field = kle::load_field(field_path);
    if (field->basis().n_terms() != cfg.kle_terms)
      throw ConfigError("existing field file does not match the config: " +
                        field_path.string());
  } else {
    field = kle::generate_field(cfg.covariance, cfg.kle_terms,
                                derive_seed(master_seed, kFieldTag));
    write_once(field_path, kle::serialize_field(*field));
  }

  const auto sol_path = dir / "solution.txt";
  fdm::ReferenceSolution sol;
  if (std::filesystem::exists(sol_path)) {
    sol = fdm::load_solution(sol_path);
    if (sol.field_fingerprint != field->fingerprint())
      throw ConfigError("existing solution file was produced from a "
                        "different field: " +
                        sol_path.string());
  } else {
    sol = fdm::simulate(*field, cfg.grid, cfg.boundary);
    write_once(sol_path, fdm::serialize_solution(sol));
    fdm::export_csv(dir / "solution.csv", sol);
  }
  write_fingerprints(dir, master_seed);
  return {std::move(*field), std::move(sol)};
}

MethodResult run_method(const ExperimentConfig& cfg,
                        const std::filesystem::path& dir,
                        const RunArtifacts& art, const std::string& method,
                        std::uint64_t master_seed, double noise_alpha,
                        std::optional<std::array<double, 3>> frozen,
                        int max_epochs_override) {
  physics::Dataset dataset = physics::sample_dataset(
      art.solution, cfg.sampling, derive_seed(master_seed, kDataTag));
  if (noise_alpha > 0.0)
    metrics::add_noise(dataset, art.solution, noise_alpha,
                       derive_seed(master_seed, kNoiseTag));

  train::TrainConfig tc = cfg.trainer;
  tc.init_seed = derive_seed(master_seed, kInitTag);
  tc.multiplier_seed = derive_seed(master_seed, kMultiplierTag);
  tc.n_threads = cfg.threads;
  if (max_epochs_override > 0) tc.max_epochs = max_epochs_override;

  if (method == "tgnn-ld") {
    tc.mode = train::TrainMode::Dual;
  } else if (method == "tgnn") {
    tc.mode = train::TrainMode::FixedWeights;
    tc.fixed_weights = {1, 1, 1, 100, 1, 1};
  } else if (method == "tgnn-1") {
    tc.mode = train::TrainMode::FixedWeights;
    tc.fixed_weights = {1, 1, 1, 1, 1, 1};
  } else if (method == "custom") {
    // trainer block as configured
  } else {
    throw ConfigError("unknown method: " + method);
  }

  const auto method_dir = dir / method;
  std::filesystem::create_directories(method_dir);
  if (tc.checkpoint_every > 0) tc.checkpoint_dir = method_dir;

  const net::Architecture arch = scenario_architecture(cfg);
  train::TrainResult tr;
  if (frozen) {
    tr = train::train_fixed_multipliers(tc, arch, dataset, art.field,
                                        cfg.constraints,
                                        cfg.pde_coefficients(), (*frozen)[0],
                                        (*frozen)[1], (*frozen)[2]);
  } else {
    tr = train::train(tc, arch, dataset, art.field, cfg.constraints,
                      cfg.pde_coefficients());
  }
  if (tr.aborted)
    throw NumericError("training aborted on a non-finite loss (method " +
                       method + ")");

  const metrics::EvalReport rep =
      metrics::evaluate(tr.params, art.solution, cfg.eval_spec());

  physics::export_dataset_csv(method_dir / "dataset.csv", dataset);
  train::write_iteration_log(method_dir / "iterations.csv", tr.log);
  net::save_checkpoint(method_dir / "checkpoint.txt", tr.params,
                       tr.epochs_run);
  metrics::write_report_kv(method_dir / "report.kv", rep, tr, method,
                           master_seed, art.field.fingerprint());
  return {method, master_seed, std::move(tr), rep};
}

void cmd_field(const ExperimentConfig& cfg) {
  const std::filesystem::path dir(cfg.output_dir);
  std::filesystem::create_directories(dir);
  write_once(dir / "config.resolved.json", cfg.to_json());
  const auto field_path = dir / "field.txt";
  if (!std::filesystem::exists(field_path)) {
    const auto field = kle::generate_field(
        cfg.covariance, cfg.kle_terms, derive_seed(cfg.master_seed, kFieldTag));
    write_once(field_path, kle::serialize_field(field));
  }
}

void cmd_sim(const ExperimentConfig& cfg) {
  ensure_artifacts(cfg, cfg.output_dir, cfg.master_seed);
}

void cmd_train(const ExperimentConfig& cfg) {
  const auto art = ensure_artifacts(cfg, cfg.output_dir, cfg.master_seed);
  const std::string method =
      cfg.trainer.mode == train::TrainMode::Dual ? "tgnn-ld" : "custom";
  run_method(cfg, cfg.output_dir, art, method, cfg.master_seed);
}

void cmd_eval(const ExperimentConfig& cfg,
              const std::filesystem::path& checkpoint) {
  const std::filesystem::path dir(cfg.output_dir);
  const auto sol = fdm::load_solution(dir / "solution.txt");
  const net::NetworkParams params = net::load_checkpoint(checkpoint);
  const auto rep = metrics::evaluate(params, sol, cfg.eval_spec());
  std::ostringstream kv;
  kv << "checkpoint=" << checkpoint.string() << "\n";
  kv << "l2_mse=" << format_double(rep.l2_mse) << "\n";
  kv << "l2_relative=" << format_double(rep.l2_relative) << "\n";
  kv << "r2=" << format_double(rep.r2) << "\n";
  kv << "n_points=" << rep.n_points << "\n";
  write_once(dir / "eval.kv", kv.str());
  std::ostringstream csv;
  csv << "l2_mse,l2_relative,r2,n_points,eval_wall_s\n"
      << format_double(rep.l2_mse) << "," << format_double(rep.l2_relative)
      << "," << format_double(rep.r2) << "," << rep.n_points << ","
      << format_double(rep.wall_time_s) << "\n";
  write_once(dir / "eval.csv", csv.str());
}

double median(std::vector<double> v) {
  if (v.empty()) throw NumericError("median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace {

std::uint64_t sweep_seed(const ExperimentConfig& cfg, int i) {
  return derive_seed(cfg.master_seed, kSweepBase + static_cast<std::uint64_t>(i));
}

std::string result_row(const MethodResult& r, const std::string& seed_label) {
  std::ostringstream out;
  out << r.method << "," << seed_label << "," << r.master_seed << ","
      << format_double(r.report.l2_mse) << ","
      << format_double(r.report.l2_relative) << ","
      << format_double(r.report.r2) << "," << format_double(r.training.wall_s)
      << "," << r.training.epochs_run << "," << r.training.stopped_epoch << ","
      << format_double(r.training.multipliers.lambda_pde) << ","
      << format_double(r.training.multipliers.lambda_ec) << ","
      << format_double(r.training.multipliers.lambda_ek);
  return out.str();
}

constexpr const char* kResultHeader =
    "method,seed,master_seed,l2_mse,l2_relative,r2,train_wall_s,epochs_run,"
    "stopped_epoch,lambda_pde,lambda_ec,lambda_ek";

std::string median_row(const std::vector<MethodResult>& results,
                       const std::string& method, const std::string& tag) {
  std::vector<double> mse, r2;
  for (const auto& r : results)
    if (r.method == method) {
      mse.push_back(r.report.l2_mse);
      r2.push_back(r.report.r2);
    }
  if (mse.empty()) return {};
  return method + "," + tag + ",," + format_double(median(mse)) + ",," +
         format_double(median(r2)) + ",,,,,,\n";
}

}  // namespace

void cmd_compare(const ExperimentConfig& cfg, int n_seeds) {
  if (n_seeds < 1) throw ConfigError("compare: n_seeds must be >= 1");
  const std::filesystem::path root(cfg.output_dir);
  std::filesystem::create_directories(root);
  write_once(root / "config.resolved.json", cfg.to_json());

  std::vector<MethodResult> results;
  std::ostringstream csv;
  csv << kResultHeader << "\n";
  for (int i = 0; i < n_seeds; ++i) {
    const std::uint64_t seed = n_seeds == 1 ? cfg.master_seed : sweep_seed(cfg, i);
    const auto dir = root / ("seed_" + std::to_string(i));
    const auto art = ensure_artifacts(cfg, dir, seed);
    for (const std::string method : {"tgnn-ld", "tgnn", "tgnn-1"}) {
      auto r = run_method(cfg, dir, art, method, seed);
      csv << result_row(r, std::to_string(i)) << "\n";
      results.push_back(std::move(r));
    }
  }
  for (const std::string m : {"tgnn-ld", "tgnn", "tgnn-1"})
    csv << median_row(results, m, "median");
  write_once(root / "compare.csv", csv.str());
}

void cmd_sweep_epochs(const ExperimentConfig& cfg,
                      const std::vector<int>& epoch_list) {
  if (epoch_list.empty()) throw ConfigError("sweep: empty epoch list");
  const std::filesystem::path root(cfg.output_dir);
  std::filesystem::create_directories(root);
  write_once(root / "config.resolved.json", cfg.to_json());
  const auto art = ensure_artifacts(cfg, root / "seed_0", cfg.master_seed);

  std::ostringstream csv;
  csv << "epochs,l2_mse,l2_relative,r2,train_wall_s\n";
  for (int epochs : epoch_list) {
    if (epochs < 1) throw ConfigError("sweep: epoch budgets must be >= 1");
    const auto dir = root / ("epochs_" + std::to_string(epochs));
    std::filesystem::create_directories(dir);
    const auto r = run_method(cfg, dir, art, "tgnn-ld", cfg.master_seed, 0.0,
                              std::nullopt, epochs);
    csv << epochs << "," << format_double(r.report.l2_mse) << ","
        << format_double(r.report.l2_relative) << ","
        << format_double(r.report.r2) << ","
        << format_double(r.training.wall_s) << "\n";
  }
  write_once(root / "sweep.csv", csv.str());
}

void cmd_noise_suite(const ExperimentConfig& cfg,
                     const std::vector<double>& levels, int n_seeds) {
  if (levels.empty()) throw ConfigError("noise suite: empty level list");
  if (n_seeds < 1) throw ConfigError("noise suite: n_seeds must be >= 1");
  const std::filesystem::path root(cfg.output_dir);
  std::filesystem::create_directories(root);
  write_once(root / "config.resolved.json", cfg.to_json());

  std::ostringstream csv;
  csv << "noise_percent," << kResultHeader << "\n";
  for (double alpha : levels) {
    if (alpha < 0.0) throw ConfigError("noise suite: levels must be >= 0");
    std::vector<MethodResult> level_results;
    for (int i = 0; i < n_seeds; ++i) {
      const std::uint64_t seed =
          n_seeds == 1 ? cfg.master_seed : sweep_seed(cfg, i);
      std::ostringstream name;
      name << "alpha_" << alpha << "_seed_" << i;
      const auto dir = root / name.str();
      const auto art = ensure_artifacts(cfg, dir, seed);
      for (const std::string method : {"tgnn-ld", "tgnn", "tgnn-1"}) {
        auto r = run_method(cfg, dir, art, method, seed, alpha);
        csv << format_double(alpha) << ","
            << result_row(r, std::to_string(i)) << "\n";
        level_results.push_back(std::move(r));
      }
    }
    for (const std::string m : {"tgnn-ld", "tgnn", "tgnn-1"}) {
      const std::string row = median_row(level_results, m, "median");
      if (!row.empty()) csv << format_double(alpha) << "," << row;
    }
  }
  write_once(root / "noise.csv", csv.str());
}

void cmd_replay_multipliers(const ExperimentConfig& cfg, double lambda_pde,
                            double lambda_ec, double lambda_ek) {
  const std::filesystem::path root(cfg.output_dir);
  std::filesystem::create_directories(root);
  write_once(root / "config.resolved.json", cfg.to_json());
  const auto art = ensure_artifacts(cfg, root / "seed_0", cfg.master_seed);

  const auto frozen_dir = root / "fixed-multipliers";
  std::filesystem::create_directories(frozen_dir);
  const auto frozen =
      run_method(cfg, frozen_dir, art, "tgnn-ld", cfg.master_seed, 0.0,
                 std::array<double, 3>{lambda_pde, lambda_ec, lambda_ek});
  const auto dynamic_dir = root / "dynamic";
  std::filesystem::create_directories(dynamic_dir);
  const auto dyn = run_method(cfg, dynamic_dir, art, "tgnn-ld", cfg.master_seed);

  std::ostringstream csv;
  csv << "variant," << kResultHeader << "\n";
  csv << "fixed-multipliers," << result_row(frozen, "0") << "\n";
  csv << "dynamic," << result_row(dyn, "0") << "\n";
  write_once(root / "replay.csv", csv.str());
}

}  // namespace tgnn::exp
