#include "mirrorfdr/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <memory>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "mirrorfdr/dataset.hpp"
#include "mirrorfdr/errors.hpp"
#include "mirrorfdr/pipeline.hpp"
#include "mirrorfdr/random.hpp"
#include "mirrorfdr/simulation.hpp"

namespace mirrorfdr {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Shortest round-trip representation, independent of locale and stream state.
std::string num(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc{} ? std::string(buf, end) : std::string("nan");
}

// Quotes a CSV field only when it needs it.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

struct RunConfig {
  // input
  std::string input;
  std::vector<std::string> covariates{"x"};
  std::string response = "y";
  std::string label;
  std::string transform = "identity";
  // neighborhoods and trimming
  double delta = 0.05;
  std::string norm = "euclidean";
  std::size_t min_size = 50;
  double z_crit = 1.96;
  std::size_t batch_k = 1;
  std::size_t min_retained = 30;
  std::string bandwidth = "silverman";
  std::string scaling = "root_n";
  std::string null_source = "neighborhood";
  // threshold training
  double alpha = 0.1;
  double lambda_sharp = 1000.0;
  double lambda2_init = 0.0;
  double rho = 1.0;
  double eta = 0.1;
  std::size_t epochs = 500;
  std::size_t pretrain_epochs = 200;
  double learning_rate = 1e-2;
  bool enforce_fdp = true;
  // run
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string out = "mirrorfdr_out";
  std::string config_file;
  // estimate
  bool p_values = false;
  // simulate
  int scenario = 2;
  std::size_t reps = 10;
  std::vector<double> alphas;
  std::vector<std::string> methods{"proposed", "bh"};
  std::size_t n_null = 4000;
  std::size_t n_alt = 1000;
  std::string emit_data;
  bool variance_as_sd = false;
  // bh
  std::string p_column = "p_value";
};

json input_json(const RunConfig& c) {
  return {{"input", c.input},
          {"covariates", c.covariates},
          {"response", c.response},
          {"label", c.label},
          {"transform", c.transform}};
}

json trim_json(const RunConfig& c) {
  return {{"delta", c.delta},          {"norm", c.norm},
          {"min_size", c.min_size},    {"z_crit", c.z_crit},
          {"batch_k", c.batch_k},      {"min_retained", c.min_retained},
          {"bandwidth", c.bandwidth},  {"scaling", c.scaling},
          {"null_source", c.null_source}};
}

json train_json(const RunConfig& c) {
  return {{"alpha", c.alpha},
          {"lambda", c.lambda_sharp},
          {"lambda2_init", c.lambda2_init},
          {"rho", c.rho},
          {"eta", c.eta},
          {"epochs", c.epochs},
          {"pretrain_epochs", c.pretrain_epochs},
          {"lr", c.learning_rate},
          {"enforce_fdp", c.enforce_fdp}};
}

json config_json(const std::string& command, const RunConfig& c) {
  json j = {{"seed", c.seed}, {"threads", c.threads}, {"out", c.out}};
  if (command == "estimate" || command == "test") {
    j["input"] = input_json(c);
    j["trim"] = trim_json(c);
  }
  if (command == "estimate") j["p_values"] = c.p_values;
  if (command == "test") j["train"] = train_json(c);
  if (command == "simulate") {
    j["trim"] = trim_json(c);
    j["train"] = train_json(c);
    j["scenario"] = c.scenario;
    j["reps"] = c.reps;
    j["alphas"] = c.alphas;
    j["methods"] = c.methods;
    j["n_null"] = c.n_null;
    j["n_alt"] = c.n_alt;
    j["emit_data"] = c.emit_data;
    j["variance_as_sd"] = c.variance_as_sd;
  }
  if (command == "bh") {
    j["input"] = c.input;
    j["p_column"] = c.p_column;
    j["alpha"] = c.alpha;
  }
  return j;
}

PipelineConfig pipeline_config(const RunConfig& c) {
  PipelineConfig p;
  p.trim.z_crit = c.z_crit;
  p.trim.batch_k = c.batch_k;
  p.trim.min_retained = c.min_retained;
  p.trim.query.delta = c.delta;
  p.trim.query.min_size = c.min_size;
  p.trim.query.norm = c.norm == "max" ? Norm::max : Norm::euclidean;
  p.trim.scaling = c.scaling == "literal" ? TestScaling::literal : TestScaling::root_n;
  if (c.bandwidth != "silverman") {
    double h = 0.0;
    const auto* first = c.bandwidth.data();
    const auto* last = first + c.bandwidth.size();
    auto [ptr, ec] = std::from_chars(first, last, h);
    if (ec != std::errc{} || ptr != last)
      throw ValidationError("--bandwidth must be 'silverman' or a positive number, got '" +
                            c.bandwidth + "'");
    p.trim.kde.rule = KdeConfig::Bandwidth::fixed;
    p.trim.kde.fixed_h = h;
  }
  p.null_source = c.null_source == "retained" ? NullSource::retained : NullSource::neighborhood;
  p.train.alpha = c.alpha;
  p.train.lambda_sharp = c.lambda_sharp;
  p.train.lambda2_init = c.lambda2_init;
  p.train.rho = c.rho;
  p.train.eta = c.eta;
  p.train.epochs = c.epochs;
  p.train.pretrain_epochs = c.pretrain_epochs;
  p.train.learning_rate = c.learning_rate;
  p.train.enforce_fdp = c.enforce_fdp;
  p.train.seed = c.seed;
  p.threads = c.threads;
  p.trim.validate();
  return p;
}

class Run {
 public:
  Run(std::string command, const RunConfig& cfg, std::ostream& err)
      : command_(std::move(command)), cfg_(cfg), err_(err),
        start_(std::chrono::steady_clock::now()) {
    std::error_code ec;
    fs::create_directories(cfg_.out, ec);
    if (ec) throw ValidationError("cannot create output directory '" + cfg_.out + "': " + ec.message());
  }

  fs::path path(const std::string& name) const { return fs::path(cfg_.out) / name; }

  std::ofstream open(const std::string& name) {
    std::ofstream f(path(name), std::ios::binary);
    if (!f) throw ValidationError("cannot write '" + path(name).string() + "'");
    outputs_.push_back(name);
    return f;
  }

  void warn(const std::string& message) {
    err_ << "warning: " << message << '\n';
    warnings_.push_back(message);
  }

  void write_manifest(json extra = json::object()) {
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json m = {{"command", command_},
              {"version", kVersion},
              {"seed", cfg_.seed},
              {"config", config_json(command_, cfg_)},
              {"config_file", cfg_.config_file},
              {"config_file_text", config_text()},
              {"outputs", outputs_},
              {"warnings", warnings_},
              {"wall_time_seconds", wall}};
    for (auto& [k, v] : extra.items()) m[k] = v;
    std::ofstream f(path("manifest.json"), std::ios::binary);
    f << m.dump(2) << '\n';
  }

 private:
  std::string config_text() const {
    if (cfg_.config_file.empty()) return "";
    std::ifstream f(cfg_.config_file, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
  }

  std::string command_;
  const RunConfig& cfg_;
  std::ostream& err_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::string> outputs_;
  std::vector<std::string> warnings_;
};

Dataset load_input(const RunConfig& c, Run& run) {
  if (c.input.empty()) throw ValidationError("--input is required");
  CsvSchema schema{c.covariates, c.response, std::nullopt};
  if (!c.label.empty()) schema.label = c.label;
  auto ds = load_csv(c.input, schema);
  ds = transform_response(ds, ResponseTransform::parse(c.transform));
  if (ds.size() >= 2) {
    const auto scaled = scale_covariates(ds);
    for (std::size_t k = 0; k < scaled.dim(); ++k)
      if (scaled.scaler()[k].constant)
        run.warn("covariate '" + ds.covariate_names[k] + "' is constant; mapped to 0.5");
  }
  return ds;
}

void write_row_prefix(std::ostream& f, const Dataset& raw, std::size_t i) {
  f << i;
  for (double x : raw.covariate(i)) f << ',' << num(x);
  f << ',' << num(raw.response(i));
}

void write_header_prefix(std::ostream& f, const Dataset& raw, const char* first) {
  f << first;
  for (const auto& name : raw.covariate_names) f << ',' << csv_field(name);
  f << ',' << csv_field(raw.response_name);
}

int cmd_estimate(const RunConfig& c, std::ostream& out, std::ostream& err) {
  Run run("estimate", c, err);
  const auto pc = pipeline_config(c);
  const auto raw = load_input(c, run);
  const auto est = run_estimation(raw, pc);

  auto f = run.open("centers.csv");
  write_header_prefix(f, raw, "row");
  f << ",m_hat,t0,n_retained,iterations,flags";
  if (c.p_values) f << ",p_value";
  f << '\n';
  std::size_t flagged = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    Flags flags = est.centers.flags[i];
    flags |= est.pvalues.flags[i];
    flagged += flags.bits != 0 ? 1 : 0;
    write_row_prefix(f, raw, i);
    const auto n_ret = est.centers.retained.empty() ? 0 : est.centers.retained[i].size();
    f << ',' << num(est.centers.m[i]) << ',' << num(est.centers.t0[i]) << ',' << n_ret << ','
      << est.centers.iterations[i] << ',' << flags.describe();
    if (c.p_values) f << ',' << num(est.pvalues.p[i]);
    f << '\n';
  }
  f.close();
  run.write_manifest({{"rows", raw.size()}, {"flagged_rows", flagged}});
  out << "estimate: " << raw.size() << " rows -> " << run.path("centers.csv").string() << '\n';
  return kExitOk;
}

int cmd_test(const RunConfig& c, std::ostream& out, std::ostream& err) {
  if (!(c.alpha >= 0.0 && c.alpha < 1.0)) throw ValidationError("--alpha must lie in [0, 1)");
  Run run("test", c, err);
  const auto pc = pipeline_config(c);
  if (c.alpha > 0.0) pc.train.validate();
  const auto raw = load_input(c, run);
  const auto est = run_estimation(raw, pc);
  double mse = 0.0;
  const auto start = pretrained_net(est, pc, &mse);

  ThresholdFit fit{start, mse, {}, {}};
  try {
    fit = fit_threshold(est, start, pc);
    fit.pretrain_mse = mse;
  } catch (const TrainingDiverged& e) {
    auto t = run.open("trace.csv");
    t << "epoch,R_sigma,V_sigma,FDP_sigma,lambda2,loss\n";
    for (const auto& r : e.trace)
      t << r.epoch << ',' << num(r.R_sigma) << ',' << num(r.V_sigma) << ',' << num(r.FDP_sigma)
        << ',' << num(r.lambda2) << ',' << num(r.loss) << '\n';
    throw;
  }

  auto t = run.open("trace.csv");
  t << "epoch,R_sigma,V_sigma,FDP_sigma,lambda2,loss\n";
  for (const auto& r : fit.outcome.trace)
    t << r.epoch << ',' << num(r.R_sigma) << ',' << num(r.V_sigma) << ',' << num(r.FDP_sigma)
      << ',' << num(r.lambda2) << ',' << num(r.loss) << '\n';
  t.close();

  const auto& res = fit.result;
  std::vector<char> is_rejected(raw.size(), 0);
  for (auto i : res.rejected) is_rejected[i] = 1;
  auto f = run.open("rejections.csv");
  write_header_prefix(f, raw, "index");
  f << ",p,t_hat,rejected\n";
  for (std::size_t i = 0; i < raw.size(); ++i) {
    write_row_prefix(f, raw, i);
    f << ',' << num(est.pvalues.p[i]) << ',' << num(res.threshold_at[i]) << ','
      << int(is_rejected[i]) << '\n';
  }
  f.close();

  json summary = {{"R", res.R},
                  {"V_hat", res.V_hat},
                  {"FDP_hat", res.FDP_hat},
                  {"alpha", c.alpha},
                  {"n", raw.size()},
                  {"shrink", fit.outcome.shrink},
                  {"lambda2", fit.outcome.lambda2},
                  {"pretrain_mse", fit.pretrain_mse},
                  {"trace_path", run.path("trace.csv").string()},
                  {"config", config_json("test", c)},
                  {"version", kVersion}};
  if (raw.has_labels()) {
    const auto s = score(raw, res.rejected);
    summary["truth"] = {{"V", s.V}, {"FDP", s.FDP}, {"TPR", s.TPR}};
  }
  {
    auto sj = run.open("summary.json");
    sj << summary.dump(2) << '\n';
  }
  run.write_manifest({{"R", res.R}, {"FDP_hat", res.FDP_hat}});
  out << "test: R=" << res.R << " V_hat=" << res.V_hat << " FDP_hat=" << num(res.FDP_hat)
      << " -> " << run.path("rejections.csv").string() << '\n';
  return kExitOk;
}

int cmd_simulate(RunConfig c, std::ostream& out, std::ostream& err) {
  if (c.alphas.empty()) c.alphas = {c.alpha};
  for (double a : c.alphas)
    if (!(a > 0.0 && a < 1.0)) throw ValidationError("--alphas entries must lie in (0, 1)");
  std::vector<Method> methods;
  for (const auto& m : c.methods) methods.push_back(parse_method(m));
  auto spec = ScenarioSpec::scenario(c.scenario);
  spec.n_null = c.n_null;
  spec.n_alt = c.n_alt;
  spec.null_phi.second_is_sd = c.variance_as_sd;
  spec.alt_phi.second_is_sd = c.variance_as_sd;
  spec.validate();
  if (c.reps < 1) throw ValidationError("--reps must be at least 1");

  Run run("simulate", c, err);
  auto pc = pipeline_config(c);
  pc.train.alpha = c.alphas.front();
  pc.train.validate();

  if (!c.emit_data.empty()) {
    const auto ds = generate(spec, derive_seed(c.seed, 0));
    auto f = run.open(c.emit_data);
    f << "x,y,label\n";
    for (std::size_t i = 0; i < ds.size(); ++i)
      f << num(ds.covariate(i)[0]) << ',' << num(ds.response(i)) << ','
        << (ds.label(i) == Label::alternative ? 1 : 0) << '\n';
  }

  const auto table = replicate(spec, c.reps, c.alphas, methods, c.seed, pc, c.threads);
  for (const auto& msg : table.failures) run.warn(msg);
  if (table.scores.empty()) throw NumericalError("simulate: every replicate failed");

  auto f = run.open("table.csv");
  f << "method,alpha,R_mean,R_std,FDR_mean,FDR_std,TPR_mean,TPR_std\n";
  for (const auto& r : table.rows)
    f << to_string(r.method) << ',' << num(r.alpha) << ',' << num(r.R_mean) << ','
      << num(r.R_std) << ',' << num(r.FDR_mean) << ',' << num(r.FDR_std) << ','
      << num(r.TPR_mean) << ',' << num(r.TPR_std) << '\n';
  f.close();
  run.write_manifest({{"successful_reps", table.scores.size()},
                      {"failed_reps", table.failures.size()}});
  out << "simulate: scenario " << c.scenario << ", " << table.scores.size() << " reps -> "
      << run.path("table.csv").string() << '\n';
  return kExitOk;
}

// Reads a headed CSV and returns the named column as numbers.
std::vector<double> read_column(const std::string& path, const std::string& column) {
  CsvSchema schema{{column}, column, std::nullopt};
  const auto ds = load_csv(path, schema);
  return {ds.responses().begin(), ds.responses().end()};
}

int cmd_bh(const RunConfig& c, std::ostream& out, std::ostream& err) {
  if (c.input.empty()) throw ValidationError("--input is required");
  if (!(c.alpha >= 0.0 && c.alpha <= 1.0)) throw ValidationError("--alpha must lie in [0, 1]");
  Run run("bh", c, err);
  const auto p = read_column(c.input, c.p_column);
  for (std::size_t i = 0; i < p.size(); ++i)
    if (!(p[i] >= 0.0 && p[i] <= 1.0))
      throw ValidationError("row " + std::to_string(i) + ", column '" + c.p_column +
                            "': p-value outside [0, 1]");
  const auto rejected = bh_procedure(p, c.alpha);
  std::vector<char> flag(p.size(), 0);
  for (auto i : rejected) flag[i] = 1;
  auto f = run.open("bh.csv");
  f << "row," << csv_field(c.p_column) << ",rejected\n";
  for (std::size_t i = 0; i < p.size(); ++i) f << i << ',' << num(p[i]) << ',' << int(flag[i]) << '\n';
  f.close();
  run.write_manifest({{"R", rejected.size()}});
  out << "bh: R=" << rejected.size() << " of " << p.size() << '\n';
  return kExitOk;
}

void add_input_options(CLI::App& sub, RunConfig& c) {
  const std::string g = "Input";
  sub.add_option("--input,-i", c.input, "Input CSV with a header row")->group(g);
  sub.add_option("--covariates", c.covariates, "Covariate column names")->delimiter(',')->group(g);
  sub.add_option("--response", c.response, "Response column name")->group(g);
  sub.add_option("--label", c.label, "Optional 0/1 truth column, used only for reporting")->group(g);
}

void add_trim_options(CLI::App& sub, RunConfig& c) {
  const std::string g = "Trimming";
  sub.add_option("--norm", c.norm, "Distance on scaled covariates")
      ->check(CLI::IsMember({"euclidean", "max"}))->group(g);
  sub.add_option("--min-size", c.min_size, "Neighborhood size reached by widening delta")->group(g);
  sub.add_option("--z-crit", c.z_crit, "Critical value of the symmetry test")->group(g);
  sub.add_option("--batch-k", c.batch_k, "Values removed per trimming step")->group(g);
  sub.add_option("--min-retained", c.min_retained, "Trimming never goes below this size")->group(g);
  sub.add_option("--bandwidth", c.bandwidth, "'silverman' or a fixed KDE bandwidth")->group(g);
  sub.add_option("--scaling", c.scaling, "Symmetry test form")
      ->check(CLI::IsMember({"root_n", "literal"}))->group(g);
  sub.add_option("--null-source", c.null_source, "Sample mirrored for the p-value null")
      ->check(CLI::IsMember({"neighborhood", "retained"}))->group(g);
}

void add_simulate_options(CLI::App& app, RunConfig& c) {
  const std::string g = "Simulate";
  app.add_option("--scenario", c.scenario, "Scenario id (1-4)")->group(g);
  app.add_option("--reps", c.reps, "Number of replicates")->group(g);
  app.add_option("--alphas", c.alphas, "FDR levels (default: --alpha)")->delimiter(',')->group(g);
  app.add_option("--method", c.methods, "proposed and/or bh")->delimiter(',')->group(g);
  app.add_option("--n-null", c.n_null, "Null hypotheses per replicate")->group(g);
  app.add_option("--n-alt", c.n_alt, "Alternatives per replicate")->group(g);
  app.add_option("--emit-data", c.emit_data,
                 "Also write replicate 0 as a labelled CSV with this file name")->group(g);
  app.add_flag("--variance-as-sd", c.variance_as_sd,
               "Read the second parameter of the scenario laws as a standard deviation")->group(g);
}

void add_train_options(CLI::App& sub, RunConfig& c) {
  const std::string g = "Training";
  sub.add_option("--lambda", c.lambda_sharp, "Sigmoid sharpness of the relaxed counts")->group(g);
  sub.add_option("--lambda2-init", c.lambda2_init, "Initial Lagrange multiplier")->group(g);
  sub.add_option("--rho", c.rho, "Quadratic penalty weight")->group(g);
  sub.add_option("--eta", c.eta, "Multiplier step size")->group(g);
  sub.add_option("--epochs", c.epochs, "Augmented-Lagrangian epochs")->group(g);
  sub.add_option("--pretrain-epochs", c.pretrain_epochs, "Epochs fitting the initial thresholds")->group(g);
  sub.add_option("--lr", c.learning_rate, "Adam learning rate")->group(g);
  sub.add_option("--enforce-fdp", c.enforce_fdp,
                 "Shrink the trained threshold until the estimated FDP is within alpha")->group(g);
}

void write_error(std::ostream& err, const std::string& out_dir, const std::string& kind,
                 const std::string& message, int code) {
  const json j = {{"error", {{"kind", kind}, {"message", message}, {"exit_code", code}}}};
  err << j.dump() << '\n';
  if (out_dir.empty()) return;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) return;
  std::ofstream f(fs::path(out_dir) / "error.json", std::ios::binary);
  if (f) f << j.dump(2) << '\n';
}

// Config keys may use snake_case (z_crit) or the flag spelling (z-crit).
class SnakeCaseConfig : public CLI::ConfigBase {
 public:
  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    auto items = CLI::ConfigBase::from_config(input);
    for (auto& item : items) std::replace(item.name.begin(), item.name.end(), '_', '-');
    return items;
  }
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig c;
  CLI::App app{"Covariate-adaptive FDR control from raw (covariate, response) data", "mirrorfdr"};
  app.option_defaults()->always_capture_default();
  app.fallthrough();
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1, 1);
  app.set_config("--config", "", "TOML or INI file; command-line flags take precedence");
  app.config_formatter(std::make_shared<SnakeCaseConfig>());
  app.set_version_flag("--version", kVersion);
  app.add_option("--out,-o", c.out, "Output directory");
  app.add_option("--seed", c.seed, "Master seed for every random draw");
  app.add_option("--threads", c.threads, "Worker cap (0 = all cores); results do not depend on it");
  app.add_option("--alpha", c.alpha, "Target FDR level");
  app.add_option("--delta", c.delta, "Neighborhood radius on covariates scaled to [0,1]");
  app.add_option("--transform", c.transform, "identity, log or log_shift:<c>");

  add_input_options(app, c);
  add_trim_options(app, c);
  add_train_options(app, c);
  app.add_flag("--p-values", c.p_values, "estimate: append a p_value column")->group("Estimate");
  add_simulate_options(app, c);
  app.add_option("--p-column", c.p_column, "bh: column holding the p-values")->group("BH");

  auto* estimate = app.add_subcommand("estimate", "Estimate null centers (and mirror p-values)");
  auto* test = app.add_subcommand("test", "Full pipeline: centers, p-values, threshold, rejections");
  auto* simulate = app.add_subcommand("simulate", "Replicated simulation of a built-in scenario");
  app.add_subcommand("bh", "Benjamini-Hochberg on a p-value column");

  std::vector<std::string> rest(args.empty() ? args.begin() : args.begin() + 1, args.end());
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    write_error(err, "", "validation", e.what(), kExitValidation);
    return kExitValidation;
  }
  if (auto* opt = app.get_config_ptr(); opt && opt->count() > 0) c.config_file = opt->as<std::string>();

  try {
    if (estimate->parsed()) return cmd_estimate(c, out, err);
    if (test->parsed()) return cmd_test(c, out, err);
    if (simulate->parsed()) return cmd_simulate(c, out, err);
    return cmd_bh(c, out, err);
  } catch (const ValidationError& e) {
    write_error(err, c.out, "validation", e.what(), kExitValidation);
    return kExitValidation;
  } catch (const NumericalError& e) {
    write_error(err, c.out, "numerical", e.what(), kExitNumerical);
    return kExitNumerical;
  } catch (const std::exception& e) {
    write_error(err, c.out, "internal", e.what(), kExitNumerical);
    return kExitNumerical;
  }
}

}  // namespace mirrorfdr
