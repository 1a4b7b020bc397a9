// cptar: fit, forecast, simulate and select low-rank tensor autoregressions.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cptar/als.hpp"
#include "cptar/error.hpp"
#include "cptar/io.hpp"
#include "cptar/lrs.hpp"
#include "cptar/parallel.hpp"
#include "cptar/selection.hpp"
#include "cptar/simulation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using namespace cptar;

// Flag value when given on the command line, else the config file entry,
// else the default.
class Settings {
 public:
  Settings(const Config& cfg, std::set<std::string> allowed) : cfg_(cfg) {
    for (const auto& [key, _] : cfg_.values()) {
      if (!allowed.contains(key)) throw Error(ErrorCode::config_error, "unknown config key '" + key + "'", "config");
    }
  }

  template <typename T>
  std::optional<T> find(const CLI::Option* opt, const T& flag, const std::string& key) const {
    if (opt && opt->count() > 0) return flag;
    if constexpr (std::is_same_v<T, double>) {
      return cfg_.get_double(key);
    } else if constexpr (std::is_same_v<T, std::size_t>) {
      return cfg_.get_size(key);
    } else if constexpr (std::is_same_v<T, bool>) {
      return cfg_.get_bool(key);
    } else if constexpr (std::is_same_v<T, std::string>) {
      return cfg_.get_string(key);
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
      return cfg_.get_list(key);
    } else {
      static_assert(std::is_same_v<T, Shape>);
      return cfg_.get_shape(key);
    }
  }

  template <typename T>
  T get(const CLI::Option* opt, const T& flag, const std::string& key, T fallback) const {
    auto v = find(opt, flag, key);
    return v ? *v : fallback;
  }

  template <typename T>
  T require(const CLI::Option* opt, const T& flag, const std::string& key) const {
    auto v = find(opt, flag, key);
    if (!v) throw Error(ErrorCode::config_error, "missing required setting '" + key + "'", "--" + dashed(key));
    return *v;
  }

 private:
  static std::string dashed(std::string s) {
    std::replace(s.begin(), s.end(), '_', '-');
    return s;
  }
  const Config& cfg_;
};

Config load_config(const std::string& path) { return path.empty() ? Config{} : Config::load(path); }

fs::path sibling(const fs::path& base, const std::string& suffix) { return fs::path(base.string() + suffix); }

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// Shared estimator flags.
struct EstimatorFlags {
  std::size_t order = 1, rank_y = 1, rank_x = 1, restarts = 5, max_iters = 200, threads = 1;
  std::size_t outer_iters = 50;
  double lambda = 0.01, alpha_l = 0.0, tol = 1e-6, outer_tol = 1e-5, lasso_tol = 1e-10;
  std::size_t seed = 0;
  std::string variant = "lowrank";
  CLI::Option *o_order{}, *o_ry{}, *o_rx{}, *o_restarts{}, *o_iters{}, *o_threads{}, *o_outer{}, *o_lambda{},
      *o_alpha{}, *o_tol{}, *o_outer_tol{}, *o_lasso_tol{}, *o_seed{}, *o_variant{};

  void add(CLI::App* app, bool with_structure = true) {
    if (with_structure) {
      o_order = app->add_option("-P,--order", order, "Autoregressive order P");
      o_ry = app->add_option("--rank-y", rank_y, "Response rank R_y");
      o_rx = app->add_option("--rank-x", rank_x, "Covariate rank R_x");
      o_lambda = app->add_option("--lambda", lambda, "Sparse penalty");
    }
    o_variant = app->add_option("--variant", variant, "lowrank | lrs | stacked")
                    ->check(CLI::IsMember({"lowrank", "lrs", "stacked"}));
    o_alpha = app->add_option("--alpha-l", alpha_l, "Radius of non-identifiability (default sqrt(P) Q)");
    o_seed = app->add_option("--seed", seed, "Random seed");
    o_threads = app->add_option("--threads", threads, "Worker threads (default: CPTAR_THREADS or 1)");
    o_restarts = app->add_option("--restarts", restarts, "ALS random restarts");
    o_tol = app->add_option("--tol", tol, "ALS relative tolerance");
    o_iters = app->add_option("--max-iters", max_iters, "ALS iteration cap");
    o_outer = app->add_option("--outer-iters", outer_iters, "Low-rank plus sparse iteration cap");
    o_outer_tol = app->add_option("--outer-tol", outer_tol, "Low-rank plus sparse relative tolerance");
    o_lasso_tol = app->add_option("--lasso-tol", lasso_tol, "Coordinate descent tolerance");
  }

  static std::set<std::string> keys() {
    return {"order", "rank_y", "rank_x", "lambda", "alpha_l", "seed", "threads", "restarts", "tol", "max_iters",
            "outer_iters", "outer_tol", "lasso_tol", "variant"};
  }

  std::string resolved_variant(const Settings& s) const { return s.get(o_variant, variant, "variant", variant); }

  AlsConfig als(const Settings& s) const {
    AlsConfig c;
    c.max_iters = s.get(o_iters, max_iters, "max_iters", c.max_iters);
    c.rel_tol = s.get(o_tol, tol, "tol", c.rel_tol);
    c.num_restarts = s.get(o_restarts, restarts, "restarts", c.num_restarts);
    c.rng_seed = s.require(o_seed, seed, "seed");
    c.threads = s.get(o_threads, threads, "threads", default_thread_count());
    c.validate();
    return c;
  }

  LrsConfig lrs(const Settings& s) const {
    LrsConfig c;
    c.lambda = s.get(o_lambda, lambda, "lambda", c.lambda);
    if (auto a = s.find(o_alpha, alpha_l, "alpha_l")) c.alpha_l = *a;
    c.outer_iters = s.get(o_outer, outer_iters, "outer_iters", c.outer_iters);
    c.outer_tol = s.get(o_outer_tol, outer_tol, "outer_tol", c.outer_tol);
    c.lasso.tol = s.get(o_lasso_tol, lasso_tol, "lasso_tol", c.lasso.tol);
    c.als = als(s);
    c.validate();
    return c;
  }
};

json report_json(const FitReport& r) {
  return {{"final_loss", r.final_loss},
          {"loss_trace", r.loss_trace},
          {"iterations", r.iterations},
          {"converged", r.converged},
          {"restart_index", r.restart_index},
          {"rank_deficient_solves", r.rank_deficient_solves},
          {"degenerate_restarts", r.degenerate_restarts}};
}

std::map<std::string, std::string> als_config_map(const AlsConfig& c) {
  return {{"max_iters", std::to_string(c.max_iters)},
          {"tol", json(c.rel_tol).dump()},
          {"restarts", std::to_string(c.num_restarts)},
          {"seed", std::to_string(c.rng_seed)}};
}

// ---------------------------------------------------------------- fit

int run_fit(const std::string& input, const std::string& output, std::string report_path, const std::string& config,
            const EstimatorFlags& f) {
  const Config cfg = load_config(config);
  const Settings s(cfg, EstimatorFlags::keys());
  const std::size_t p = s.get(f.o_order, f.order, "order", f.order);
  const std::size_t ry = s.get(f.o_ry, f.rank_y, "rank_y", f.rank_y);
  const std::size_t rx = s.get(f.o_rx, f.rank_x, "rank_x", f.rank_x);
  const std::string variant = f.resolved_variant(s);

  const TensorSeries series = read_series(input);
  ModelDocument doc;
  json report;
  report["variant"] = variant;
  if (variant == "lrs") {
    const LrsConfig c = f.lrs(s);
    auto res = lrs_fit(series, p, ry, rx, c);
    report["als"] = report_json(res.als_report);
    report["objective_trace"] = res.objective_trace;
    report["outer_iterations"] = res.outer_iterations;
    report["converged"] = res.converged;
    report["constraint_satisfied"] = res.constraint_satisfied;
    report["zeta"] = res.zeta;
    report["lambda"] = c.lambda;
    report["support_size"] = res.sparse.support_size();
    doc.lowrank = std::move(res.lowrank);
    doc.sparse = std::move(res.sparse);
    doc.metadata.final_loss = res.objective_trace.empty() ? 0.0 : res.objective_trace.back();
    doc.metadata.iterations = res.outer_iterations;
    doc.metadata.converged = res.converged;
    doc.metadata.seed = c.als.rng_seed;
    doc.metadata.config = als_config_map(c.als);
    doc.metadata.config["lambda"] = json(c.lambda).dump();
    doc.metadata.config["alpha_l"] = json(c.resolved_alpha(p, series.total_dim())).dump();
  } else {
    const AlsConfig c = f.als(s);
    const auto mv = variant == "stacked" ? ModelVariant::stacked_lag_mode : ModelVariant::ar_shared_lags;
    auto res = als_fit(series, p, ry, rx, c, mv);
    report["als"] = report_json(res.report);
    report["converged"] = res.report.converged;
    doc.lowrank = std::move(res.coef);
    doc.metadata.final_loss = res.report.final_loss;
    doc.metadata.iterations = res.report.iterations;
    doc.metadata.converged = res.report.converged;
    doc.metadata.seed = c.rng_seed;
    doc.metadata.config = als_config_map(c);
  }
  doc.metadata.config["variant"] = variant;

  write_model(doc, output);
  if (read_model(output).coef() != doc.coef()) {
    throw Error(ErrorCode::io_failure, "model file did not round-trip", output);
  }
  if (report_path.empty()) report_path = sibling(output, ".report.json").string();
  write_json(report_path, report);
  return 0;
}

// ---------------------------------------------------------------- forecast

int run_forecast(const std::string& model_path, const std::string& input, const std::string& output,
                 std::string metrics_path, std::optional<std::size_t> start_flag) {
  const ModelDocument model = read_model(model_path);
  const TensorSeries series = read_series(input);
  if (series.dims() != model.lowrank.response_dims()) {
    throw Error(ErrorCode::shape_mismatch, "series dims differ from the model", input);
  }
  const std::size_t p = model.lowrank.lag_order();
  const std::size_t start = start_flag.value_or(p);
  if (start < p || start >= series.length()) {
    throw Error(ErrorCode::invalid_argument, "--start must lie in [P, T)", "forecast");
  }
  const Matrix coef = model.coef();
  std::vector<DenseTensor> preds;
  for (std::size_t t = start; t < series.length(); ++t) {
    std::vector<DenseTensor> lagged;
    for (std::size_t k = 1; k <= p; ++k) lagged.push_back(series[t - k]);
    preds.push_back(predict_dense(coef, series.dims(), lagged));
  }
  const TensorSeries predicted(std::move(preds));
  const auto m = forecast_metrics(predicted, series.slice(start, series.length()));

  write_series(predicted, output);
  if (metrics_path.empty()) metrics_path = sibling(output, ".metrics.json").string();
  write_json(metrics_path, {{"msfe", m.msfe},
                            {"mafe", m.mafe},
                            {"steps", predicted.length()},
                            {"start", start},
                            {"normalization", "mean over forecast steps and tensor entries"}});
  return 0;
}

// ---------------------------------------------------------------- simulate

struct SimulateFlags {
  std::string dims, noise = "std_normal", design, values, estimator, truth, records;
  std::size_t length = 500, burn_in = 200, sparse = 0, replications = 50, seed = 0;
  double target_norm = 0.9, joint_norm = 0.6, lambda_rate = 0.0;
  CLI::Option *o_dims{}, *o_noise{}, *o_design{}, *o_values{}, *o_estimator{}, *o_length{}, *o_burn{},
      *o_sparse{}, *o_reps{}, *o_target{}, *o_joint{}, *o_rate{}, *o_seed{};
};

int run_simulate(const std::string& output, const std::string& config, const EstimatorFlags& f,
                 const SimulateFlags& sf) {
  const Config cfg = load_config(config);
  auto keys = EstimatorFlags::keys();
  keys.insert({"dims", "noise", "length", "burn_in", "sparse", "target_norm", "joint_norm", "design", "values",
               "replications", "estimator", "lambda_rate"});
  const Settings s(cfg, keys);

  DgpSpec spec;
  spec.dims = s.require(sf.o_dims, sf.dims.empty() ? Shape{} : *Config::parse("d=" + sf.dims).get_shape("d"), "dims");
  spec.lag_order = s.get(f.o_order, f.order, "order", f.order);
  spec.rank_y = s.get(f.o_ry, f.rank_y, "rank_y", f.rank_y);
  spec.rank_x = s.get(f.o_rx, f.rank_x, "rank_x", f.rank_x);
  spec.noise = parse_noise(s.get(sf.o_noise, sf.noise, "noise", sf.noise));
  spec.target_coef_norm = s.get(sf.o_target, sf.target_norm, "target_norm", sf.target_norm);
  spec.target_joint_norm = s.get(sf.o_joint, sf.joint_norm, "joint_norm", sf.joint_norm);
  spec.burn_in = s.get(sf.o_burn, sf.burn_in, "burn_in", sf.burn_in);
  if (auto sp = s.find(sf.o_sparse, sf.sparse, "sparse")) spec.sparse_support = *sp;
  if (auto a = s.find(f.o_alpha, f.alpha_l, "alpha_l")) spec.alpha_l = *a;
  spec.rng_seed = s.require(f.o_seed, f.seed, "seed");
  spec.validate();
  const std::size_t length = s.get(sf.o_length, sf.length, "length", sf.length);

  const auto design = s.find(sf.o_design, sf.design, "design");
  if (!design) {
    Rng rng = make_stream(spec.rng_seed);
    const SimulatedDgp dgp = simulate_dgp(spec, length, rng);
    write_series(dgp.series, output);
    if (read_series(output).as_columns() != dgp.series.as_columns()) {
      throw Error(ErrorCode::io_failure, "series file did not round-trip", output);
    }
    if (!sf.truth.empty()) {
      ModelDocument doc;
      doc.lowrank = dgp.lowrank;
      doc.sparse = dgp.sparse;
      doc.metadata.seed = spec.rng_seed;
      doc.metadata.config = {{"spectral_radius", json(dgp.spectral_radius).dump()},
                             {"noise", std::string(noise_name(spec.noise))}};
      write_model(doc, sf.truth);
    }
    return 0;
  }

  ExperimentPlan plan;
  plan.design = parse_design(*design);
  plan.base = spec;
  const auto values = s.require(sf.o_values, sf.values.empty() ? std::vector<double>{} : parse_number_list(sf.values),
                                "values");
  plan.cells = design_cells(plan.design, spec, length, values);
  plan.replications = s.get(sf.o_reps, sf.replications, "replications", sf.replications);
  const std::string est = s.get(sf.o_estimator, sf.estimator, "estimator",
                                std::string(spec.has_sparse() ? "lrs" : "lowrank"));
  if (est != "lowrank" && est != "lrs") throw Error(ErrorCode::config_error, "estimator must be lowrank or lrs");
  plan.estimator = est == "lrs" ? EstimatorKind::lrs : EstimatorKind::lowrank;
  plan.als = f.als(s);
  plan.threads = plan.als.threads;
  plan.als.threads = 1;
  if (plan.estimator == EstimatorKind::lrs) {
    plan.lrs = f.lrs(s);
    plan.lrs.als.threads = 1;
    if (auto r = s.find(sf.o_rate, sf.lambda_rate, "lambda_rate")) plan.lambda_rate = *r;
  }
  const RateDiagnostics diag = run_rate_experiment(plan);
  write_experiment_summary(diag, output);
  write_experiment_records(diag, sf.records.empty() ? sibling(output, ".records.csv") : fs::path(sf.records));
  return 0;
}

// ---------------------------------------------------------------- select

struct SelectFlags {
  std::size_t train = 0, val = 0, pmax = 12, rymax = 12, rxmax = 12;
  std::string lambdas, chosen;
  bool joint = false;
  CLI::Option *o_train{}, *o_val{}, *o_pmax{}, *o_rymax{}, *o_rxmax{}, *o_lambdas{}, *o_joint{};
};

int run_select(const std::string& input, const std::string& output, const std::string& config,
               const EstimatorFlags& f, const SelectFlags& sf) {
  const Config cfg = load_config(config);
  auto keys = EstimatorFlags::keys();
  keys.insert({"train_len", "val_len", "grid_pmax", "grid_rymax", "grid_rxmax", "lambdas", "joint"});
  const Settings s(cfg, keys);

  const TensorSeries series = read_series(input);
  const std::size_t t_len = series.length();
  HoldoutPlan plan;
  plan.val_len = s.get(sf.o_val, sf.val, "val_len", std::max<std::size_t>(1, t_len / 5));
  plan.train_len = s.get(sf.o_train, sf.train, "train_len", t_len > plan.val_len ? t_len - plan.val_len : 0);
  plan.p_max = s.get(sf.o_pmax, sf.pmax, "grid_pmax", sf.pmax);
  plan.ry_max = s.get(sf.o_rymax, sf.rymax, "grid_rymax", sf.rymax);
  plan.rx_max = s.get(sf.o_rxmax, sf.rxmax, "grid_rxmax", sf.rxmax);
  const std::string variant = f.resolved_variant(s);
  if (variant == "stacked") throw Error(ErrorCode::config_error, "select supports lowrank and lrs", "--variant");
  plan.estimator = variant == "lrs" ? EstimatorKind::lrs : EstimatorKind::lowrank;
  plan.als = f.als(s);
  plan.threads = plan.als.threads;
  plan.als.threads = 1;
  if (plan.estimator == EstimatorKind::lrs) {
    plan.lrs = f.lrs(s);
    plan.lrs.als.threads = 1;
    if (auto l = s.find(sf.o_lambdas, sf.lambdas.empty() ? std::vector<double>{} : parse_number_list(sf.lambdas),
                        "lambdas")) {
      plan.lambdas = *l;
    }
    plan.reuse_lowrank_selection = !s.get(sf.o_joint, sf.joint, "joint", false);
  }
  const HoldoutResult res = holdout_select(series, plan);
  write_score_table(res, output);

  json chosen = {{"order", res.lag_order}, {"rank_y", res.rank_y}, {"rank_x", res.rank_x}, {"variant", variant}};
  if (res.lambda) chosen["lambda"] = *res.lambda;
  for (const auto& row : res.scores) {
    if (row.lag_order == res.lag_order && row.rank_y == res.rank_y && row.rank_x == res.rank_x &&
        row.lambda == res.lambda) {
      chosen["msfe"] = row.msfe;
      chosen["mafe"] = row.mafe;
    }
  }
  write_json(sf.chosen.empty() ? sibling(output, ".chosen.json") : fs::path(sf.chosen), chosen);
  std::cout << chosen.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------- convert

int run_convert(const std::string& input, const std::string& output, const std::string& dims_text) {
  const auto dims = Config::parse("d=" + dims_text).get_shape("d");
  write_series(read_series_csv(input, *dims), output);
  return 0;
}

void print_error(const std::string& code, const std::string& message, const std::string& context) {
  std::cerr << json{{"code", code}, {"message", message}, {"context", context}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank tensor autoregression toolkit"};
  app.require_subcommand(1);

  std::string input, output, config, report, metrics, model, dims, chosen;

  EstimatorFlags fit_flags;
  auto* fit = app.add_subcommand("fit", "Estimate a model from a series file");
  fit->add_option("-i,--input", input, "Series file")->required();
  fit->add_option("-o,--output", output, "Model JSON file")->required();
  fit->add_option("--report", report, "Fit report JSON (default: <output>.report.json)");
  fit->add_option("--config", config, "key = value settings file");
  fit_flags.add(fit);

  std::size_t start = 0;
  auto* fc = app.add_subcommand("forecast", "One-step forecasts from a fitted model");
  fc->add_option("-m,--model", model, "Model JSON file")->required();
  fc->add_option("-i,--input", input, "Series file")->required();
  fc->add_option("-o,--output", output, "Prediction series file")->required();
  fc->add_option("--metrics", metrics, "Metrics JSON (default: <output>.metrics.json)");
  auto* o_start = fc->add_option("--start", start, "First predicted index (default P)");

  EstimatorFlags sim_flags;
  SimulateFlags sf;
  auto* sim = app.add_subcommand("simulate", "Generate a series or run a Monte-Carlo experiment");
  sim->add_option("-o,--output", output, "Series file, or summary CSV with --design")->required();
  sim->add_option("--config", config, "key = value settings file");
  sim_flags.add(sim);
  sf.o_dims = sim->add_option("--dims", sf.dims, "Tensor dims, e.g. 4,4,4");
  sf.o_noise = sim->add_option("--noise", sf.noise, "uniform | std_normal | ar_correlated | none");
  sf.o_length = sim->add_option("-T,--length", sf.length, "Series length");
  sf.o_burn = sim->add_option("--burn-in", sf.burn_in, "Discarded initial steps");
  sf.o_sparse = sim->add_option("--sparse", sf.sparse, "Support size of the sparse part");
  sf.o_target = sim->add_option("--target-norm", sf.target_norm, "||A||_F of the low-rank DGP");
  sf.o_joint = sim->add_option("--joint-norm", sf.joint_norm, "||A_L + A_S||_F of the sparse DGP");
  sf.o_design = sim->add_option("--design", sf.design, "vary-t | vary-ranks | vary-dims | vary-alpha");
  sf.o_values = sim->add_option("--values", sf.values, "Design values, comma separated");
  sf.o_reps = sim->add_option("--replications", sf.replications, "Replications per cell");
  sf.o_estimator = sim->add_option("--estimator", sf.estimator, "lowrank | lrs");
  sf.o_rate = sim->add_option("--lambda-rate", sf.lambda_rate, "lambda = c sqrt(log(PQ^2)/(T-P))");
  sim->add_option("--truth", sf.truth, "Also write the true coefficient as a model file");
  sim->add_option("--records", sf.records, "Per-replication CSV (default: <output>.records.csv)");

  EstimatorFlags sel_flags;
  SelectFlags self;
  auto* sel = app.add_subcommand("select", "Hold-out selection of order, ranks and lambda");
  sel->add_option("-i,--input", input, "Series file")->required();
  sel->add_option("-o,--output", output, "Score table CSV")->required();
  sel->add_option("--chosen", self.chosen, "Chosen configuration JSON (default: <output>.chosen.json)");
  sel->add_option("--config", config, "key = value settings file");
  sel_flags.add(sel, false);
  sel_flags.o_lambda = nullptr;
  self.o_train = sel->add_option("--train", self.train, "Training length");
  self.o_val = sel->add_option("--val", self.val, "Validation length");
  self.o_pmax = sel->add_option("--grid-pmax", self.pmax, "Largest P");
  self.o_rymax = sel->add_option("--grid-rymax", self.rymax, "Largest R_y");
  self.o_rxmax = sel->add_option("--grid-rxmax", self.rxmax, "Largest R_x");
  self.o_lambdas = sel->add_option("--lambdas", self.lambdas, "Lambda grid, comma separated");
  self.o_joint = sel->add_flag("--joint", self.joint, "Search lambda jointly with order and ranks");

  auto* conv = app.add_subcommand("convert", "Convert a CSV series to the binary series format");
  conv->add_option("-i,--input", input, "CSV file, one observation per row")->required();
  conv->add_option("-o,--output", output, "Series file")->required();
  conv->add_option("--dims", dims, "Tensor dims, e.g. 4,4,4")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("invalid_argument", e.what(), "command line");
    return 2;
  }

  try {
    if (*fit) return run_fit(input, output, report, config, fit_flags);
    if (*fc) {
      return run_forecast(model, input, output, metrics,
                          o_start->count() ? std::optional<std::size_t>(start) : std::nullopt);
    }
    if (*sim) return run_simulate(output, config, sim_flags, sf);
    if (*sel) return run_select(input, output, config, sel_flags, self);
    if (*conv) return run_convert(input, output, dims);
  } catch (const Error& e) {
    print_error(std::string(error_code_name(e.code())), e.what(), e.context());
    return 1;
  } catch (const std::exception& e) {
    print_error("internal_error", e.what(), "");
    return 1;
  }
  return 1;
}
