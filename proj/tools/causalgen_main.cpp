// causalgen: command-line front end for grammar sampling/enumeration,
// condition prediction, synthetic-participant simulation, model fitting and
// consistency scoring. Every command is deterministic under (inputs, seed)
// and independent of --jobs.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "causalgen/experiments.hpp"
#include "causalgen/fit.hpp"
#include "causalgen/models.hpp"

namespace fs = std::filesystem;
using namespace causalgen;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitInference = 3;
constexpr int kExitBudget = 4;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct CommonOpts {
  std::string out;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  bool force = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool needs_out) {
  cmd->add_option("--out", opts.out,
                  "output directory (default: $CAUSALGEN_OUT/<command> or "
                  "./out/<command>)");
  cmd->add_option("--seed", opts.seed, "random seed")->capture_default_str();
  cmd->add_option("--jobs", opts.jobs, "worker threads")->capture_default_str();
  cmd->add_flag("--force", opts.force, "overwrite an existing result directory");
  (void)needs_out;
}

fs::path resolve_out(const CommonOpts& opts, const std::string& command) {
  if (!opts.out.empty()) return fs::path(opts.out);
  if (const char* root = std::getenv("CAUSALGEN_OUT"))
    return fs::path(root) / command;
  return fs::path("out") / command;
}

// The manifest is written before any result file; a directory holds exactly
// one manifest.
fs::path prepare_out_dir(const CommonOpts& opts, const std::string& command,
                         const nlohmann::json& inputs) {
  fs::path dir = resolve_out(opts, command);
  fs::create_directories(dir);
  fs::path manifest = dir / "manifest.json";
  if (fs::exists(manifest) && !opts.force)
    throw ValidationError("output directory '" + dir.string() +
                          "' already holds a manifest (use --force)");
  auto now = std::chrono::system_clock::now();
  auto t = std::chrono::system_clock::to_time_t(now);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  nlohmann::json doc{{"command", command},
                     {"version", CAUSALGEN_VERSION},
                     {"seed", opts.seed},
                     {"jobs", opts.jobs},
                     {"out", dir.string()},
                     {"inputs", inputs},
                     {"started", stamp}};
  std::ofstream os(manifest);
  os << doc.dump(2) << "\n";
  return dir;
}

SpaceConfig load_space_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open space config '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("space config '" + path + "': " + e.what());
  }
  return load_space_config(doc);
}

std::map<std::string, Condition> load_conditions_dir(const std::string& dir) {
  std::map<std::string, Condition> out;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    Condition cond = load_condition_file(path.string());
    std::string id = cond.id;
    if (!out.emplace(id, std::move(cond)).second)
      throw ValidationError("duplicate condition id '" + id + "' in " + dir);
  }
  if (out.empty())
    throw ValidationError("no condition files (*.json) found in '" + dir + "'");
  return out;
}

// --params alpha=0.38,beta=1,gamma=0.5,t=10,chains=5,sweeps=6000,...
void apply_params(const std::string& spec, ModelParams& params) {
  if (spec.empty()) return;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto eq = item.find('=');
    if (eq == std::string::npos)
      throw ValidationError("--params entry '" + item + "' is not key=value");
    std::string key = item.substr(0, eq);
    double value;
    try {
      value = std::stod(item.substr(eq + 1));
    } catch (...) {
      throw ValidationError("--params entry '" + item + "': bad number");
    }
    if (key == "alpha")
      params.hyper.alpha = value;
    else if (key == "beta")
      params.hyper.beta = value;
    else if (key == "gamma")
      params.hyper.gamma = value;
    else if (key == "t")
      params.t = value;
    else if (key == "chains")
      params.gibbs.chains = static_cast<int>(value);
    else if (key == "sweeps")
      params.gibbs.sweeps = static_cast<int>(value);
    else if (key == "burnin")
      params.gibbs.burn_in = static_cast<int>(value);
    else if (key == "thin")
      params.gibbs.thin = static_cast<int>(value);
    else
      throw ValidationError("--params: unknown key '" + key + "'");
  }
}

void write_function_listing(std::ostream& os,
                            const std::vector<std::pair<CausalFunction, double>>& fns,
                            const FeatureSpace& space) {
  for (const auto& [fn, prior] : fns)
    os << function_to_text(fn, space) << "\t" << format_double(prior) << "\n";
}

// ---------------------------------------------------------------------------
// sample / enumerate
// ---------------------------------------------------------------------------

int cmd_sample(const std::string& space_path, int n, const CommonOpts& opts) {
  SpaceConfig sc = load_space_file(space_path);
  RngStream rng = RngStream::derive(opts.seed, {0x5A3Eu});
  std::vector<std::pair<CausalFunction, double>> listing;
  listing.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    CausalFunction f = sample_function(sc.space, sc.grammar, rng);
    double prior = prior_probability(f, sc.space, sc.grammar);
    listing.push_back({std::move(f), prior});
  }
  if (!opts.out.empty() || std::getenv("CAUSALGEN_OUT")) {
    fs::path dir = prepare_out_dir(opts, "sample",
                                   {{"space", fs::absolute(space_path).string()},
                                    {"n", n}});
    std::ofstream os(dir / "functions.txt");
    write_function_listing(os, listing, sc.space);
  } else {
    write_function_listing(std::cout, listing, sc.space);
  }
  return 0;
}

int cmd_enumerate(const std::string& space_path, std::size_t cap,
                  const CommonOpts& opts) {
  SpaceConfig sc = load_space_file(space_path);
  if (cap > 0) sc.grammar.max_conjuncts = cap;
  auto listing = enumerate_functions(sc.space, sc.grammar);
  if (!opts.out.empty() || std::getenv("CAUSALGEN_OUT")) {
    fs::path dir = prepare_out_dir(opts, "enumerate",
                                   {{"space", fs::absolute(space_path).string()},
                                    {"cap", cap}});
    std::ofstream os(dir / "functions.txt");
    write_function_listing(os, listing, sc.space);
  } else {
    write_function_listing(std::cout, listing, sc.space);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

int cmd_predict(const std::string& condition_path, const std::string& model_name_,
                const std::string& params_spec, const std::string& regime_name_,
                int runs, bool dump_traces, bool dump_samples,
                const CommonOpts& opts) {
  Condition cond = load_condition_file(condition_path);
  ModelKind model = parse_model(model_name_);
  Regime regime = parse_regime(regime_name_);
  ModelParams params;
  params.n_runs = runs;
  apply_params(params_spec, params);

  fs::path dir = prepare_out_dir(
      opts, "predict",
      {{"condition", fs::absolute(condition_path).string()},
       {"model", model_name_},
       {"regime", regime_name_},
       {"params", params_spec},
       {"runs", runs}});

  RngStream seq_rng = RngStream::derive(opts.seed, {0x5EC2u});
  std::vector<std::size_t> order = sequence_tasks(cond, regime, seq_rng);

  std::vector<Predictive> preds;
  std::vector<RunTrace> traces;
  auto hypotheses = std::make_shared<const HypothesisSet>(cond.space, cond.grammar);
  if (dump_samples && model == ModelKind::locala) {
    ModelParams sp = params;
    sp.gibbs.seed = RngStream::derive(opts.seed, {0xA26u}).next_u64();
    auto samples = gibbs_sample(cond.learning, sp.hyper, sp.gibbs, *hypotheses,
                                opts.jobs);
    nlohmann::json dump = nlohmann::json::array();
    for (const auto& s : samples)
      dump.push_back(partition_to_json(s.partition, cond.space));
    std::ofstream os(dir / "samples.json");
    os << dump.dump() << "\n";
  }
  if (model == ModelKind::localapro) {
    std::vector<Task> tasks;
    for (std::size_t idx : order) tasks.push_back(cond.tasks[idx]);
    auto avg = averaged_predictions(cond.learning, tasks, params.hyper,
                                    hypotheses, params.n_runs,
                                    RngStream::derive(opts.seed, {0xA26u}).next_u64(),
                                    opts.jobs);
    preds.resize(tasks.size());
    for (std::size_t p = 0; p < tasks.size(); ++p) {
      preds[p].agent = tasks[p].agent;
      preds[p].recipient = tasks[p].recipient;
      preds[p].candidates = tasks[p].candidates;
      preds[p].probabilities = avg.per_trial[p];
    }
    traces = std::move(avg.traces);
  } else {
    auto by_task = model_task_predictives(
        model, params, cond, *hypotheses,
        RngStream::derive(opts.seed, {0xA26u}).next_u64(), opts.jobs);
    for (std::size_t idx : order) preds.push_back(by_task[idx]);
  }

  {
    std::ofstream os(dir / "predictions.csv");
    os << "position,task";
    for (const auto& f : cond.space.features()) os << ",candidate_" << f.name;
    os << ",probability\n";
    for (std::size_t p = 0; p < order.size(); ++p) {
      for (std::size_t c = 0; c < preds[p].candidates.size(); ++c) {
        os << (p + 1) << "," << (order[p] + 1);
        for (std::size_t f = 0; f < cond.space.feature_count(); ++f)
          os << ","
             << cond.space.feature(f)
                    .values[static_cast<std::size_t>(preds[p].candidates[c][f])];
        os << "," << format_double(preds[p].probabilities[c]) << "\n";
      }
    }
  }
  {
    nlohmann::json trials = nlohmann::json::array();
    for (std::size_t p = 0; p < order.size(); ++p) {
      nlohmann::json outcomes = nlohmann::json::array();
      for (std::size_t c = 0; c < preds[p].candidates.size(); ++c)
        outcomes.push_back(
            {{"candidate", object_to_json(preds[p].candidates[c], cond.space)},
             {"probability", preds[p].probabilities[c]}});
      trials.push_back({{"position", p + 1},
                        {"task", order[p] + 1},
                        {"outcomes", outcomes}});
    }
    std::ofstream os(dir / "predictions.json");
    os << nlohmann::json{{"condition", cond.id},
                         {"model", model_name_},
                         {"regime", regime_name_},
                         {"trials", trials}}
              .dump(2)
       << "\n";
  }
  if (dump_traces && !traces.empty()) {
    std::ofstream os(dir / "traces.csv");
    os << "run,trial,category,new_category";
    for (const auto& f : cond.space.features()) os << ",pred_" << f.name;
    os << "\n";
    for (std::size_t r = 0; r < traces.size(); ++r)
      for (std::size_t t = 0; t < traces[r].entries.size(); ++t) {
        const auto& e = traces[r].entries[t];
        os << (r + 1) << "," << (t + 1) << "," << e.category_id << ","
           << (e.new_category ? 1 : 0);
        for (std::size_t f = 0; f < cond.space.feature_count(); ++f)
          os << ","
             << cond.space.feature(f)
                    .values[static_cast<std::size_t>(e.prediction[f])];
        os << "\n";
      }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

int cmd_simulate(const std::string& condition_path, const std::string& model_name_,
                 const std::string& params_spec, const std::string& regime_name_,
                 int n, int runs, const CommonOpts& opts) {
  Condition cond = load_condition_file(condition_path);
  ModelKind model = parse_model(model_name_);
  Regime regime = parse_regime(regime_name_);
  ModelParams params;
  params.n_runs = runs;
  apply_params(params_spec, params);

  fs::path dir = prepare_out_dir(
      opts, "simulate",
      {{"condition", fs::absolute(condition_path).string()},
       {"model", model_name_},
       {"regime", regime_name_},
       {"params", params_spec},
       {"n", n}});
  auto records = simulate_participants(model, params, cond, regime, n, opts.seed,
                                       opts.jobs);
  std::ofstream os(dir / "records.csv");
  write_records_csv(os, records, cond.space);
  return 0;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

int cmd_fit(const std::string& data_path, const std::string& conditions_dir,
            const std::string& model_name_, const std::string& grid_path,
            std::size_t max_cells, int runs, const std::string& params_spec,
            const CommonOpts& opts) {
  auto conditions = load_conditions_dir(conditions_dir);
  const FeatureSpace& space = conditions.begin()->second.space;
  for (const auto& [id, cond] : conditions)
    if (!(cond.space == space))
      throw ValidationError("conditions in '" + conditions_dir +
                            "' use different feature spaces");
  std::ifstream in(data_path);
  if (!in) throw ValidationError("cannot open data file '" + data_path + "'");
  auto records = read_records_csv(in, space);
  if (records.empty())
    throw ValidationError("data file '" + data_path + "' holds no records");

  ModelKind model = parse_model(model_name_);
  ParamGrid grid;
  if (!grid_path.empty()) {
    std::ifstream gin(grid_path);
    if (!gin) throw ValidationError("cannot open grid config '" + grid_path + "'");
    nlohmann::json doc;
    try {
      gin >> doc;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("grid config '" + grid_path + "': " + e.what());
    }
    grid = ParamGrid::from_json(doc);
  }

  FitOptions fopts;
  fopts.seed = opts.seed;
  fopts.jobs = opts.jobs;
  fopts.max_cells = max_cells == 0 ? std::numeric_limits<std::size_t>::max()
                                   : max_cells;
  fopts.n_runs = runs;
  {
    ModelParams defaults;
    apply_params(params_spec, defaults);
    fopts.gibbs = defaults.gibbs;
  }

  fs::path dir = prepare_out_dir(
      opts, "fit",
      {{"data", fs::absolute(data_path).string()},
       {"conditions", fs::absolute(conditions_dir).string()},
       {"model", model_name_},
       {"grid", grid_path.empty() ? "" : fs::absolute(grid_path).string()}});

  FitResult result = grid_search(model, grid, conditions, records, fopts);

  {
    std::ofstream os(dir / "cells.csv");
    os << "alpha,beta,gamma,t,log_likelihood\n";
    for (const auto& c : result.cells)
      os << format_double(c.alpha) << "," << format_double(c.beta) << ","
         << format_double(c.gamma) << "," << format_double(c.t) << ","
         << format_double(c.log_likelihood) << "\n";
  }
  {
    // reference row: the parameter-free random baseline on the same records
    PredictionTable uniform;
    for (const auto& [id, cond] : conditions) {
      std::vector<std::vector<double>> dists;
      for (const auto& task : cond.tasks)
        dists.push_back(std::vector<double>(
            task.candidates.size(),
            1.0 / static_cast<double>(task.candidates.size())));
      uniform.by_condition[id] = std::move(dists);
    }
    double baseline_ll = log_likelihood(uniform, records, conditions);
    nlohmann::json summary{
        {"model", model_name_},
        {"best",
         {{"alpha", result.best.alpha},
          {"beta", result.best.beta},
          {"gamma", result.best.gamma},
          {"t", result.best.t}}},
        {"log_likelihood", result.best.log_likelihood},
        {"k", result.k},
        {"n", result.n_choices},
        {"bic", result.bic_value},
        {"partial", result.partial},
        {"cells", result.cells.size()},
        {"bic_table",
         {{"baseline",
           {{"log_likelihood", baseline_ll},
            {"bic", bic(baseline_ll, 0, result.n_choices)}}},
          {model_name_,
           {{"log_likelihood", result.best.log_likelihood},
            {"bic", result.bic_value}}}}}};
    std::ofstream os(dir / "summary.json");
    os << summary.dump(2) << "\n";
  }
  if (result.partial) {
    std::cerr << "fit: cell budget exhausted; table is partial\n";
    return kExitBudget;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// consistency
// ---------------------------------------------------------------------------

int cmd_consistency(const std::string& data_path,
                    const std::string& conditions_dir, const CommonOpts& opts) {
  auto conditions = load_conditions_dir(conditions_dir);
  const FeatureSpace& space = conditions.begin()->second.space;
  std::ifstream in(data_path);
  if (!in) throw ValidationError("cannot open data file '" + data_path + "'");
  auto records = read_records_csv(in, space);

  fs::path dir = prepare_out_dir(
      opts, "consistency",
      {{"data", fs::absolute(data_path).string()},
       {"conditions", fs::absolute(conditions_dir).string()}});

  auto cells = consistency_table(records, conditions);
  {
    std::ofstream os(dir / "per_trial.csv");
    os << "condition,regime,task,participants,computed,alpha\n";
    for (const auto& c : cells)
      os << c.condition << "," << c.regime << "," << (c.task_index + 1) << ","
         << c.participants << "," << (c.computed ? 1 : 0) << ","
         << (c.computed ? format_double(c.alpha) : "") << "\n";
  }
  auto summaries = consistency_summaries(records, conditions);
  {
    std::ofstream os(dir / "summary.csv");
    os << "condition,regime,trials,participants,mean_alpha,sd_alpha,"
          "pooled_alpha\n";
    for (const auto& s : summaries)
      os << s.condition << "," << s.regime << "," << s.trials << ","
         << s.participants << "," << format_double(s.mean_alpha) << ","
         << format_double(s.sd_alpha) << ","
         << (s.pooled_computed ? format_double(s.pooled_alpha) : "") << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"causal generalization models: grammar, categories, fits"};
  app.set_version_flag("--version", std::string("causalgen ") + CAUSALGEN_VERSION);
  app.require_subcommand(1);

  // sample
  auto* sample = app.add_subcommand("sample", "draw causal functions from the grammar");
  std::string sample_space;
  int sample_n = 10;
  CommonOpts sample_opts;
  sample->add_option("--space", sample_space, "space config JSON")->required();
  sample->add_option("--n", sample_n, "number of draws")->capture_default_str();
  add_common(sample, sample_opts, false);

  // enumerate
  auto* enumerate = app.add_subcommand("enumerate",
                                       "list every derivable function with its prior");
  std::string enum_space;
  std::size_t enum_cap = 0;
  CommonOpts enum_opts;
  enumerate->add_option("--space", enum_space, "space config JSON")->required();
  enumerate->add_option("--cap", enum_cap, "max conjuncts (default: feature count)");
  add_common(enumerate, enum_opts, false);

  // predict
  auto* predict = app.add_subcommand("predict", "per-trial predictive distributions");
  std::string pred_condition, pred_model, pred_params, pred_regime = "near";
  int pred_runs = 1000;
  bool pred_traces = false;
  bool pred_samples = false;
  CommonOpts pred_opts;
  predict->add_option("--condition", pred_condition, "condition JSON")->required();
  predict->add_option("--model", pred_model,
                      "baseline|uncala|locala|localapro")->required();
  predict->add_option("--params", pred_params, "k=v,... model parameters");
  predict->add_option("--regime", pred_regime, "near|far|random")
      ->capture_default_str();
  predict->add_option("--runs", pred_runs, "process-model runs")
      ->capture_default_str();
  predict->add_flag("--traces", pred_traces, "also write per-run traces");
  predict->add_flag("--samples", pred_samples,
                    "also dump posterior partition samples (locala)");
  add_common(predict, pred_opts, true);

  // simulate
  auto* simulate = app.add_subcommand("simulate", "synthetic participant records");
  std::string sim_condition, sim_model, sim_params, sim_regime = "random";
  int sim_n = 10, sim_runs = 1000;
  CommonOpts sim_opts;
  simulate->add_option("--condition", sim_condition, "condition JSON")->required();
  simulate->add_option("--model", sim_model,
                       "baseline|uncala|locala|localapro")->required();
  simulate->add_option("--params", sim_params, "k=v,... model parameters");
  simulate->add_option("--regime", sim_regime, "near|far|random")
      ->capture_default_str();
  simulate->add_option("--n", sim_n, "participants")->capture_default_str();
  simulate->add_option("--runs", sim_runs, "process-model runs per participant")
      ->capture_default_str();
  add_common(simulate, sim_opts, true);

  // fit
  auto* fit = app.add_subcommand("fit", "grid-search maximum likelihood + BIC");
  std::string fit_data, fit_conditions, fit_model, fit_grid, fit_params;
  std::size_t fit_max_cells = 0;
  int fit_runs = 1000;
  CommonOpts fit_opts;
  fit->add_option("--data", fit_data, "behavioral records CSV")->required();
  fit->add_option("--conditions", fit_conditions, "directory of condition JSONs")
      ->required();
  fit->add_option("--model", fit_model, "baseline|uncala|locala|localapro")
      ->required();
  fit->add_option("--grid", fit_grid, "param grid JSON");
  fit->add_option("--max-cells", fit_max_cells, "cell budget (0 = unlimited)");
  fit->add_option("--runs", fit_runs, "process-model runs per cell")
      ->capture_default_str();
  fit->add_option("--params", fit_params,
                  "k=v,... fixed settings (gibbs chains/sweeps/burnin/thin)");
  add_common(fit, fit_opts, true);

  // consistency
  auto* consistency = app.add_subcommand("consistency",
                                         "inter-participant Cronbach alphas");
  std::string cons_data, cons_conditions;
  CommonOpts cons_opts;
  consistency->add_option("--data", cons_data, "behavioral records CSV")->required();
  consistency->add_option("--conditions", cons_conditions,
                          "directory of condition JSONs")->required();
  add_common(consistency, cons_opts, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (sample->parsed()) return cmd_sample(sample_space, sample_n, sample_opts);
    if (enumerate->parsed()) return cmd_enumerate(enum_space, enum_cap, enum_opts);
    if (predict->parsed())
      return cmd_predict(pred_condition, pred_model, pred_params, pred_regime,
                         pred_runs, pred_traces, pred_samples, pred_opts);
    if (simulate->parsed())
      return cmd_simulate(sim_condition, sim_model, sim_params, sim_regime,
                          sim_n, sim_runs, sim_opts);
    if (fit->parsed())
      return cmd_fit(fit_data, fit_conditions, fit_model, fit_grid,
                     fit_max_cells, fit_runs, fit_params, fit_opts);
    if (consistency->parsed())
      return cmd_consistency(cons_data, cons_conditions, cons_opts);
  } catch (const NoConsistentFunctionError& e) {
    std::cerr << "inference failure: " << e.what() << "\n";
    if (!e.offending_members.empty()) {
      std::cerr << "offending members:";
      for (int m : e.offending_members) std::cerr << " " << m;
      std::cerr << "\n";
    }
    return kExitInference;
  } catch (const BudgetExhaustedError& e) {
    std::cerr << "budget exhausted: " << e.what() << "\n";
    return kExitBudget;
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
