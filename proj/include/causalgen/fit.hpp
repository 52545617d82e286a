#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "causalgen/models.hpp"

namespace causalgen {

// ---------------------------------------------------------------------------
// Choice likelihood and BIC
// ---------------------------------------------------------------------------

// Per-condition, per-task choice distributions (aligned with each task's
// candidate list).
struct PredictionTable {
  std::map<std::string, std::vector<std::vector<double>>> by_condition;
};

inline constexpr double kChoiceProbabilityFloor = 1e-10;

// Sum of log choice probabilities of the records under the table. Every
// record must resolve to a predicted trial; probabilities are floored at
// 1e-10 so a hard miss stays finite.
inline double log_likelihood(const PredictionTable& predictions,
                             const std::vector<BehavioralRecord>& records,
                             const std::map<std::string, Condition>& conditions) {
  double ll = 0.0;
  for (const auto& rec : records) {
    auto cit = conditions.find(rec.condition);
    if (cit == conditions.end())
      throw ValidationError("log_likelihood: unknown condition '" +
                            rec.condition + "' (participant " + rec.participant +
                            ")");
    const Condition& cond = cit->second;
    auto pit = predictions.by_condition.find(rec.condition);
    if (pit == predictions.by_condition.end())
      throw ValidationError("log_likelihood: no predictions for condition '" +
                            rec.condition + "'");
    auto task_idx = find_task(cond, rec.agent, rec.recipient);
    if (!task_idx)
      throw ValidationError("log_likelihood: record of participant " +
                            rec.participant + " trial " +
                            std::to_string(rec.trial) +
                            " matches no task in condition '" + rec.condition +
                            "'");
    if (*task_idx >= pit->second.size())
      throw ValidationError("log_likelihood: prediction table too short for "
                            "condition '" + rec.condition + "'");
    const Task& task = cond.tasks[*task_idx];
    const auto& dist = pit->second[*task_idx];
    std::optional<std::size_t> choice;
    for (std::size_t c = 0; c < task.candidates.size(); ++c)
      if (task.candidates[c] == rec.choice) choice = c;
    if (!choice)
      throw ValidationError("log_likelihood: choice of participant " +
                            rec.participant + " trial " +
                            std::to_string(rec.trial) +
                            " is outside the task's candidate set");
    ll += std::log(std::max(dist[*choice], kChoiceProbabilityFloor));
  }
  return ll;
}

inline double bic(double ll, int k, std::size_t n) {
  if (n < 1) throw ValidationError("bic: n must be >= 1");
  return -2.0 * ll + static_cast<double>(k) * std::log(static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------------

struct ParamGrid {
  std::vector<double> alpha{1.0};
  std::vector<double> beta{1.0};
  std::vector<double> gamma{0.5};
  std::vector<double> t{1.0};

  struct Refine {
    std::string parameter;  // alpha | beta | gamma | t
    double radius = 0.0;
    double step = 0.0;
  };
  std::optional<Refine> refine;

  void validate() const {
    if (alpha.empty() || beta.empty() || gamma.empty() || t.empty())
      throw ValidationError("param grid: all parameter lists must be nonempty");
    for (double a : alpha)
      if (a <= 0.0) throw ValidationError("param grid: alpha values must be > 0");
    for (double g : gamma)
      if (g < 0.0 || g > 1.0)
        throw ValidationError("param grid: gamma values must be in [0,1]");
    for (double b : beta)
      if (b < 0.0) throw ValidationError("param grid: beta values must be >= 0");
    for (double v : t)
      if (v < 0.0) throw ValidationError("param grid: t values must be >= 0");
    if (refine) {
      if (refine->parameter != "alpha" && refine->parameter != "beta" &&
          refine->parameter != "gamma" && refine->parameter != "t")
        throw ValidationError("param grid: refine.parameter must name a "
                              "parameter");
      if (refine->step <= 0.0 || refine->radius <= 0.0)
        throw ValidationError("param grid: refine.radius/step must be > 0");
    }
  }

  static ParamGrid from_json(const nlohmann::json& doc) {
    ParamGrid grid;
    auto read_list = [&](const char* key, std::vector<double>& into) {
      if (!doc.contains(key)) return;
      into.clear();
      for (const auto& v : doc.at(key)) into.push_back(v.get<double>());
    };
    read_list("alpha", grid.alpha);
    read_list("beta", grid.beta);
    read_list("gamma", grid.gamma);
    read_list("t", grid.t);
    if (doc.contains("refine")) {
      Refine r;
      r.parameter = doc.at("refine").at("parameter").get<std::string>();
      r.radius = doc.at("refine").at("radius").get<double>();
      r.step = doc.at("refine").at("step").get<double>();
      grid.refine = r;
    }
    grid.validate();
    return grid;
  }
};

struct FitCell {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double t = 0.0;
  double log_likelihood = 0.0;
};

struct FitOptions {
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  std::size_t max_cells = std::numeric_limits<std::size_t>::max();
  int n_runs = 1000;   // process-model per-cell run budget
  GibbsConfig gibbs;   // normative-model per-cell budget
  SoftmaxBasis basis = SoftmaxBasis::probability;
};

struct FitResult {
  ModelKind model = ModelKind::baseline;
  FitCell best;
  int k = 0;
  std::size_t n_choices = 0;
  double bic_value = 0.0;
  bool partial = false;  // budget ran out before the table was complete
  std::vector<FitCell> cells;
};

namespace detail {

struct CellPoint {
  double alpha, beta, gamma, t;
};

inline bool model_uses_hyper(ModelKind model) {
  return model == ModelKind::locala || model == ModelKind::localapro;
}

inline std::vector<CellPoint> expand_cells(ModelKind model, const ParamGrid& grid) {
  std::vector<CellPoint> cells;
  const std::vector<double> ones{grid.alpha.front()};
  const auto& alphas = model_uses_hyper(model) ? grid.alpha : ones;
  const std::vector<double> one_beta{grid.beta.front()};
  const auto& betas = model_uses_hyper(model) ? grid.beta : one_beta;
  const std::vector<double> one_gamma{grid.gamma.front()};
  const auto& gammas = model_uses_hyper(model) ? grid.gamma : one_gamma;
  const std::vector<double> one_t{grid.t.front()};
  const auto& ts = model == ModelKind::baseline ? one_t : grid.t;
  for (double a : alphas)
    for (double b : betas)
      for (double g : gammas)
        for (double tv : ts) cells.push_back({a, b, g, tv});
  return cells;
}

inline int fitted_parameter_count(ModelKind model, const ParamGrid& grid) {
  int k = 0;
  if (model_uses_hyper(model)) {
    if (grid.alpha.size() > 1) ++k;
    if (grid.beta.size() > 1) ++k;
    if (grid.gamma.size() > 1) ++k;
  }
  if (model != ModelKind::baseline && grid.t.size() > 1) ++k;
  return k;
}

// Log likelihood of the records at one parameter point.
inline double cell_log_likelihood(ModelKind model, const ModelParams& params,
                                  const std::map<std::string, Condition>& conditions,
                                  const std::vector<BehavioralRecord>& records,
                                  const std::map<std::string,
                                                 std::shared_ptr<const HypothesisSet>>&
                                      hypotheses,
                                  std::uint64_t cell_seed) {
  if (model != ModelKind::localapro) {
    PredictionTable table;
    std::size_t cond_ordinal = 0;
    for (const auto& [id, cond] : conditions) {
      auto preds = model_task_predictives(
          model, params, cond, *hypotheses.at(id),
          RngStream::derive(cell_seed, {0xF17u, cond_ordinal}).next_u64());
      std::vector<std::vector<double>> dists;
      dists.reserve(preds.size());
      for (const auto& p : preds)
        dists.push_back(softmax_response(p, params.t, params.basis));
      table.by_condition[id] = std::move(dists);
      ++cond_ordinal;
    }
    return log_likelihood(table, records, conditions);
  }

  // Process model: predictions depend on each participant's task order, so
  // records are grouped into sequences; averaged runs are cached per order.
  struct Key {
    std::string condition;
    std::vector<std::size_t> order;
    bool operator<(const Key& other) const {
      if (condition != other.condition) return condition < other.condition;
      return order < other.order;
    }
  };
  std::map<Key, std::vector<std::vector<double>>> cache;

  std::map<std::pair<std::string, std::string>,
           std::vector<const BehavioralRecord*>>
      by_participant;
  for (const auto& rec : records)
    by_participant[{rec.participant, rec.condition}].push_back(&rec);

  double ll = 0.0;
  for (auto& [key, recs] : by_participant) {
    const auto& [participant, condition] = key;
    auto cit = conditions.find(condition);
    if (cit == conditions.end())
      throw ValidationError("log_likelihood: unknown condition '" + condition +
                            "'");
    const Condition& cond = cit->second;
    std::sort(recs.begin(), recs.end(),
              [](const BehavioralRecord* x, const BehavioralRecord* y) {
                return x->trial < y->trial;
              });
    Key cache_key{condition, {}};
    for (const auto* rec : recs) {
      auto task_idx = find_task(cond, rec->agent, rec->recipient);
      if (!task_idx)
        throw ValidationError("log_likelihood: record of participant " +
                              participant + " trial " +
                              std::to_string(rec->trial) +
                              " matches no task in condition '" + condition +
                              "'");
      cache_key.order.push_back(*task_idx);
    }
    auto it = cache.find(cache_key);
    if (it == cache.end()) {
      std::uint64_t run_seed =
          RngStream::derive(cell_seed,
                            {0x5E9u, std::hash<std::string>{}(condition),
                             cache_key.order.empty() ? 0 : cache_key.order[0]})
              .next_u64();
      auto preds = localapro_sequence_predictives(params, cond,
                                                  hypotheses.at(condition),
                                                  cache_key.order, run_seed);
      std::vector<std::vector<double>> dists;
      for (const auto& p : preds)
        dists.push_back(softmax_response(p, params.t, params.basis));
      it = cache.emplace(cache_key, std::move(dists)).first;
    }
    for (std::size_t pos = 0; pos < recs.size(); ++pos) {
      const Task& task = cond.tasks[cache_key.order[pos]];
      std::optional<std::size_t> choice;
      for (std::size_t c = 0; c < task.candidates.size(); ++c)
        if (task.candidates[c] == recs[pos]->choice) choice = c;
      if (!choice)
        throw ValidationError("log_likelihood: choice of participant " +
                              participant + " is outside the candidate set");
      ll += std::log(std::max(it->second[pos][*choice], kChoiceProbabilityFloor));
    }
  }
  return ll;
}

}  // namespace detail

// Exhaustive evaluation of the parameter grid, best cell by log likelihood.
// Supports the coarse-to-fine protocol via grid.refine: after the first pass
// the named parameter's support is replaced by a fine list centered on the
// best cell and the grid is evaluated again. Deterministic given the seed and
// independent of the parallelism degree.
inline FitResult grid_search(ModelKind model, const ParamGrid& grid,
                             const std::map<std::string, Condition>& conditions,
                             const std::vector<BehavioralRecord>& records,
                             const FitOptions& opts) {
  grid.validate();
  if (records.empty())
    throw ValidationError("grid_search: no behavioral records");
  if (conditions.empty())
    throw ValidationError("grid_search: no conditions");

  std::map<std::string, std::shared_ptr<const HypothesisSet>> hypotheses;
  for (const auto& [id, cond] : conditions)
    hypotheses.emplace(id,
                       std::make_shared<const HypothesisSet>(cond.space,
                                                             cond.grammar));

  FitResult result;
  result.model = model;
  result.n_choices = records.size();
  result.k = detail::fitted_parameter_count(model, grid);

  std::size_t spent = 0;
  auto run_stage = [&](const ParamGrid& stage_grid, std::size_t stage_tag) {
    auto points = detail::expand_cells(model, stage_grid);
    std::size_t allowed = points.size();
    if (spent + allowed > opts.max_cells) {
      allowed = opts.max_cells > spent ? opts.max_cells - spent : 0;
      result.partial = true;
    }
    std::vector<FitCell> cells(allowed);
    parallel_for(allowed, opts.jobs, [&](std::size_t i) {
      const auto& pt = points[i];
      ModelParams params;
      params.hyper = Hyperparams{pt.alpha, pt.beta, pt.gamma};
      params.t = pt.t;
      params.n_runs = opts.n_runs;
      params.gibbs = opts.gibbs;
      params.basis = opts.basis;
      double ll = detail::cell_log_likelihood(
          model, params, conditions, records, hypotheses,
          RngStream::derive(opts.seed, {0xCE11u, stage_tag, i}).next_u64());
      cells[i] = FitCell{pt.alpha, pt.beta, pt.gamma, pt.t, ll};
    });
    spent += allowed;
    for (auto& c : cells) result.cells.push_back(c);
  };

  run_stage(grid, 0);
  if (!result.cells.empty() && grid.refine && !result.partial) {
    const FitCell* best = &result.cells.front();
    for (const auto& c : result.cells)
      if (c.log_likelihood > best->log_likelihood) best = &c;
    ParamGrid fine = grid;
    fine.refine.reset();
    const auto& which = grid.refine->parameter;
    double center = which == "alpha"   ? best->alpha
                    : which == "beta"  ? best->beta
                    : which == "gamma" ? best->gamma
                                       : best->t;
    std::vector<double> values;
    for (double v = center - grid.refine->radius;
         v <= center + grid.refine->radius + 1e-12; v += grid.refine->step) {
      double rounded = std::round(v / grid.refine->step) * grid.refine->step;
      if (which == "alpha" && rounded <= 0.0) continue;
      if (which == "gamma" && (rounded < 0.0 || rounded > 1.0)) continue;
      if ((which == "beta" || which == "t") && rounded < 0.0) continue;
      values.push_back(rounded);
    }
    if (!values.empty()) {
      if (which == "alpha") fine.alpha = values;
      if (which == "beta") fine.beta = values;
      if (which == "gamma") fine.gamma = values;
      if (which == "t") fine.t = values;
      run_stage(fine, 1);
    }
  }

  if (result.cells.empty())
    throw BudgetExhaustedError("grid_search: budget allows no cells");
  result.best = result.cells.front();
  for (const auto& c : result.cells)
    if (c.log_likelihood > result.best.log_likelihood) result.best = c;
  result.bic_value = bic(result.best.log_likelihood, result.k, result.n_choices);
  return result;
}

// ---------------------------------------------------------------------------
// Inter-participant consistency
// ---------------------------------------------------------------------------

// Standard Cronbach's alpha over a cases x items matrix (items in columns),
// with sample variances. Zero total-score variance is defined as perfect
// agreement (alpha = 1).
inline double cronbach_alpha(const std::vector<std::vector<double>>& matrix) {
  const std::size_t rows = matrix.size();
  if (rows < 2)
    throw ValidationError("cronbach_alpha: needs at least 2 rows (cases)");
  const std::size_t items = matrix.front().size();
  if (items < 2)
    throw ValidationError("cronbach_alpha: needs at least 2 items");
  for (const auto& r : matrix)
    if (r.size() != items)
      throw ValidationError("cronbach_alpha: ragged matrix");

  auto sample_variance = [&](auto&& value_at) {
    double mean = 0.0;
    for (std::size_t r = 0; r < rows; ++r) mean += value_at(r);
    mean /= static_cast<double>(rows);
    double ss = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      double d = value_at(r) - mean;
      ss += d * d;
    }
    return ss / static_cast<double>(rows - 1);
  };

  double item_var_sum = 0.0;
  for (std::size_t i = 0; i < items; ++i)
    item_var_sum += sample_variance([&](std::size_t r) { return matrix[r][i]; });
  double total_var = sample_variance([&](std::size_t r) {
    double s = 0.0;
    for (std::size_t i = 0; i < items; ++i) s += matrix[r][i];
    return s;
  });
  if (total_var == 0.0) return 1.0;
  const double k = static_cast<double>(items);
  return (k / (k - 1.0)) * (1.0 - item_var_sum / total_var);
}

struct ConsistencyCell {
  std::string condition;
  std::string regime;
  std::size_t task_index = 0;  // index into cond.tasks
  std::size_t participants = 0;
  bool computed = false;  // false when fewer than 2 participants answered
  double alpha = 0.0;
};

// Per-trial inter-participant consistency: participants enter as the items of
// a one-hot (candidate x participant) indicator matrix built per task within
// each condition x regime cell.
inline std::vector<ConsistencyCell> consistency_table(
    const std::vector<BehavioralRecord>& records,
    const std::map<std::string, Condition>& conditions) {
  std::map<std::pair<std::string, std::string>,
           std::map<std::size_t, std::vector<const BehavioralRecord*>>>
      groups;
  for (const auto& rec : records) {
    auto cit = conditions.find(rec.condition);
    if (cit == conditions.end())
      throw ValidationError("consistency: unknown condition '" + rec.condition +
                            "'");
    auto task_idx = find_task(cit->second, rec.agent, rec.recipient);
    if (!task_idx)
      throw ValidationError("consistency: record of participant " +
                            rec.participant + " matches no task in condition '" +
                            rec.condition + "'");
    groups[{rec.condition, rec.regime}][*task_idx].push_back(&rec);
  }

  std::vector<ConsistencyCell> out;
  for (const auto& [key, tasks] : groups) {
    for (const auto& [task_idx, recs] : tasks) {
      const Condition& cond = conditions.at(key.first);
      const Task& task = cond.tasks[task_idx];
      if (!task.scored) continue;
      ConsistencyCell cell;
      cell.condition = key.first;
      cell.regime = key.second;
      cell.task_index = task_idx;
      cell.participants = recs.size();
      if (recs.size() >= 2) {
        std::vector<std::vector<double>> matrix(
            task.candidates.size(), std::vector<double>(recs.size(), 0.0));
        for (std::size_t p = 0; p < recs.size(); ++p) {
          for (std::size_t c = 0; c < task.candidates.size(); ++c)
            if (task.candidates[c] == recs[p]->choice) matrix[c][p] = 1.0;
        }
        cell.alpha = cronbach_alpha(matrix);
        cell.computed = true;
      }
      out.push_back(std::move(cell));
    }
  }
  return out;
}

struct ConsistencySummary {
  std::string condition;
  std::string regime;
  std::size_t trials = 0;
  std::size_t participants = 0;  // with complete answers over the trial set
  double mean_alpha = 0.0;       // over the computed per-trial cells
  double sd_alpha = 0.0;
  bool pooled_computed = false;
  double pooled_alpha = 0.0;  // trial-set matrix, all scored trials stacked
};

// Condition x regime aggregates: mean +/- sd of the per-trial alphas plus the
// pooled trial-set alpha (candidate rows of every scored trial stacked, one
// item column per participant with complete answers). The pooled statistic is
// the calibrated one: per-trial alphas run negative under random responding
// because the total-score variance is estimated from few candidate rows.
inline std::vector<ConsistencySummary> consistency_summaries(
    const std::vector<BehavioralRecord>& records,
    const std::map<std::string, Condition>& conditions) {
  auto cells = consistency_table(records, conditions);

  std::map<std::pair<std::string, std::string>,
           std::map<std::string, std::map<std::size_t, const BehavioralRecord*>>>
      by_group;  // (condition, regime) -> participant -> task -> record
  for (const auto& rec : records) {
    const Condition& cond = conditions.at(rec.condition);
    auto task_idx = find_task(cond, rec.agent, rec.recipient);
    if (task_idx && cond.tasks[*task_idx].scored)
      by_group[{rec.condition, rec.regime}][rec.participant][*task_idx] = &rec;
  }

  std::vector<ConsistencySummary> out;
  for (const auto& [key, participants] : by_group) {
    ConsistencySummary summary;
    summary.condition = key.first;
    summary.regime = key.second;
    const Condition& cond = conditions.at(key.first);

    std::vector<double> trial_alphas;
    for (const auto& cell : cells)
      if (cell.condition == key.first && cell.regime == key.second &&
          cell.computed)
        trial_alphas.push_back(cell.alpha);
    summary.trials = trial_alphas.size();
    if (!trial_alphas.empty()) {
      for (double a : trial_alphas) summary.mean_alpha += a;
      summary.mean_alpha /= static_cast<double>(trial_alphas.size());
      for (double a : trial_alphas) {
        double d = a - summary.mean_alpha;
        summary.sd_alpha += d * d;
      }
      summary.sd_alpha = trial_alphas.size() > 1
                             ? std::sqrt(summary.sd_alpha /
                                         static_cast<double>(trial_alphas.size() - 1))
                             : 0.0;
    }

    std::vector<std::size_t> scored_tasks;
    for (std::size_t t = 0; t < cond.tasks.size(); ++t)
      if (cond.tasks[t].scored) scored_tasks.push_back(t);
    std::vector<const std::map<std::size_t, const BehavioralRecord*>*> complete;
    for (const auto& [pid, answers] : participants) {
      bool all = true;
      for (std::size_t t : scored_tasks)
        if (!answers.count(t)) all = false;
      if (all) complete.push_back(&answers);
    }
    summary.participants = complete.size();
    if (complete.size() >= 2 && !scored_tasks.empty()) {
      std::size_t rows = 0;
      for (std::size_t t : scored_tasks) rows += cond.tasks[t].candidates.size();
      std::vector<std::vector<double>> matrix(
          rows, std::vector<double>(complete.size(), 0.0));
      std::size_t row0 = 0;
      for (std::size_t t : scored_tasks) {
        const Task& task = cond.tasks[t];
        for (std::size_t p = 0; p < complete.size(); ++p) {
          const ObjectState& choice = complete[p]->at(t)->choice;
          for (std::size_t c = 0; c < task.candidates.size(); ++c)
            if (task.candidates[c] == choice) matrix[row0 + c][p] = 1.0;
        }
        row0 += task.candidates.size();
      }
      summary.pooled_alpha = cronbach_alpha(matrix);
      summary.pooled_computed = true;
    }
    out.push_back(std::move(summary));
  }
  return out;
}

}  // namespace causalgen
