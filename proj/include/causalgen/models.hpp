#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "causalgen/experiments.hpp"
#include "causalgen/infer.hpp"
#include "causalgen/process.hpp"

namespace causalgen {

enum class ModelKind { baseline, uncala, locala, localapro };

inline ModelKind parse_model(const std::string& s) {
  if (s == "baseline") return ModelKind::baseline;
  if (s == "uncala") return ModelKind::uncala;
  if (s == "locala") return ModelKind::locala;
  if (s == "localapro") return ModelKind::localapro;
  throw ValidationError("unknown model '" + s +
                        "' (baseline|uncala|locala|localapro)");
}

inline const char* model_name(ModelKind m) {
  switch (m) {
    case ModelKind::baseline: return "baseline";
    case ModelKind::uncala: return "uncala";
    case ModelKind::locala: return "locala";
    default: return "localapro";
  }
}

// Whether the softmax sharpens raw predictive probabilities (default) or
// their logs. The probability form keeps t = 0 uniform.
enum class SoftmaxBasis { probability, log_probability };

struct ModelParams {
  Hyperparams hyper;
  double t = 1.0;      // softmax inverse temperature
  int n_runs = 1000;   // process-model averaging budget
  GibbsConfig gibbs;   // normative-model sampling budget
  SoftmaxBasis basis = SoftmaxBasis::probability;
};

// P(choice = c) proportional to exp(t * pred(c)) over the candidate set.
inline std::vector<double> softmax_response(const std::vector<double>& pred,
                                            double t,
                                            SoftmaxBasis basis =
                                                SoftmaxBasis::probability) {
  if (t < 0.0) throw ValidationError("softmax_response: t must be >= 0");
  std::vector<double> score(pred.size());
  double max_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pred.size(); ++i) {
    score[i] = basis == SoftmaxBasis::probability
                   ? t * pred[i]
                   : (pred[i] > 0.0
                          ? t * std::log(pred[i])
                          : -std::numeric_limits<double>::infinity());
    max_score = std::max(max_score, score[i]);
  }
  double total = 0.0;
  std::vector<double> out(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    out[i] = std::exp(score[i] - max_score);
    total += out[i];
  }
  for (double& p : out) p /= total;
  return out;
}

inline std::vector<double> softmax_response(const Predictive& pred, double t,
                                            SoftmaxBasis basis =
                                                SoftmaxBasis::probability) {
  return softmax_response(pred.probabilities, t, basis);
}

// ---------------------------------------------------------------------------
// Per-task predictives
// ---------------------------------------------------------------------------

inline Predictive uniform_predictive(const Task& task) {
  Predictive pred;
  pred.agent = task.agent;
  pred.recipient = task.recipient;
  pred.candidates = task.candidates;
  pred.probabilities.assign(task.candidates.size(),
                            1.0 / static_cast<double>(task.candidates.size()));
  return pred;
}

// Predictive distributions for models whose predictions do not depend on the
// order in which tasks are faced (baseline, uncala, locala). Aligned with
// cond.tasks. Gibbs-based models derive their chains from `seed`.
inline std::vector<Predictive> model_task_predictives(
    ModelKind model, const ModelParams& params, const Condition& cond,
    const HypothesisSet& hypotheses, std::uint64_t seed, unsigned jobs = 1) {
  std::vector<Predictive> out;
  out.reserve(cond.tasks.size());
  switch (model) {
    case ModelKind::baseline: {
      for (const auto& task : cond.tasks) out.push_back(uniform_predictive(task));
      break;
    }
    case ModelKind::uncala: {
      auto posterior = uncala_posterior(cond.learning, hypotheses);
      for (const auto& task : cond.tasks)
        out.push_back(uncala_predictive(posterior, hypotheses, task.agent,
                                        task.recipient, task.candidates));
      break;
    }
    case ModelKind::locala: {
      GibbsConfig gc = params.gibbs;
      gc.seed = seed;
      auto samples = gibbs_sample(cond.learning, params.hyper, gc, hypotheses, jobs);
      for (const auto& task : cond.tasks)
        out.push_back(posterior_predictive(samples, task.agent, task.recipient,
                                           params.hyper, hypotheses,
                                           task.candidates));
      break;
    }
    case ModelKind::localapro:
      throw ValidationError(
          "localapro predictions depend on the task order; use "
          "localapro_sequence_predictives");
  }
  return out;
}

// Averaged process-model predictions for one concrete task order. Returns
// per-position predictives (position p shows task order[p]).
inline std::vector<Predictive> localapro_sequence_predictives(
    const ModelParams& params, const Condition& cond,
    const std::shared_ptr<const HypothesisSet>& hypotheses,
    const std::vector<std::size_t>& order, std::uint64_t seed,
    unsigned jobs = 1) {
  std::vector<Task> tasks;
  tasks.reserve(order.size());
  for (std::size_t idx : order) tasks.push_back(cond.tasks[idx]);
  auto avg = averaged_predictions(cond.learning, tasks, params.hyper, hypotheses,
                                  params.n_runs, seed, jobs);
  std::vector<Predictive> out(tasks.size());
  for (std::size_t p = 0; p < tasks.size(); ++p) {
    out[p].agent = tasks[p].agent;
    out[p].recipient = tasks[p].recipient;
    out[p].candidates = tasks[p].candidates;
    out[p].probabilities = avg.per_trial[p];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic participants
// ---------------------------------------------------------------------------

// Each synthetic participant faces the condition's tasks in a seeded sequence
// for the requested regime and draws one choice per trial from the softmaxed
// model predictive. Only scored trials produce records.
inline std::vector<BehavioralRecord> simulate_participants(
    ModelKind model, const ModelParams& params, const Condition& cond,
    Regime regime, int n, std::uint64_t seed, unsigned jobs = 1) {
  if (n < 0) throw ValidationError("simulate_participants: n must be >= 0");
  auto hypotheses = std::make_shared<const HypothesisSet>(cond.space, cond.grammar);

  std::vector<Predictive> static_preds;
  if (model != ModelKind::localapro)
    static_preds = model_task_predictives(model, params, cond, *hypotheses,
                                          splitmix64(seed ^ 0x5EEDu), jobs);

  std::vector<std::vector<BehavioralRecord>> per_participant(
      static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), jobs, [&](std::size_t p) {
    RngStream rng = RngStream::derive(seed, {0x9A27u, p});
    std::vector<std::size_t> order = sequence_tasks(cond, regime, rng);
    std::vector<Predictive> preds;
    if (model == ModelKind::localapro) {
      preds = localapro_sequence_predictives(
          params, cond, hypotheses, order,
          RngStream::derive(seed, {0x9A27u, p, 1}).next_u64(), 1);
    } else {
      preds.reserve(order.size());
      for (std::size_t idx : order) preds.push_back(static_preds[idx]);
    }
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      const Task& task = cond.tasks[order[pos]];
      auto dist = softmax_response(preds[pos], params.t, params.basis);
      ObjectState choice = task.candidates[rng.categorical(dist)];
      if (!task.scored) continue;
      BehavioralRecord rec;
      rec.participant = "p" + std::to_string(p + 1);
      rec.condition = cond.id;
      rec.regime = regime_name(regime);
      rec.trial = static_cast<int>(pos) + 1;
      rec.agent = task.agent;
      rec.recipient = task.recipient;
      rec.choice = choice;
      per_participant[p].push_back(std::move(rec));
    }
  });

  std::vector<BehavioralRecord> records;
  for (auto& chunk : per_participant)
    for (auto& rec : chunk) records.push_back(std::move(rec));
  return records;
}

}  // namespace causalgen
