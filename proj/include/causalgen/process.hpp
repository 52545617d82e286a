#pragma once

#include <cstdint>
#include <memory>
#include <numeric>
#include <vector>

#include "causalgen/categories.hpp"
#include "causalgen/dsl.hpp"
#include "causalgen/errors.hpp"
#include "causalgen/infer.hpp"
#include "causalgen/parallel.hpp"
#include "causalgen/rng.hpp"

namespace causalgen {

// One generalization trial: a query pair and the responses offered for it.
struct Task {
  ObjectState agent;
  ObjectState recipient;
  std::vector<ObjectState> candidates;
  bool scored = true;
};

struct TraceEntry {
  int category_id = 0;  // 1-based position in the category list
  bool new_category = false;
  ObjectState prediction;
};

// Per-trial log of one sequential run, for order-effect diagnostics.
struct RunTrace {
  std::vector<TraceEntry> entries;
};

// Sequential commitment-making state: an ordered list of categories, each
// with one committed causal function. Category 1 holds the learning data.
class ProcessState {
public:
  ProcessState(const Hyperparams& hyper,
               std::shared_ptr<const HypothesisSet> hypotheses)
      : hyper_(hyper), hypotheses_(std::move(hypotheses)) {
    hyper_.validate();
  }

  const std::vector<CategoryState>& categories() const { return categories_; }
  std::size_t category_count() const { return categories_.size(); }
  int pairs_assigned() const { return pairs_assigned_; }
  const Hyperparams& hyper() const { return hyper_; }
  const HypothesisSet& hypotheses() const { return *hypotheses_; }

  int add_category(CausalFunction fn) {
    CategoryState cat(hypotheses_->space());
    cat.function = std::move(fn);
    categories_.push_back(std::move(cat));
    return static_cast<int>(categories_.size());
  }

  void add_pair(int category_id, const ObjectState& agent,
                const ObjectState& recipient) {
    categories_[static_cast<std::size_t>(category_id - 1)].add(
        next_obs_id_++, agent, recipient);
    pairs_assigned_ += 1;
  }

  CategoryState& category(int category_id) {
    return categories_[static_cast<std::size_t>(category_id - 1)];
  }

private:
  Hyperparams hyper_;
  std::shared_ptr<const HypothesisSet> hypotheses_;
  std::vector<CategoryState> categories_;
  int pairs_assigned_ = 0;
  int next_obs_id_ = 0;
};

namespace detail {

inline CausalFunction draw_from_posterior(const HypothesisSet& hypotheses,
                                          const std::vector<Observation>& data,
                                          const std::vector<int>& members,
                                          RngStream& rng) {
  std::vector<double> w = hypotheses.posterior_weights(data, members);
  return hypotheses.function(rng.categorical(w));
}

inline CausalFunction draw_from_prior(const HypothesisSet& hypotheses,
                                      RngStream& rng) {
  return hypotheses.function(rng.categorical(hypotheses.priors()));
}

}  // namespace detail

// Seats the learning pair(s) and draws category functions from the exact
// enumerated learning posterior. With several learning observations the
// seating is one sequential pass of CRP x feature fit x committed-function
// likelihood, creating categories on demand; each join refreshes the joined
// category's function from its members' posterior so generalization starts
// from the learning posterior of whatever data each category absorbed.
inline ProcessState init_process(const std::vector<Observation>& learning,
                                 const Hyperparams& hyper,
                                 std::shared_ptr<const HypothesisSet> hypotheses,
                                 RngStream& rng) {
  if (learning.empty())
    throw ValidationError("init_process: learning data is empty");
  for (const auto& d : learning)
    if (!d.complete())
      throw ValidationError("init_process: incomplete learning observation");

  const HypothesisSet& hyp = *hypotheses;
  ProcessState state(hyper, std::move(hypotheses));
  const CategoryState empty_cat(hyp.space());

  std::vector<std::vector<Observation>> members_data;
  for (std::size_t i = 0; i < learning.size(); ++i) {
    const Observation& d = learning[i];
    int joined;
    if (i == 0) {
      joined = state.add_category(
          detail::draw_from_posterior(hyp, {d}, {0}, rng));
      members_data.push_back({d});
    } else {
      const double denom = state.pairs_assigned() + hyper.alpha;
      std::vector<double> weights;
      for (const auto& cat : state.categories()) {
        double w = static_cast<double>(cat.size()) / denom;
        w *= feature_likelihood(d.agent, d.recipient, cat, hyper);
        w *= likelihood(d, *cat.function, hyp.space(), hyp.grammar());
        weights.push_back(w);
      }
      double prior_marginal = 0.0;
      {
        auto row = hyp.likelihood_row(d);
        for (std::size_t f = 0; f < hyp.size(); ++f)
          prior_marginal += hyp.prior(f) * row[f];
      }
      weights.push_back(hyper.alpha / denom *
                        feature_likelihood(d.agent, d.recipient, empty_cat, hyper) *
                        prior_marginal);
      std::size_t pick = rng.categorical(weights);
      if (pick < state.category_count()) {
        joined = static_cast<int>(pick) + 1;
        members_data[pick].push_back(d);
        state.category(joined).function = detail::draw_from_posterior(
            hyp, members_data[pick],
            state.category(joined).members(), rng);
      } else {
        joined = state.add_category(
            detail::draw_from_posterior(hyp, {d}, {static_cast<int>(i)}, rng));
        members_data.push_back({d});
      }
    }
    state.add_pair(joined, d.agent, d.recipient);
  }
  return state;
}

// One generalization trial (Algorithm-1 step): sample a category by CRP mass
// times feature fit (no result term), predict through that category's
// committed function, then commit the pair to the category. A new category
// samples its function from the grammar prior. If the committed function
// admits no candidate outcome, the prediction falls back to a uniform
// candidate draw and the pair still joins.
inline ObjectState process_step(ProcessState& state, const Task& task,
                                RngStream& rng, TraceEntry* entry = nullptr) {
  const HypothesisSet& hyp = state.hypotheses();
  const Hyperparams& hyper = state.hyper();
  const CategoryState empty_cat(hyp.space());
  if (task.candidates.empty())
    throw ValidationError("process_step: task has no candidates");

  const double denom = state.pairs_assigned() + hyper.alpha;
  std::vector<double> weights;
  for (const auto& cat : state.categories())
    weights.push_back(static_cast<double>(cat.size()) / denom *
                      feature_likelihood(task.agent, task.recipient, cat, hyper));
  weights.push_back(hyper.alpha / denom *
                    feature_likelihood(task.agent, task.recipient, empty_cat,
                                       hyper));

  std::size_t pick = rng.categorical(weights);
  int category_id;
  bool fresh = pick >= state.category_count();
  if (fresh)
    category_id = state.add_category(detail::draw_from_prior(hyp, rng));
  else
    category_id = static_cast<int>(pick) + 1;

  const CausalFunction& fn = *state.category(category_id).function;
  OutcomeDomain dom = apply_function(fn, task.agent, task.recipient, hyp.space());
  const double eps = hyp.grammar().epsilon;
  std::vector<double> outcome_weights(task.candidates.size(), 0.0);
  const std::size_t nd = dom.size();
  double total = 0.0;
  for (std::size_t c = 0; c < task.candidates.size(); ++c) {
    double w = 0.0;
    if (nd > 0 && dom.contains(task.candidates[c]))
      w += (1.0 - eps) / static_cast<double>(nd);
    if (eps > 0.0) w += eps / static_cast<double>(hyp.space().universe_size());
    outcome_weights[c] = w;
    total += w;
  }
  ObjectState prediction;
  if (total > 0.0)
    prediction = task.candidates[rng.categorical(outcome_weights)];
  else
    prediction = task.candidates[rng.uniform_index(task.candidates.size())];

  state.add_pair(category_id, task.agent, task.recipient);
  if (entry) *entry = TraceEntry{category_id, fresh, prediction};
  return prediction;
}

inline RunTrace run_process(const std::vector<Observation>& learning,
                            const std::vector<Task>& tasks,
                            const Hyperparams& hyper,
                            const std::shared_ptr<const HypothesisSet>& hypotheses,
                            RngStream& rng, std::size_t* categories_out = nullptr) {
  ProcessState state = init_process(learning, hyper, hypotheses, rng);
  RunTrace trace;
  trace.entries.resize(tasks.size());
  for (std::size_t t = 0; t < tasks.size(); ++t)
    process_step(state, tasks[t], rng, &trace.entries[t]);
  if (categories_out) *categories_out = state.category_count();
  return trace;
}

// Population-level predictions: empirical choice frequencies per trial over
// independent seeded runs.
struct AveragedPredictions {
  std::vector<std::vector<double>> per_trial;  // aligned with tasks[t].candidates
  std::vector<std::size_t> final_category_counts;  // one per run
  std::vector<RunTrace> traces;                    // one per run
};

inline AveragedPredictions averaged_predictions(
    const std::vector<Observation>& learning, const std::vector<Task>& tasks,
    const Hyperparams& hyper,
    const std::shared_ptr<const HypothesisSet>& hypotheses, int n_runs,
    std::uint64_t seed, unsigned jobs = 1) {
  if (n_runs < 1) throw ValidationError("averaged_predictions: n_runs must be >= 1");
  AveragedPredictions out;
  out.final_category_counts.resize(static_cast<std::size_t>(n_runs));
  out.traces.resize(static_cast<std::size_t>(n_runs));

  parallel_for(static_cast<std::size_t>(n_runs), jobs, [&](std::size_t run) {
    RngStream rng = RngStream::derive(seed, {0x9D0CEu, run});
    out.traces[run] = run_process(learning, tasks, hyper, hypotheses, rng,
                                  &out.final_category_counts[run]);
  });

  out.per_trial.resize(tasks.size());
  for (std::size_t t = 0; t < tasks.size(); ++t)
    out.per_trial[t].assign(tasks[t].candidates.size(), 0.0);
  for (const auto& trace : out.traces) {
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      const auto& pred = trace.entries[t].prediction;
      for (std::size_t c = 0; c < tasks[t].candidates.size(); ++c) {
        if (tasks[t].candidates[c] == pred) {
          out.per_trial[t][c] += 1.0;
          break;
        }
      }
    }
  }
  for (auto& dist : out.per_trial)
    for (double& p : dist) p /= static_cast<double>(n_runs);
  return out;
}

}  // namespace causalgen
