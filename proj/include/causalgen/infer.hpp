#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "causalgen/categories.hpp"
#include "causalgen/dsl.hpp"
#include "causalgen/errors.hpp"
#include "causalgen/feature_space.hpp"
#include "causalgen/parallel.hpp"
#include "causalgen/rng.hpp"

namespace causalgen {

struct GibbsConfig {
  int chains = 5;
  int sweeps = 6000;
  int burn_in = 500;
  int thin = 2;
  std::uint64_t seed = 0;

  void validate() const {
    if (chains < 1) throw ValidationError("gibbs config: chains must be >= 1");
    if (burn_in < 0 || burn_in >= sweeps)
      throw ValidationError("gibbs config: burn-in must be < sweeps");
    if (thin < 1) throw ValidationError("gibbs config: thin must be >= 1");
  }
};

// One retained draw: a partition whose every category carries a function
// sampled from its exact conditional posterior.
struct PosteriorSample {
  Partition partition;
};

// Outcome distribution over a candidate set for one query pair.
struct Predictive {
  ObjectState agent;
  ObjectState recipient;
  std::vector<ObjectState> candidates;
  std::vector<double> probabilities;
};

// ---------------------------------------------------------------------------
// UnCaLa: one universal law
// ---------------------------------------------------------------------------

// Posterior over the enumerated functions given all observations, normalized.
inline std::vector<double> uncala_posterior(const std::vector<Observation>& data,
                                            const HypothesisSet& hypotheses) {
  for (const auto& d : data)
    if (!d.complete())
      throw ValidationError("uncala_posterior: incomplete observation");
  std::vector<double> w = hypotheses.posterior_weights(data);
  double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= total;
  return w;
}

namespace detail {

inline Predictive finalize_predictive(const ObjectState& agent,
                                      const ObjectState& recipient,
                                      const std::vector<ObjectState>& candidates,
                                      const std::vector<double>& universe_mass,
                                      const FeatureSpace& space) {
  Predictive pred;
  pred.agent = agent;
  pred.recipient = recipient;
  pred.candidates = candidates;
  pred.probabilities.resize(candidates.size());
  double total = 0.0;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    pred.probabilities[c] = universe_mass[space.flat_index(candidates[c])];
    total += pred.probabilities[c];
  }
  if (total > 0.0) {
    for (double& p : pred.probabilities) p /= total;
  } else {
    for (double& p : pred.probabilities)
      p = 1.0 / static_cast<double>(candidates.size());
  }
  return pred;
}

}  // namespace detail

// Prediction of a single universal-law posterior: mixture of per-function
// outcome distributions, restricted and renormalized to the candidates.
inline Predictive uncala_predictive(const std::vector<double>& posterior,
                                    const HypothesisSet& hypotheses,
                                    const ObjectState& agent,
                                    const ObjectState& recipient,
                                    const std::vector<ObjectState>& candidates) {
  auto mass = hypotheses.mixture_outcomes(posterior, agent, recipient);
  return detail::finalize_predictive(agent, recipient, candidates, mass,
                                     hypotheses.space());
}

// Predictive with no learning data: the enumeration-weighted prior
// predictive over the candidate set.
inline Predictive prior_predictive(const HypothesisSet& hypotheses,
                                   const ObjectState& agent,
                                   const ObjectState& recipient,
                                   const std::vector<ObjectState>& candidates) {
  auto mass = hypotheses.prior_predictive_outcomes(agent, recipient);
  return detail::finalize_predictive(agent, recipient, candidates, mass,
                                     hypotheses.space());
}

// ---------------------------------------------------------------------------
// LoCaLa: collapsed Gibbs over partitions with per-category laws
// ---------------------------------------------------------------------------

namespace detail {

// Sparse unnormalized posterior over functions for one category:
// prior_f * prod_{j in members} P(d_j | f), kept over its nonzero support.
struct SparsePosterior {
  std::vector<std::uint32_t> index;
  std::vector<double> weight;
  double total = 0.0;

  void rebuild(const HypothesisSet& hypotheses,
               const std::vector<std::vector<double>>& lik_rows,
               const std::vector<int>& members) {
    index.clear();
    weight.clear();
    total = 0.0;
    for (std::uint32_t f = 0; f < hypotheses.size(); ++f) {
      double w = hypotheses.prior(f);
      for (int j : members) {
        w *= lik_rows[static_cast<std::size_t>(j)][f];
        if (w == 0.0) break;
      }
      if (w > 0.0) {
        index.push_back(f);
        weight.push_back(w);
        total += w;
      }
    }
  }

  // Marginal likelihood ratio of adding observation i, and the filtered
  // posterior after the addition.
  double fold_in(const std::vector<double>& lik_row) {
    double new_total = 0.0;
    std::size_t keep = 0;
    for (std::size_t k = 0; k < index.size(); ++k) {
      double w = weight[k] * lik_row[index[k]];
      if (w > 0.0) {
        index[keep] = index[k];
        weight[keep] = w;
        new_total += w;
        ++keep;
      }
    }
    index.resize(keep);
    weight.resize(keep);
    double ratio = total > 0.0 ? new_total / total : 0.0;
    total = new_total;
    return ratio;
  }

  double marginal_ratio(const std::vector<double>& lik_row) const {
    if (total <= 0.0) return 0.0;
    double acc = 0.0;
    for (std::size_t k = 0; k < index.size(); ++k)
      acc += weight[k] * lik_row[index[k]];
    return acc / total;
  }

  std::size_t draw(RngStream& rng) const {
    return index[rng.categorical(weight)];
  }
};

struct GibbsChainState {
  Partition partition;
  std::map<int, SparsePosterior> func_posteriors;

  explicit GibbsChainState(const FeatureSpace& space) : partition(space) {}
};

}  // namespace detail

// Collapsed Gibbs sampling of the extended DP posterior. Assignment weights
// integrate the category function out exactly (for the NEW slot this is the
// prior-marginal over the enumeration); retained samples attach to every
// category a function drawn from its exact conditional posterior.
inline std::vector<PosteriorSample> gibbs_sample(
    const std::vector<Observation>& data, const Hyperparams& hyper,
    const GibbsConfig& cfg, const HypothesisSet& hypotheses,
    unsigned jobs = 1) {
  hyper.validate();
  cfg.validate();
  if (data.empty()) throw ValidationError("gibbs_sample: no observations");
  for (const auto& d : data)
    if (!d.complete())
      throw ValidationError("gibbs_sample: incomplete observation");

  const FeatureSpace& space = hypotheses.space();
  const std::size_t n = data.size();

  std::vector<std::vector<double>> lik_rows(n);
  std::vector<double> prior_marginal(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    lik_rows[i] = hypotheses.likelihood_row(data[i]);
    for (std::size_t f = 0; f < hypotheses.size(); ++f)
      prior_marginal[i] += hypotheses.prior(f) * lik_rows[i][f];
    if (prior_marginal[i] <= 0.0)
      throw NoConsistentFunctionError(
          "observation " + std::to_string(i) +
              " is inconsistent with every enumerated causal function",
          {static_cast<int>(i)});
  }

  const CategoryState empty_cat(space);
  const int per_chain =
      (cfg.sweeps - cfg.burn_in + cfg.thin - 1) / cfg.thin;
  std::vector<std::vector<PosteriorSample>> per_chain_samples(
      static_cast<std::size_t>(cfg.chains));

  parallel_for(static_cast<std::size_t>(cfg.chains), jobs, [&](std::size_t chain) {
    RngStream rng = RngStream::derive(cfg.seed, {0xC8A11u, chain});
    detail::GibbsChainState state(space);
    auto& part = state.partition;
    auto& posts = state.func_posteriors;

    // One move of the collapsed kernel: observation i is unassigned; sample
    // its category and fold it into the bookkeeping.
    const auto place = [&](std::size_t i) {
      const Observation& d = data[i];
      std::vector<int> ids;
      std::vector<double> weights;
      const double denom = static_cast<double>(part.assigned_count()) + hyper.alpha;
      for (const auto& [id, cat] : part.categories()) {
        double w = static_cast<double>(cat.size()) / denom;
        w *= category_pair_affinity(d.agent, d.recipient, cat, hyper);
        if (w > 0.0) w *= posts.at(id).marginal_ratio(lik_rows[i]);
        ids.push_back(id);
        weights.push_back(w);
      }
      weights.push_back(hyper.alpha / denom *
                        feature_likelihood(d.agent, d.recipient, empty_cat, hyper) *
                        prior_marginal[i]);
      std::size_t pick = rng.categorical(weights);
      if (pick < ids.size()) {
        int id = ids[pick];
        part.assign(static_cast<int>(i), id, d.agent, d.recipient);
        posts.at(id).fold_in(lik_rows[i]);
      } else {
        int id = part.assign_new(static_cast<int>(i), d.agent, d.recipient);
        detail::SparsePosterior sp;
        sp.rebuild(hypotheses, lik_rows, {static_cast<int>(i)});
        posts.emplace(id, std::move(sp));
      }
    };

    for (std::size_t i = 0; i < n; ++i) place(i);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    per_chain_samples[chain].reserve(static_cast<std::size_t>(per_chain));

    for (int sweep = 0; sweep < cfg.sweeps; ++sweep) {
      rng.shuffle(order);
      for (std::size_t i : order) {
        int old_id = part.category_of(static_cast<int>(i));
        part.remove(static_cast<int>(i), data[i].agent, data[i].recipient);
        if (!part.categories().count(old_id)) {
          posts.erase(old_id);
        } else {
          posts.at(old_id).rebuild(hypotheses, lik_rows,
                                   part.categories().at(old_id).members());
        }
        place(i);
      }
      if (sweep >= cfg.burn_in && (sweep - cfg.burn_in) % cfg.thin == 0) {
        PosteriorSample sample{part};
        for (auto& [id, cat] : sample.partition.categories())
          cat.function = hypotheses.function(posts.at(id).draw(rng));
        per_chain_samples[chain].push_back(std::move(sample));
      }
    }
  });

  std::vector<PosteriorSample> samples;
  for (auto& chunk : per_chain_samples)
    for (auto& s : chunk) samples.push_back(std::move(s));
  return samples;
}

// ---------------------------------------------------------------------------
// Posterior predictive (Eq. 3 style marginalization over samples)
// ---------------------------------------------------------------------------

// For each posterior sample the query pair is soft-assigned across that
// sample's categories and a NEW slot by CRP mass times feature fit (weights
// normalized per sample); categories predict through their attached function,
// the NEW slot through the enumeration-weighted prior predictive. The average
// over samples is restricted to the candidates and renormalized.
inline Predictive posterior_predictive(const std::vector<PosteriorSample>& samples,
                                       const ObjectState& agent,
                                       const ObjectState& recipient,
                                       const Hyperparams& hyper,
                                       const HypothesisSet& hypotheses,
                                       const std::vector<ObjectState>& candidates) {
  if (samples.empty())
    throw ValidationError("posterior_predictive: no posterior samples");
  hyper.validate();
  const FeatureSpace& space = hypotheses.space();
  const CategoryState empty_cat(space);
  const double eps = hypotheses.grammar().epsilon;
  const std::vector<double> prior_mass =
      hypotheses.prior_predictive_outcomes(agent, recipient);

  std::vector<double> universe(space.universe_size(), 0.0);
  for (const auto& sample : samples) {
    const auto& cats = sample.partition.categories();
    std::vector<double> weights;
    weights.reserve(cats.size() + 1);
    const double denom =
        static_cast<double>(sample.partition.assigned_count()) + hyper.alpha;
    for (const auto& [id, cat] : cats)
      weights.push_back(static_cast<double>(cat.size()) / denom *
                        category_pair_affinity(agent, recipient, cat, hyper));
    weights.push_back(hyper.alpha / denom *
                      feature_likelihood(agent, recipient, empty_cat, hyper));
    double wtotal = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (wtotal <= 0.0) continue;

    std::size_t k = 0;
    for (const auto& [id, cat] : cats) {
      const double w = weights[k++] / wtotal;
      if (w <= 0.0) continue;
      if (!cat.function)
        throw ValidationError("posterior_predictive: category without function");
      OutcomeDomain dom = apply_function(*cat.function, agent, recipient, space);
      const std::size_t nd = dom.size();
      if (nd > 0) {
        const double per = w * (1.0 - eps) / static_cast<double>(nd);
        for (const auto& o : dom.enumerate()) universe[space.flat_index(o)] += per;
      }
      if (eps > 0.0) {
        const double per = w * eps / static_cast<double>(universe.size());
        for (double& u : universe) u += per;
      }
    }
    const double w_new = weights.back() / wtotal;
    for (std::size_t u = 0; u < universe.size(); ++u)
      universe[u] += w_new * prior_mass[u];
  }
  for (double& u : universe) u /= static_cast<double>(samples.size());
  return detail::finalize_predictive(agent, recipient, candidates, universe, space);
}

// Argmax choice with uniform tie-breaking.
inline ObjectState choose(const Predictive& pred, RngStream& rng) {
  if (pred.candidates.empty())
    throw ValidationError("choose: empty predictive");
  double best = *std::max_element(pred.probabilities.begin(),
                                  pred.probabilities.end());
  std::vector<std::size_t> tied;
  for (std::size_t i = 0; i < pred.probabilities.size(); ++i)
    if (pred.probabilities[i] >= best - 1e-12) tied.push_back(i);
  return pred.candidates[tied[rng.uniform_index(tied.size())]];
}

}  // namespace causalgen
