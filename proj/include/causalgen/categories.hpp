#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "causalgen/dsl.hpp"
#include "causalgen/errors.hpp"
#include "causalgen/feature_space.hpp"

namespace causalgen {

// Global parameters of the extended Dirichlet Process.
struct Hyperparams {
  double alpha = 1.0;  // CRP concentration
  double beta = 1.0;   // symmetric Dirichlet pseudo-count per feature value
  double gamma = 0.5;  // agent-focus weight: 1 = agent only, 0 = recipient only

  void validate() const {
    if (alpha <= 0.0) throw ValidationError("hyperparams: alpha must be > 0");
    if (beta < 0.0) throw ValidationError("hyperparams: beta must be >= 0");
    if (gamma < 0.0 || gamma > 1.0)
      throw ValidationError("hyperparams: gamma must be in [0,1]");
  }
};

// Per-role feature value counts of one category's members.
class RoleCounts {
public:
  explicit RoleCounts(const FeatureSpace& space) {
    counts_.resize(space.feature_count());
    for (std::size_t f = 0; f < space.feature_count(); ++f)
      counts_[f].assign(space.value_count(f), 0);
  }

  void add(const ObjectState& o) {
    for (std::size_t f = 0; f < counts_.size(); ++f)
      counts_[f][static_cast<std::size_t>(o[f])] += 1;
    members_ += 1;
  }

  void remove(const ObjectState& o) {
    for (std::size_t f = 0; f < counts_.size(); ++f) {
      int& c = counts_[f][static_cast<std::size_t>(o[f])];
      if (c <= 0) throw ValidationError("role counts: remove below zero");
      c -= 1;
    }
    members_ -= 1;
  }

  int members() const { return members_; }
  const std::vector<std::vector<int>>& table() const { return counts_; }

  // Posterior-predictive probability of one object's features under the
  // collapsed Dirichlet-categorical model. beta = 0 falls back to the
  // empirical mean, uniform when the category is empty.
  double predictive(const ObjectState& o, double beta) const {
    double p = 1.0;
    for (std::size_t f = 0; f < counts_.size(); ++f) {
      const double support = static_cast<double>(counts_[f].size());
      if (members_ == 0 && beta == 0.0) {
        p *= 1.0 / support;
      } else {
        p *= (counts_[f][static_cast<std::size_t>(o[f])] + beta) /
             (members_ + support * beta);
      }
    }
    return p;
  }

  // Exchangeable joint probability of all tallied members' features: the
  // product of sequential predictives, which depends only on the counts.
  // At beta = 0 this degenerates to (1/V per feature) when all members agree
  // and 0 otherwise.
  double joint(double beta) const { return joint_impl(nullptr, beta); }

  // Joint as if `extra` were also a member, without mutating the counts.
  double joint_with(const ObjectState& extra, double beta) const {
    return joint_impl(&extra, beta);
  }

private:
  double joint_impl(const ObjectState* extra, double beta) const {
    const int m = members_ + (extra ? 1 : 0);
    double p = 1.0;
    for (std::size_t f = 0; f < counts_.size(); ++f) {
      const std::size_t support = counts_[f].size();
      if (m == 0) continue;
      if (beta == 0.0) {
        bool concentrated = false;
        for (std::size_t v = 0; v < support; ++v) {
          int c = counts_[f][v] +
                  (extra && (*extra)[f] == static_cast<int>(v) ? 1 : 0);
          if (c == m) concentrated = true;
        }
        p *= concentrated ? 1.0 / static_cast<double>(support) : 0.0;
      } else {
        for (std::size_t v = 0; v < support; ++v) {
          int c = counts_[f][v] +
                  (extra && (*extra)[f] == static_cast<int>(v) ? 1 : 0);
          for (int j = 0; j < c; ++j) p *= beta + j;
        }
        for (int j = 0; j < m; ++j)
          p /= static_cast<double>(support) * beta + j;
      }
    }
    return p;
  }

  std::vector<std::vector<int>> counts_;
  int members_ = 0;
};

// One table of the extended DP: its members, per-role feature statistics and
// the causal function currently attached to it.
class CategoryState {
public:
  explicit CategoryState(const FeatureSpace& space)
      : agent_counts_(space), recipient_counts_(space) {}

  void add(int obs_id, const ObjectState& agent, const ObjectState& recipient) {
    members_.push_back(obs_id);
    agent_counts_.add(agent);
    recipient_counts_.add(recipient);
  }

  void remove(int obs_id, const ObjectState& agent, const ObjectState& recipient) {
    auto it = std::find(members_.begin(), members_.end(), obs_id);
    if (it == members_.end())
      throw ValidationError("category: removing a non-member observation");
    members_.erase(it);
    agent_counts_.remove(agent);
    recipient_counts_.remove(recipient);
  }

  std::size_t size() const { return members_.size(); }
  const std::vector<int>& members() const { return members_; }
  std::vector<int> sorted_members() const {
    std::vector<int> m = members_;
    std::sort(m.begin(), m.end());
    return m;
  }
  const RoleCounts& agent_counts() const { return agent_counts_; }
  const RoleCounts& recipient_counts() const { return recipient_counts_; }
  const RoleCounts& counts(Role role) const {
    return role == Role::agent ? agent_counts_ : recipient_counts_;
  }

  std::optional<CausalFunction> function;

private:
  std::vector<int> members_;
  RoleCounts agent_counts_;
  RoleCounts recipient_counts_;
};

// Mean feature vector of a category for one role: per-feature value
// probabilities under Dirichlet(beta) smoothing.
inline std::vector<std::vector<double>> mean_feature_vector(
    const CategoryState& cat, Role role, double beta, const FeatureSpace& space) {
  const RoleCounts& counts = cat.counts(role);
  std::vector<std::vector<double>> mu(space.feature_count());
  for (std::size_t f = 0; f < space.feature_count(); ++f) {
    const double support = static_cast<double>(space.value_count(f));
    mu[f].resize(space.value_count(f));
    for (std::size_t v = 0; v < mu[f].size(); ++v) {
      if (counts.members() == 0 && beta == 0.0)
        mu[f][v] = 1.0 / support;
      else
        mu[f][v] = (counts.table()[f][v] + beta) /
                   (counts.members() + support * beta);
    }
  }
  return mu;
}

// Mixture of the agent-only and recipient-only feature predictives, weighted
// by the focus parameter.
inline double feature_likelihood(const ObjectState& agent,
                                 const ObjectState& recipient,
                                 const CategoryState& cat,
                                 const Hyperparams& hyper) {
  hyper.validate();
  const double la = cat.agent_counts().predictive(agent, hyper.beta);
  const double lr = cat.recipient_counts().predictive(recipient, hyper.beta);
  return hyper.gamma * la + (1.0 - hyper.gamma) * lr;
}

// Joint feature probability of a whole category under the focus mixture:
// gamma * A(M) + (1-gamma) * R(M), with A and R the per-role exchangeable
// joints. This is the quantity whose predictive ratio drives category
// assignment during collapsed inference.
inline double category_feature_joint(const CategoryState& cat,
                                     const Hyperparams& hyper) {
  const double a = cat.agent_counts().joint(hyper.beta);
  const double r = cat.recipient_counts().joint(hyper.beta);
  return hyper.gamma * a + (1.0 - hyper.gamma) * r;
}

// P(pair joins cat | cat's members) = joint(M ∪ pair) / joint(M). Reduces to
// feature_likelihood for an empty category and at gamma in {0, 1}.
inline double category_pair_affinity(const ObjectState& agent,
                                     const ObjectState& recipient,
                                     const CategoryState& cat,
                                     const Hyperparams& hyper) {
  const double before = category_feature_joint(cat, hyper);
  if (before <= 0.0) return 0.0;
  const double after =
      hyper.gamma * cat.agent_counts().joint_with(agent, hyper.beta) +
      (1.0 - hyper.gamma) *
          cat.recipient_counts().joint_with(recipient, hyper.beta);
  return after / before;
}

// ---------------------------------------------------------------------------
// Partition
// ---------------------------------------------------------------------------

// Assignment of observations to categories. Category ids are stable small
// integers; empty categories are dropped on removal.
class Partition {
public:
  explicit Partition(const FeatureSpace& space) : space_(&space) {}

  const std::map<int, CategoryState>& categories() const { return categories_; }
  std::map<int, CategoryState>& categories() { return categories_; }

  int category_of(int obs_id) const {
    auto it = assignment_.find(obs_id);
    if (it == assignment_.end())
      throw ValidationError("partition: observation not assigned");
    return it->second;
  }

  bool assigned(int obs_id) const { return assignment_.count(obs_id) > 0; }

  std::size_t assigned_count() const { return assignment_.size(); }

  int assign_new(int obs_id, const ObjectState& agent, const ObjectState& recipient) {
    int id = next_id_++;
    auto [it, inserted] = categories_.emplace(id, CategoryState(*space_));
    it->second.add(obs_id, agent, recipient);
    assignment_[obs_id] = id;
    return id;
  }

  void assign(int obs_id, int category_id, const ObjectState& agent,
              const ObjectState& recipient) {
    categories_.at(category_id).add(obs_id, agent, recipient);
    assignment_[obs_id] = category_id;
  }

  void remove(int obs_id, const ObjectState& agent, const ObjectState& recipient) {
    int id = category_of(obs_id);
    CategoryState& cat = categories_.at(id);
    cat.remove(obs_id, agent, recipient);
    assignment_.erase(obs_id);
    if (cat.size() == 0) categories_.erase(id);
  }

  std::size_t category_count() const { return categories_.size(); }

private:
  const FeatureSpace* space_;
  std::map<int, CategoryState> categories_;
  std::map<int, int> assignment_;
  int next_id_ = 1;
};

// CRP assignment distribution for one held-out observation: existing
// categories in ascending id order, then the NEW-category slot last.
struct CrpWeights {
  std::vector<int> category_ids;   // parallel to probabilities[0..k-1]
  std::vector<double> probabilities;  // last entry is NEW
};

inline CrpWeights crp_weights(const Partition& partition, int obs_id,
                              double alpha) {
  if (alpha <= 0.0) throw ValidationError("crp_weights: alpha must be > 0");
  if (partition.assigned(obs_id))
    throw ValidationError("crp_weights: observation still assigned (collapsed "
                          "form expects it removed)");
  CrpWeights out;
  const double denom = static_cast<double>(partition.assigned_count()) + alpha;
  for (const auto& [id, cat] : partition.categories()) {
    out.category_ids.push_back(id);
    out.probabilities.push_back(static_cast<double>(cat.size()) / denom);
  }
  out.probabilities.push_back(alpha / denom);
  return out;
}

// Diagnostic JSON snapshot: member lists, role count tables and the attached
// function in canonical text form.
inline nlohmann::json partition_to_json(const Partition& partition,
                                        const FeatureSpace& space) {
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& [id, cat] : partition.categories()) {
    nlohmann::json cj;
    cj["id"] = id;
    cj["members"] = cat.sorted_members();
    nlohmann::json roles;
    for (Role role : {Role::agent, Role::recipient}) {
      nlohmann::json tables = nlohmann::json::object();
      for (std::size_t f = 0; f < space.feature_count(); ++f) {
        nlohmann::json per = nlohmann::json::object();
        for (std::size_t v = 0; v < space.value_count(f); ++v)
          per[space.feature(f).values[v]] = cat.counts(role).table()[f][v];
        tables[space.feature(f).name] = per;
      }
      roles[role == Role::agent ? "agent" : "recipient"] = tables;
    }
    cj["counts"] = roles;
    if (cat.function)
      cj["function"] = function_to_text(*cat.function, space);
    cats.push_back(cj);
  }
  return nlohmann::json{{"categories", cats}};
}

}  // namespace causalgen
