#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "causalgen/errors.hpp"
#include "causalgen/feature_space.hpp"
#include "causalgen/rng.hpp"

namespace causalgen {

enum class Role { agent, recipient };

inline const char* role_letter(Role r) { return r == Role::agent ? "a" : "r"; }

// Right-hand side of an assertion: where the result object's feature value
// comes from. Relative references always use the assertion's own target
// feature, read off the agent or the recipient.
struct Reference {
  enum class Kind { agent, recipient, absolute, plus, greater, less };

  Kind kind = Kind::agent;
  Role base = Role::agent;  // for plus / greater / less
  int offset = 0;           // for plus: signed step along the ordinal support
  int value = 0;            // for absolute: value index in the target's support

  bool operator==(const Reference&) const = default;
};

// One feature constraint on the result object, e.g. color(rp)<-color(a).
// Negation complements the satisfying set within the feature's support.
struct CausalAssertion {
  std::size_t target = 0;  // feature index on the result object
  bool negated = false;
  Reference reference;

  bool operator==(const CausalAssertion&) const = default;
};

// A causal law: a conjunction of assertions over pairwise-distinct target
// features. Canonical form keeps assertions sorted by target index.
struct CausalFunction {
  std::vector<CausalAssertion> assertions;

  void canonicalize() {
    std::stable_sort(assertions.begin(), assertions.end(),
                     [](const CausalAssertion& x, const CausalAssertion& y) {
                       return x.target < y.target;
                     });
  }

  bool operator==(const CausalFunction&) const = default;
};

struct GrammarConfig {
  std::size_t max_conjuncts = 0;  // 0 = bind up to every feature
  double and_probability = 0.5;   // chance of binding an additional feature
  double epsilon = 0.0;           // soft-likelihood mixing weight, in [0,1)
  bool extended_relations = false;  // adds +1, -1, >, < on ordinal features
  std::size_t enumeration_limit = 2'000'000;

  std::size_t cap_for(const FeatureSpace& space) const {
    return max_conjuncts == 0 ? space.feature_count() : max_conjuncts;
  }

  void validate(const FeatureSpace& space) const {
    if (and_probability < 0.0 || and_probability > 1.0)
      throw ValidationError("grammar config: and_probability outside [0,1]");
    if (epsilon < 0.0 || epsilon >= 1.0)
      throw ValidationError("grammar config: epsilon outside [0,1)");
    if (cap_for(space) < 1)
      throw ValidationError("grammar config: max_conjuncts must be >= 1");
  }
};

// ---------------------------------------------------------------------------
// Assertion semantics
// ---------------------------------------------------------------------------

inline bool reference_needs_ordinal(const Reference& ref) {
  return ref.kind == Reference::Kind::plus ||
         ref.kind == Reference::Kind::greater ||
         ref.kind == Reference::Kind::less;
}

// Values of the target feature that satisfy one assertion for a given pair.
// Out-of-support arithmetic contributes nothing; negation then complements
// within the support.
inline std::vector<int> satisfying_values(const CausalAssertion& assertion,
                                          const FeatureSpace& space,
                                          const ObjectState& agent,
                                          const ObjectState& recipient) {
  const std::size_t target = assertion.target;
  const int support = static_cast<int>(space.value_count(target));
  std::vector<char> in(static_cast<std::size_t>(support), 0);
  const Reference& ref = assertion.reference;
  const auto base_value = [&](Role role) {
    return role == Role::agent ? agent[target] : recipient[target];
  };
  switch (ref.kind) {
    case Reference::Kind::agent:
      in[static_cast<std::size_t>(agent[target])] = 1;
      break;
    case Reference::Kind::recipient:
      in[static_cast<std::size_t>(recipient[target])] = 1;
      break;
    case Reference::Kind::absolute:
      if (ref.value >= 0 && ref.value < support)
        in[static_cast<std::size_t>(ref.value)] = 1;
      break;
    case Reference::Kind::plus: {
      int v = base_value(ref.base) + ref.offset;
      if (v >= 0 && v < support) in[static_cast<std::size_t>(v)] = 1;
      break;
    }
    case Reference::Kind::greater:
      for (int v = base_value(ref.base) + 1; v < support; ++v)
        in[static_cast<std::size_t>(v)] = 1;
      break;
    case Reference::Kind::less:
      for (int v = 0; v < base_value(ref.base); ++v)
        in[static_cast<std::size_t>(v)] = 1;
      break;
  }
  std::vector<int> out;
  for (int v = 0; v < support; ++v) {
    bool sat = in[static_cast<std::size_t>(v)] != 0;
    if (assertion.negated) sat = !sat;
    if (sat) out.push_back(v);
  }
  return out;
}

// The set of result objects a function allows for a pair, stored as one
// allowed value set per feature (the full set is their Cartesian product).
// Unasserted features keep the recipient's value.
class OutcomeDomain {
public:
  OutcomeDomain(const FeatureSpace& space, std::vector<std::vector<int>> allowed)
      : space_(&space), allowed_(std::move(allowed)) {}

  std::size_t size() const {
    std::size_t n = 1;
    for (const auto& vals : allowed_) {
      n *= vals.size();
      if (n == 0) return 0;
    }
    return n;
  }

  bool empty() const { return size() == 0; }

  bool contains(const ObjectState& o) const {
    for (std::size_t f = 0; f < allowed_.size(); ++f)
      if (std::find(allowed_[f].begin(), allowed_[f].end(), o[f]) ==
          allowed_[f].end())
        return false;
    return true;
  }

  const std::vector<std::vector<int>>& allowed_per_feature() const {
    return allowed_;
  }

  std::vector<ObjectState> enumerate() const {
    std::vector<ObjectState> out;
    if (empty()) return out;
    out.reserve(size());
    ObjectState current(allowed_.size());
    enumerate_rec(0, current, out);
    return out;
  }

private:
  void enumerate_rec(std::size_t f, ObjectState& current,
                     std::vector<ObjectState>& out) const {
    if (f == allowed_.size()) {
      out.push_back(current);
      return;
    }
    for (int v : allowed_[f]) {
      current[f] = v;
      enumerate_rec(f + 1, current, out);
    }
  }

  const FeatureSpace* space_;
  std::vector<std::vector<int>> allowed_;
};

inline OutcomeDomain apply_function(const CausalFunction& f,
                                    const ObjectState& agent,
                                    const ObjectState& recipient,
                                    const FeatureSpace& space) {
  space.require_valid(agent, "apply_function agent");
  space.require_valid(recipient, "apply_function recipient");
  std::vector<std::vector<int>> allowed(space.feature_count());
  for (std::size_t feat = 0; feat < space.feature_count(); ++feat)
    allowed[feat] = {recipient[feat]};  // inertia
  for (const auto& assertion : f.assertions)
    allowed[assertion.target] =
        satisfying_values(assertion, space, agent, recipient);
  return OutcomeDomain(space, std::move(allowed));
}

// Likelihood of a complete observation under a function: uniform over the
// outcome domain when the result is inside it, zero otherwise. With
// epsilon > 0 the hard value is mixed with a uniform over the whole result
// universe.
inline double likelihood(const Observation& d, const CausalFunction& f,
                         const FeatureSpace& space, const GrammarConfig& cfg) {
  if (!d.complete())
    throw ValidationError("likelihood: observation has no result");
  OutcomeDomain dom = apply_function(f, d.agent, d.recipient, space);
  const std::size_t n = dom.size();
  double hard = 0.0;
  if (n > 0 && dom.contains(*d.result)) hard = 1.0 / static_cast<double>(n);
  if (cfg.epsilon > 0.0)
    return (1.0 - cfg.epsilon) * hard +
           cfg.epsilon / static_cast<double>(space.universe_size());
  return hard;
}

// ---------------------------------------------------------------------------
// Grammar pricing, sampling and enumeration
// ---------------------------------------------------------------------------

namespace detail {

// Whether the extended reference row applies to this feature.
inline bool extended_row(const FeatureSpace& space, const GrammarConfig& cfg,
                         std::size_t feature) {
  return cfg.extended_relations && space.feature(feature).ordinal;
}

// Probability of the reference choice inside one assertion, i.e. everything
// below the negation row. The base grammar splits reference mass 1/2 relative
// vs 1/2 absolute; the extended row spreads it uniformly over the six options
// {copy, +1, -1, >, <, absolute}.
inline double reference_probability(const Reference& ref,
                                    const FeatureSpace& space,
                                    const GrammarConfig& cfg,
                                    std::size_t feature) {
  const double support = static_cast<double>(space.value_count(feature));
  if (extended_row(space, cfg, feature)) {
    switch (ref.kind) {
      case Reference::Kind::absolute:
        return (1.0 / 6.0) / support;
      default:
        return (1.0 / 6.0) / 2.0;  // agent vs recipient base
    }
  }
  switch (ref.kind) {
    case Reference::Kind::agent:
    case Reference::Kind::recipient:
      return 0.5 * 0.5;
    case Reference::Kind::absolute:
      return 0.5 / support;
    default:
      return 0.0;  // not derivable from the base row
  }
}

inline void validate_assertion(const CausalAssertion& assertion,
                               const FeatureSpace& space,
                               const GrammarConfig& cfg) {
  if (assertion.target >= space.feature_count())
    throw ValidationError("assertion: target feature out of range");
  const FeatureDef& fd = space.feature(assertion.target);
  const Reference& ref = assertion.reference;
  if (reference_needs_ordinal(ref)) {
    if (!fd.ordinal)
      throw ValidationError("assertion on '" + fd.name +
                            "': ordinal relation on a non-ordinal feature");
    if (!cfg.extended_relations)
      throw ValidationError("assertion on '" + fd.name +
                            "': ordinal relation without extended_relations");
  }
  if (ref.kind == Reference::Kind::plus && ref.offset != 1 && ref.offset != -1)
    throw ValidationError("assertion on '" + fd.name +
                          "': the grammar only derives +1/-1 steps");
  if (ref.kind == Reference::Kind::absolute &&
      (ref.value < 0 || ref.value >= static_cast<int>(fd.values.size())))
    throw ValidationError("assertion on '" + fd.name +
                          "': absolute value outside the support");
}

inline void validate_function(const CausalFunction& f, const FeatureSpace& space,
                              const GrammarConfig& cfg) {
  if (f.assertions.empty())
    throw ValidationError("causal function: needs at least one assertion");
  if (f.assertions.size() > space.feature_count())
    throw ValidationError("causal function: more assertions than features");
  for (std::size_t i = 0; i < f.assertions.size(); ++i) {
    validate_assertion(f.assertions[i], space, cfg);
    for (std::size_t j = i + 1; j < f.assertions.size(); ++j)
      if (f.assertions[i].target == f.assertions[j].target)
        throw ValidationError("causal function: duplicate target feature '" +
                              space.feature(f.assertions[i].target).name + "'");
  }
}

// Mass contributed by the feature-binding and continuation choices for a
// canonical k-assertion function over n features. Features are bound without
// replacement, so all k! binding orders collapse onto the same canonical
// function; once every feature is bound the grammar stops with certainty.
inline double structure_prior(std::size_t k, std::size_t n, double and_p) {
  double pick = 1.0;
  for (std::size_t j = 0; j < k; ++j)
    pick *= static_cast<double>(j + 1) / static_cast<double>(n - j);
  double cont = 1.0;
  for (std::size_t j = 0; j + 1 < k; ++j) cont *= and_p;
  if (k < n) cont *= (1.0 - and_p);
  return pick * cont;
}

// All derivable assertions for one feature, each with the probability of its
// negation + reference choices, listed in canonical order.
inline std::vector<std::pair<CausalAssertion, double>> assertion_options(
    const FeatureSpace& space, const GrammarConfig& cfg, std::size_t feature) {
  std::vector<Reference> refs;
  refs.push_back({Reference::Kind::agent, Role::agent, 0, 0});
  refs.push_back({Reference::Kind::recipient, Role::agent, 0, 0});
  if (extended_row(space, cfg, feature)) {
    for (Role role : {Role::agent, Role::recipient})
      refs.push_back({Reference::Kind::plus, role, +1, 0});
    for (Role role : {Role::agent, Role::recipient})
      refs.push_back({Reference::Kind::plus, role, -1, 0});
    for (Role role : {Role::agent, Role::recipient})
      refs.push_back({Reference::Kind::greater, role, 0, 0});
    for (Role role : {Role::agent, Role::recipient})
      refs.push_back({Reference::Kind::less, role, 0, 0});
  }
  for (int v = 0; v < static_cast<int>(space.value_count(feature)); ++v)
    refs.push_back({Reference::Kind::absolute, Role::agent, 0, v});

  std::vector<std::pair<CausalAssertion, double>> out;
  out.reserve(refs.size() * 2);
  for (bool negated : {false, true})
    for (const Reference& ref : refs)
      out.push_back({CausalAssertion{feature, negated, ref},
                     0.5 * reference_probability(ref, space, cfg, feature)});
  return out;
}

}  // namespace detail

// Prior mass of one causal function under the grammar: the product of the
// probabilities of every production used to derive it, summed over binding
// orders (which all carry equal mass).
inline double prior_probability(const CausalFunction& f,
                                const FeatureSpace& space,
                                const GrammarConfig& cfg) {
  cfg.validate(space);
  detail::validate_function(f, space, cfg);
  const std::size_t k = f.assertions.size();
  const std::size_t n = space.feature_count();
  double p = detail::structure_prior(k, n, cfg.and_probability);
  for (const auto& assertion : f.assertions)
    p *= 0.5 * detail::reference_probability(assertion.reference, space, cfg,
                                             assertion.target);
  return p;
}

// Draw one function from the grammar. Features are bound without replacement;
// when all are bound the "bind additional" row renormalizes to stopping.
inline CausalFunction sample_function(const FeatureSpace& space,
                                      const GrammarConfig& cfg, RngStream& rng) {
  cfg.validate(space);
  std::vector<std::size_t> remaining(space.feature_count());
  std::iota(remaining.begin(), remaining.end(), 0);
  CausalFunction f;
  for (;;) {
    std::size_t pick = rng.uniform_index(remaining.size());
    std::size_t feature = remaining[pick];
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));

    CausalAssertion assertion;
    assertion.target = feature;
    assertion.negated = rng.bernoulli(0.5);
    if (detail::extended_row(space, cfg, feature)) {
      switch (rng.uniform_index(6)) {
        case 0:
          assertion.reference.kind = rng.bernoulli(0.5)
                                         ? Reference::Kind::agent
                                         : Reference::Kind::recipient;
          break;
        case 1:
          assertion.reference.kind = Reference::Kind::plus;
          assertion.reference.offset = 1;
          break;
        case 2:
          assertion.reference.kind = Reference::Kind::plus;
          assertion.reference.offset = -1;
          break;
        case 3:
          assertion.reference.kind = Reference::Kind::greater;
          break;
        case 4:
          assertion.reference.kind = Reference::Kind::less;
          break;
        case 5:
          assertion.reference.kind = Reference::Kind::absolute;
          break;
      }
      if (assertion.reference.kind == Reference::Kind::absolute) {
        assertion.reference.value =
            static_cast<int>(rng.uniform_index(space.value_count(feature)));
      } else if (assertion.reference.kind != Reference::Kind::agent &&
                 assertion.reference.kind != Reference::Kind::recipient) {
        assertion.reference.base =
            rng.bernoulli(0.5) ? Role::agent : Role::recipient;
      }
    } else {
      if (rng.bernoulli(0.5)) {  // relative
        assertion.reference.kind = rng.bernoulli(0.5)
                                       ? Reference::Kind::agent
                                       : Reference::Kind::recipient;
      } else {
        assertion.reference.kind = Reference::Kind::absolute;
        assertion.reference.value =
            static_cast<int>(rng.uniform_index(space.value_count(feature)));
      }
    }
    f.assertions.push_back(assertion);

    if (remaining.empty()) break;
    if (!rng.bernoulli(cfg.and_probability)) break;
  }
  f.canonicalize();
  return f;
}

// Complete enumeration of derivable functions with up to `cap` assertions,
// in deterministic canonical order, with their exact prior mass.
inline std::vector<std::pair<CausalFunction, double>> enumerate_functions(
    const FeatureSpace& space, const GrammarConfig& cfg) {
  cfg.validate(space);
  const std::size_t n = space.feature_count();
  const std::size_t cap = cfg.cap_for(space);
  if (cap > n)
    throw ValidationError("enumerate_functions: cap exceeds feature count");

  std::vector<std::vector<std::pair<CausalAssertion, double>>> options(n);
  for (std::size_t feat = 0; feat < n; ++feat)
    options[feat] = detail::assertion_options(space, cfg, feat);

  // Overflow guard before materializing anything.
  double projected = 0.0;
  const auto count_subsets = [&](auto&& self, std::size_t start,
                                 std::size_t k, double combo) -> void {
    if (k == 0) {
      projected += combo;
      return;
    }
    for (std::size_t feat = start; feat + k <= n; ++feat)
      self(self, feat + 1, k - 1,
           combo * static_cast<double>(options[feat].size()));
  };
  for (std::size_t k = 1; k <= cap; ++k) count_subsets(count_subsets, 0, k, 1.0);
  if (projected > static_cast<double>(cfg.enumeration_limit))
    throw EnumerationOverflowError(
        "enumerate_functions: projected " + std::to_string(projected) +
        " expressions exceeds limit " + std::to_string(cfg.enumeration_limit));

  std::vector<std::pair<CausalFunction, double>> out;
  std::vector<std::size_t> chosen;
  const auto emit_combos = [&](auto&& self, std::size_t idx, CausalFunction f,
                               double p) -> void {
    if (idx == chosen.size()) {
      f.canonicalize();
      out.push_back({std::move(f), p});
      return;
    }
    for (const auto& [assertion, ap] : options[chosen[idx]]) {
      CausalFunction g = f;
      g.assertions.push_back(assertion);
      self(self, idx + 1, std::move(g), p * ap);
    }
  };
  const auto subsets = [&](auto&& self, std::size_t start, std::size_t k,
                           double structure) -> void {
    if (k == 0) {
      emit_combos(emit_combos, 0, CausalFunction{}, structure);
      return;
    }
    for (std::size_t feat = start; feat < n; ++feat) {
      chosen.push_back(feat);
      self(self, feat + 1, k - 1, structure);
      chosen.pop_back();
    }
  };
  for (std::size_t k = 1; k <= cap; ++k) {
    chosen.clear();
    subsets(subsets, 0, k,
            detail::structure_prior(k, n, cfg.and_probability));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Canonical text form
// ---------------------------------------------------------------------------

inline std::string reference_to_text(const Reference& ref,
                                     const FeatureSpace& space,
                                     std::size_t feature) {
  const std::string name = space.feature(feature).name;
  switch (ref.kind) {
    case Reference::Kind::agent:
      return name + "(a)";
    case Reference::Kind::recipient:
      return name + "(r)";
    case Reference::Kind::absolute:
      return space.feature(feature).values[static_cast<std::size_t>(ref.value)];
    case Reference::Kind::plus: {
      std::string base = name + "(" + role_letter(ref.base) + ")";
      return base + (ref.offset >= 0 ? "+" : "-") +
             std::to_string(std::abs(ref.offset));
    }
    case Reference::Kind::greater:
      return ">" + name + "(" + role_letter(ref.base) + ")";
    case Reference::Kind::less:
      return "<" + name + "(" + role_letter(ref.base) + ")";
  }
  return {};
}

inline std::string assertion_to_text(const CausalAssertion& assertion,
                                     const FeatureSpace& space) {
  std::string rhs = reference_to_text(assertion.reference, space, assertion.target);
  if (assertion.negated) rhs = "not(" + rhs + ")";
  return space.feature(assertion.target).name + "(rp)<-" + rhs;
}

inline std::string function_to_text(const CausalFunction& f,
                                    const FeatureSpace& space) {
  CausalFunction c = f;
  c.canonicalize();
  if (c.assertions.size() == 1) return assertion_to_text(c.assertions[0], space);
  std::string s = "and(";
  for (std::size_t i = 0; i < c.assertions.size(); ++i) {
    if (i) s += ", ";
    s += assertion_to_text(c.assertions[i], space);
  }
  return s + ")";
}

namespace detail {

struct TextCursor {
  const std::string& text;
  std::size_t pos = 0;

  bool eat(const std::string& token) {
    if (text.compare(pos, token.size(), token) == 0) {
      pos += token.size();
      return true;
    }
    return false;
  }
  void expect(const std::string& token, const std::string& what) {
    if (!eat(token))
      throw ValidationError("parse error at offset " + std::to_string(pos) +
                            ": expected " + what);
  }
  bool done() const { return pos >= text.size(); }
};

inline Reference parse_reference(TextCursor& cur, const FeatureSpace& space,
                                 std::size_t target) {
  const std::string& name = space.feature(target).name;
  Reference ref;
  auto parse_base = [&]() {
    cur.expect(name + "(", "reference to feature '" + name + "'");
    if (cur.eat("a)")) return Role::agent;
    if (cur.eat("r)")) return Role::recipient;
    throw ValidationError("parse error: reference base must be (a) or (r)");
  };
  if (cur.eat(">")) {
    ref.kind = Reference::Kind::greater;
    ref.base = parse_base();
    return ref;
  }
  if (cur.eat("<")) {
    ref.kind = Reference::Kind::less;
    ref.base = parse_base();
    return ref;
  }
  if (cur.text.compare(cur.pos, name.size() + 1, name + "(") == 0) {
    Role base = parse_base();
    char sign = 0;
    if (cur.eat("+"))
      sign = '+';
    else if (cur.eat("-"))
      sign = '-';
    if (sign != 0) {
      std::size_t start = cur.pos;
      while (cur.pos < cur.text.size() &&
             std::isdigit(static_cast<unsigned char>(cur.text[cur.pos])))
        ++cur.pos;
      if (cur.pos == start)
        throw ValidationError("parse error: expected digits after +/-");
      int k = std::stoi(cur.text.substr(start, cur.pos - start));
      ref.kind = Reference::Kind::plus;
      ref.base = base;
      ref.offset = sign == '-' ? -k : k;
      return ref;
    }
    ref.kind = base == Role::agent ? Reference::Kind::agent
                                   : Reference::Kind::recipient;
    return ref;
  }
  // Absolute value label: runs until a delimiter.
  std::size_t start = cur.pos;
  while (cur.pos < cur.text.size() && cur.text[cur.pos] != ',' &&
         cur.text[cur.pos] != ')')
    ++cur.pos;
  std::string label = cur.text.substr(start, cur.pos - start);
  auto value = space.value_index(target, label);
  if (!value)
    throw ValidationError("parse error: '" + label +
                          "' is not a value of feature '" + name + "'");
  ref.kind = Reference::Kind::absolute;
  ref.value = *value;
  return ref;
}

inline CausalAssertion parse_assertion(TextCursor& cur, const FeatureSpace& space) {
  std::size_t start = cur.pos;
  while (cur.pos < cur.text.size() && cur.text[cur.pos] != '(') ++cur.pos;
  std::string name = cur.text.substr(start, cur.pos - start);
  auto feature = space.feature_index(name);
  if (!feature)
    throw ValidationError("parse error: unknown feature '" + name + "'");
  CausalAssertion assertion;
  assertion.target = *feature;
  cur.expect("(rp)<-", "'(rp)<-'");
  if (cur.eat("not(")) {
    assertion.negated = true;
    assertion.reference = parse_reference(cur, space, assertion.target);
    cur.expect(")", "closing ')' of not(...)");
  } else {
    assertion.reference = parse_reference(cur, space, assertion.target);
  }
  return assertion;
}

}  // namespace detail

// Parses exactly the canonical text form produced by function_to_text.
inline CausalFunction parse_function(const std::string& text,
                                     const FeatureSpace& space) {
  detail::TextCursor cur{text};
  CausalFunction f;
  if (cur.eat("and(")) {
    f.assertions.push_back(detail::parse_assertion(cur, space));
    while (cur.eat(", "))
      f.assertions.push_back(detail::parse_assertion(cur, space));
    cur.expect(")", "closing ')' of and(...)");
    if (f.assertions.size() < 2)
      throw ValidationError("parse error: and(...) needs at least 2 assertions");
  } else {
    f.assertions.push_back(detail::parse_assertion(cur, space));
  }
  if (!cur.done())
    throw ValidationError("parse error: trailing input at offset " +
                          std::to_string(cur.pos));
  f.canonicalize();
  for (std::size_t i = 0; i + 1 < f.assertions.size(); ++i)
    if (f.assertions[i].target == f.assertions[i + 1].target)
      throw ValidationError("parse error: duplicate target feature");
  return f;
}

// ---------------------------------------------------------------------------
// Space + grammar JSON document
// ---------------------------------------------------------------------------

struct SpaceConfig {
  FeatureSpace space;
  GrammarConfig grammar;
};

inline SpaceConfig load_space_config(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("features"))
    throw ValidationError("space config: missing 'features'");
  std::vector<FeatureDef> defs;
  for (const auto& fj : doc.at("features")) {
    FeatureDef def;
    if (!fj.contains("name") || !fj.at("name").is_string())
      throw ValidationError("space config: feature missing string 'name'");
    def.name = fj.at("name").get<std::string>();
    if (!fj.contains("values") || !fj.at("values").is_array())
      throw ValidationError("space config: feature '" + def.name +
                            "' missing array 'values'");
    for (const auto& v : fj.at("values")) {
      if (!v.is_string())
        throw ValidationError("space config: feature '" + def.name +
                              "' has a non-string value label");
      def.values.push_back(v.get<std::string>());
    }
    def.ordinal = fj.value("ordinal", false);
    defs.push_back(std::move(def));
  }
  GrammarConfig cfg;
  cfg.extended_relations = doc.value("extended_relations", false);
  cfg.epsilon = doc.value("epsilon", 0.0);
  cfg.and_probability = doc.value("conjunction_probability", 0.5);
  cfg.max_conjuncts = doc.value("max_conjuncts", std::size_t{0});
  FeatureSpace space(std::move(defs));
  cfg.validate(space);
  return SpaceConfig{std::move(space), cfg};
}

inline nlohmann::json space_config_to_json(const FeatureSpace& space,
                                           const GrammarConfig& cfg) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& f : space.features()) {
    nlohmann::json fj{{"name", f.name}, {"values", f.values}};
    if (f.ordinal) fj["ordinal"] = true;
    features.push_back(fj);
  }
  nlohmann::json doc{{"features", features},
                     {"extended_relations", cfg.extended_relations},
                     {"epsilon", cfg.epsilon}};
  return doc;
}

inline nlohmann::json object_to_json(const ObjectState& o,
                                     const FeatureSpace& space) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t f = 0; f < space.feature_count(); ++f)
    j[space.feature(f).name] =
        space.feature(f).values[static_cast<std::size_t>(o[f])];
  return j;
}

inline ObjectState object_from_json(const nlohmann::json& j,
                                    const FeatureSpace& space,
                                    const std::string& context) {
  if (!j.is_object())
    throw ValidationError(context + ": object must be a {feature: value} map");
  ObjectState o(space.feature_count());
  std::vector<bool> seen(space.feature_count(), false);
  for (const auto& [key, val] : j.items()) {
    auto feature = space.feature_index(key);
    if (!feature)
      throw ValidationError(context + ": unknown feature '" + key + "'");
    if (!val.is_string())
      throw ValidationError(context + ": value of '" + key +
                            "' must be a string label");
    auto value = space.value_index(*feature, val.get<std::string>());
    if (!value)
      throw ValidationError(context + ": value '" + val.get<std::string>() +
                            "' not in support of feature '" + key + "'");
    o[*feature] = *value;
    seen[*feature] = true;
  }
  for (std::size_t f = 0; f < space.feature_count(); ++f)
    if (!seen[f])
      throw ValidationError(context + ": missing feature '" +
                            space.feature(f).name + "'");
  return o;
}

// ---------------------------------------------------------------------------
// Hypothesis set: the enumerated grammar as a reusable table
// ---------------------------------------------------------------------------

// The enumerated function space with priors, shared read-only by inference,
// prediction and simulation code.
class HypothesisSet {
public:
  HypothesisSet(FeatureSpace space, GrammarConfig cfg)
      : space_(std::move(space)), cfg_(cfg) {
    auto listed = enumerate_functions(space_, cfg_);
    functions_.reserve(listed.size());
    priors_.reserve(listed.size());
    for (auto& [fn, p] : listed) {
      functions_.push_back(std::move(fn));
      priors_.push_back(p);
    }
  }

  const FeatureSpace& space() const { return space_; }
  const GrammarConfig& grammar() const { return cfg_; }
  std::size_t size() const { return functions_.size(); }
  const CausalFunction& function(std::size_t i) const { return functions_[i]; }
  double prior(std::size_t i) const { return priors_[i]; }
  const std::vector<double>& priors() const { return priors_; }

  std::vector<double> likelihood_row(const Observation& d) const {
    std::vector<double> row(functions_.size());
    for (std::size_t i = 0; i < functions_.size(); ++i)
      row[i] = likelihood(d, functions_[i], space_, cfg_);
    return row;
  }

  // Unnormalized posterior over functions given complete observations.
  // Throws when no enumerated function explains them all.
  std::vector<double> posterior_weights(
      const std::vector<Observation>& data,
      const std::vector<int>& member_ids = {}) const {
    std::vector<double> w = priors_;
    for (const auto& d : data) {
      for (std::size_t i = 0; i < w.size(); ++i)
        if (w[i] > 0.0) w[i] *= likelihood(d, functions_[i], space_, cfg_);
    }
    double total = std::accumulate(w.begin(), w.end(), 0.0);
    if (total <= 0.0)
      throw NoConsistentFunctionError(
          "no enumerated causal function is consistent with the observations",
          member_ids);
    return w;
  }

  // Prior-predictive outcome distribution over the full universe for a pair,
  // indexed by flat object index.
  std::vector<double> prior_predictive_outcomes(const ObjectState& agent,
                                                const ObjectState& recipient) const {
    return mixture_outcomes(priors_, agent, recipient);
  }

  // Σ_i w̃_i · P(outcome | f_i, a, r) with w̃ the normalized weights. A
  // function whose hard domain is empty contributes nothing, so the result
  // can be a sub-distribution; callers renormalize after restricting to
  // their candidate set.
  std::vector<double> mixture_outcomes(const std::vector<double>& weights,
                                       const ObjectState& agent,
                                       const ObjectState& recipient) const {
    std::vector<double> mass(space_.universe_size(), 0.0);
    const double eps = cfg_.epsilon;
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (total <= 0.0) return mass;
    for (std::size_t i = 0; i < functions_.size(); ++i) {
      if (weights[i] <= 0.0) continue;
      const double w = weights[i] / total;
      OutcomeDomain dom = apply_function(functions_[i], agent, recipient, space_);
      std::size_t n = dom.size();
      if (n > 0) {
        double per = w * (1.0 - eps) / static_cast<double>(n);
        for (const auto& o : dom.enumerate()) mass[space_.flat_index(o)] += per;
      }
      if (eps > 0.0) {
        double per = w * eps / static_cast<double>(mass.size());
        for (double& m : mass) m += per;
      }
    }
    return mass;
  }

private:
  FeatureSpace space_;
  GrammarConfig cfg_;
  std::vector<CausalFunction> functions_;
  std::vector<double> priors_;
};

}  // namespace causalgen
