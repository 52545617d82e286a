#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "causalgen/errors.hpp"

namespace causalgen {

struct FeatureDef {
  std::string name;
  std::vector<std::string> values;  // ordered support; order meaningful iff ordinal
  bool ordinal = false;
};

// An object: one value index per feature of the governing space.
using ObjectState = std::vector<int>;

// The finite universe of objects: an ordered list of features, each with a
// finite ordered value list.
class FeatureSpace {
public:
  explicit FeatureSpace(std::vector<FeatureDef> features)
      : features_(std::move(features)) {
    if (features_.empty())
      throw ValidationError("feature space: needs at least 1 feature");
    for (const auto& f : features_) {
      if (f.name.empty())
        throw ValidationError("feature space: feature with empty name");
      if (f.values.size() < 2)
        throw ValidationError("feature '" + f.name +
                              "': needs at least 2 values");
      for (std::size_t i = 0; i < f.values.size(); ++i)
        for (std::size_t j = i + 1; j < f.values.size(); ++j)
          if (f.values[i] == f.values[j])
            throw ValidationError("feature '" + f.name +
                                  "': duplicate value '" + f.values[i] + "'");
    }
  }

  std::size_t feature_count() const { return features_.size(); }
  const FeatureDef& feature(std::size_t i) const { return features_[i]; }
  const std::vector<FeatureDef>& features() const { return features_; }

  std::optional<std::size_t> feature_index(const std::string& name) const {
    for (std::size_t i = 0; i < features_.size(); ++i)
      if (features_[i].name == name) return i;
    return std::nullopt;
  }

  std::optional<int> value_index(std::size_t feature, const std::string& label) const {
    const auto& vals = features_[feature].values;
    auto it = std::find(vals.begin(), vals.end(), label);
    if (it == vals.end()) return std::nullopt;
    return static_cast<int>(it - vals.begin());
  }

  std::size_t value_count(std::size_t feature) const {
    return features_[feature].values.size();
  }

  std::size_t universe_size() const {
    std::size_t n = 1;
    for (const auto& f : features_) n *= f.values.size();
    return n;
  }

  bool contains(const ObjectState& o) const {
    if (o.size() != features_.size()) return false;
    for (std::size_t i = 0; i < o.size(); ++i)
      if (o[i] < 0 || o[i] >= static_cast<int>(features_[i].values.size()))
        return false;
    return true;
  }

  void require_valid(const ObjectState& o, const std::string& context) const {
    if (!contains(o))
      throw ValidationError(context + ": object does not fit the feature space");
  }

  // Flat enumeration index; last feature varies fastest.
  std::size_t flat_index(const ObjectState& o) const {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < features_.size(); ++i)
      idx = idx * features_[i].values.size() + static_cast<std::size_t>(o[i]);
    return idx;
  }

  ObjectState object_at(std::size_t flat) const {
    ObjectState o(features_.size());
    for (std::size_t i = features_.size(); i-- > 0;) {
      std::size_t v = features_[i].values.size();
      o[i] = static_cast<int>(flat % v);
      flat /= v;
    }
    return o;
  }

  std::vector<ObjectState> universe() const {
    std::vector<ObjectState> all;
    all.reserve(universe_size());
    for (std::size_t i = 0; i < universe_size(); ++i) all.push_back(object_at(i));
    return all;
  }

  std::string describe(const ObjectState& o) const {
    std::string s;
    for (std::size_t i = 0; i < features_.size(); ++i) {
      if (i) s += "-";
      s += features_[i].values[static_cast<std::size_t>(o[i])];
    }
    return s;
  }

  ObjectState make_object(const std::vector<std::string>& labels) const {
    if (labels.size() != features_.size())
      throw ValidationError("object literal: wrong number of feature values");
    ObjectState o(features_.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      auto v = value_index(i, labels[i]);
      if (!v)
        throw ValidationError("object literal: value '" + labels[i] +
                              "' not in support of feature '" +
                              features_[i].name + "'");
      o[i] = *v;
    }
    return o;
  }

  bool operator==(const FeatureSpace& other) const {
    if (features_.size() != other.features_.size()) return false;
    for (std::size_t i = 0; i < features_.size(); ++i) {
      if (features_[i].name != other.features_[i].name ||
          features_[i].values != other.features_[i].values ||
          features_[i].ordinal != other.features_[i].ordinal)
        return false;
    }
    return true;
  }

private:
  std::vector<FeatureDef> features_;
};

// One causal interaction: agent acts on recipient, yielding a result.
// The result is absent for generalization queries.
struct Observation {
  ObjectState agent;
  ObjectState recipient;
  std::optional<ObjectState> result;

  bool complete() const { return result.has_value(); }
};

}  // namespace causalgen
