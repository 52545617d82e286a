#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "causalgen/dsl.hpp"
#include "causalgen/errors.hpp"
#include "causalgen/process.hpp"

namespace causalgen {

enum class Regime { near, far, random };

inline Regime parse_regime(const std::string& s) {
  if (s == "near") return Regime::near;
  if (s == "far") return Regime::far;
  if (s == "random") return Regime::random;
  throw ValidationError("unknown regime '" + s + "' (near|far|random)");
}

inline const char* regime_name(Regime r) {
  switch (r) {
    case Regime::near: return "near";
    case Regime::far: return "far";
    default: return "random";
  }
}

struct ConditionMeta {
  int experiment = 0;  // 1 or 2; 0 when unstated
  std::optional<int> rule;
  std::string evidence_balance;  // "fixed_agent" / "fixed_recipient" / ""
};

// A fully materialized experimental condition: stimulus space, learning
// observations and the canonical-order generalization tasks.
struct Condition {
  std::string id;
  FeatureSpace space;
  GrammarConfig grammar;
  std::vector<Observation> learning;
  std::vector<Task> tasks;
  ConditionMeta meta;

  std::size_t scored_task_count() const {
    std::size_t n = 0;
    for (const auto& t : tasks)
      if (t.scored) ++n;
    return n;
  }
};

inline Condition load_condition(const nlohmann::json& doc,
                                const std::string& context) {
  if (!doc.is_object()) throw ValidationError(context + ": not a JSON object");
  for (const char* key : {"id", "space", "learning", "tasks"})
    if (!doc.contains(key))
      throw ValidationError(context + ": missing field '" + key + "'");

  Condition cond{doc.at("id").get<std::string>(),
                 FeatureSpace({FeatureDef{"_", {"0", "1"}, false}}),
                 GrammarConfig{},
                 {},
                 {},
                 {}};
  SpaceConfig sc = load_space_config(doc.at("space"));
  cond.space = std::move(sc.space);
  cond.grammar = sc.grammar;

  for (std::size_t i = 0; i < doc.at("learning").size(); ++i) {
    const auto& lj = doc.at("learning")[i];
    const std::string ctx = context + ": learning[" + std::to_string(i) + "]";
    for (const char* key : {"a", "r", "rp"})
      if (!lj.contains(key))
        throw ValidationError(ctx + ": missing field '" + key + "'");
    Observation d;
    d.agent = object_from_json(lj.at("a"), cond.space, ctx + ".a");
    d.recipient = object_from_json(lj.at("r"), cond.space, ctx + ".r");
    d.result = object_from_json(lj.at("rp"), cond.space, ctx + ".rp");
    cond.learning.push_back(std::move(d));
  }

  for (std::size_t i = 0; i < doc.at("tasks").size(); ++i) {
    const auto& tj = doc.at("tasks")[i];
    const std::string ctx = context + ": tasks[" + std::to_string(i) + "]";
    for (const char* key : {"a", "r", "candidates"})
      if (!tj.contains(key))
        throw ValidationError(ctx + ": missing field '" + key + "'");
    Task t;
    t.agent = object_from_json(tj.at("a"), cond.space, ctx + ".a");
    t.recipient = object_from_json(tj.at("r"), cond.space, ctx + ".r");
    if (tj.at("candidates").is_string()) {
      if (tj.at("candidates").get<std::string>() != "all")
        throw ValidationError(ctx + ".candidates: expected \"all\" or an array");
      t.candidates = cond.space.universe();
    } else {
      std::set<std::size_t> seen;
      for (const auto& cj : tj.at("candidates")) {
        ObjectState o = object_from_json(cj, cond.space, ctx + ".candidates[]");
        if (!seen.insert(cond.space.flat_index(o)).second)
          throw ValidationError(ctx + ".candidates: duplicate candidate object");
        t.candidates.push_back(std::move(o));
      }
    }
    if (t.candidates.empty())
      throw ValidationError(ctx + ".candidates: empty candidate set");
    t.scored = tj.value("scored", true);
    cond.tasks.push_back(std::move(t));
  }

  if (doc.contains("meta")) {
    const auto& mj = doc.at("meta");
    cond.meta.experiment = mj.value("experiment", 0);
    if (mj.contains("rule")) cond.meta.rule = mj.at("rule").get<int>();
    cond.meta.evidence_balance = mj.value("evidence_balance", std::string{});
  }

  // Structural invariants for the two reconstructed designs.
  if (cond.meta.experiment == 1) {
    if (cond.learning.size() != 1)
      throw ValidationError(context + ": experiment-1 condition needs exactly 1 "
                                      "learning observation");
    if (cond.tasks.size() != 15)
      throw ValidationError(context + ": experiment-1 condition needs 15 tasks");
    for (const auto& t : cond.tasks)
      if (t.candidates.size() != 9)
        throw ValidationError(context +
                              ": experiment-1 tasks use 9-candidate panels");
  } else if (cond.meta.experiment == 2) {
    if (cond.learning.size() != 6)
      throw ValidationError(context + ": experiment-2 condition needs exactly 6 "
                                      "learning observations");
    if (cond.scored_task_count() != 16)
      throw ValidationError(context +
                            ": experiment-2 condition needs 16 scored tasks");
    for (const auto& t : cond.tasks)
      if (t.candidates.size() != 20)
        throw ValidationError(context +
                              ": experiment-2 tasks use 20-candidate menus");
  }
  return cond;
}

inline Condition load_condition_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open condition file '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("condition file '" + path + "': " + e.what());
  }
  return load_condition(doc, path);
}

// Task order for one presentation. Near-first walks the canonical task list
// with the feature-order counterbalance applied: task pairs (1,2), (5,6),
// (9,10), (13,14) and the two agent-variant blocks 4-7 / 8-11 swap with
// probability one half each (1-based canonical numbering). Far-first is the
// exact reversal of the drawn near-first sequence. Random shuffles uniformly.
inline std::vector<std::size_t> sequence_tasks(const Condition& cond,
                                               Regime regime, RngStream& rng) {
  std::vector<std::size_t> order(cond.tasks.size());
  std::iota(order.begin(), order.end(), 0);
  if (regime == Regime::random) {
    rng.shuffle(order);
    return order;
  }
  if (cond.meta.experiment != 1)
    throw ValidationError("near/far sequencing is defined only for "
                          "experiment-1 conditions (use 'random')");
  for (std::size_t first : {0u, 4u, 8u, 12u})
    if (rng.bernoulli(0.5)) std::swap(order[first], order[first + 1]);
  if (rng.bernoulli(0.5))
    for (std::size_t i = 0; i < 4; ++i) std::swap(order[3 + i], order[7 + i]);
  if (regime == Regime::far) std::reverse(order.begin(), order.end());
  return order;
}

// The two demonstrated laws of the multi-shot experiment.
inline CausalFunction ground_truth_rule(int id, const FeatureSpace& space) {
  auto edges = space.feature_index("edges");
  auto shade = space.feature_index("shade");
  if (!edges || !shade || !space.feature(*edges).ordinal ||
      !space.feature(*shade).ordinal)
    throw ValidationError(
        "ground_truth_rule: needs the ordinal edges/shade feature space");
  if (id == 1)
    return parse_function("and(edges(rp)<-edges(a)+1, shade(rp)<-shade(r)+1)",
                          space);
  if (id == 2)
    return parse_function("and(edges(rp)<-edges(r)+1, shade(rp)<-shade(a)+1)",
                          space);
  throw ValidationError("ground_truth_rule: id must be 1 or 2");
}

// Dissimilarity score: how many feature values in the task's pair never
// appeared on any object during learning.
inline int dissimilarity(const Task& task, const Condition& cond) {
  std::set<std::pair<std::size_t, int>> learned;
  for (const auto& d : cond.learning) {
    for (std::size_t f = 0; f < cond.space.feature_count(); ++f) {
      learned.insert({f, d.agent[f]});
      learned.insert({f, d.recipient[f]});
      if (d.result) learned.insert({f, (*d.result)[f]});
    }
  }
  std::set<std::pair<std::size_t, int>> novel;
  for (const ObjectState* o : {&task.agent, &task.recipient})
    for (std::size_t f = 0; f < cond.space.feature_count(); ++f)
      if (!learned.count({f, (*o)[f]})) novel.insert({f, (*o)[f]});
  return static_cast<int>(novel.size());
}

// ---------------------------------------------------------------------------
// Behavioral records
// ---------------------------------------------------------------------------

struct BehavioralRecord {
  std::string participant;
  std::string condition;
  std::string regime;
  int trial = 0;  // 1-based position in the participant's task sequence
  ObjectState agent;
  ObjectState recipient;
  ObjectState choice;
};

inline void write_records_csv(std::ostream& out,
                              const std::vector<BehavioralRecord>& records,
                              const FeatureSpace& space) {
  out << "participant,condition,regime,trial";
  for (const char* role : {"a", "r", "choice"})
    for (const auto& f : space.features()) out << "," << role << "_" << f.name;
  out << "\n";
  for (const auto& rec : records) {
    out << rec.participant << "," << rec.condition << "," << rec.regime << ","
        << rec.trial;
    for (const ObjectState* o : {&rec.agent, &rec.recipient, &rec.choice})
      for (std::size_t f = 0; f < space.feature_count(); ++f)
        out << ","
            << space.feature(f).values[static_cast<std::size_t>((*o)[f])];
    out << "\n";
  }
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

// Parses the behavioral-record schema; errors carry 1-based row numbers.
inline std::vector<BehavioralRecord> read_records_csv(std::istream& in,
                                                      const FeatureSpace& space) {
  std::string line;
  if (!std::getline(in, line))
    throw ValidationError("records csv: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header = split_csv_line(line);
  std::vector<std::string> expected = {"participant", "condition", "regime",
                                       "trial"};
  for (const char* role : {"a", "r", "choice"})
    for (const auto& f : space.features())
      expected.push_back(std::string(role) + "_" + f.name);
  if (header != expected) {
    std::string want;
    for (const auto& h : expected) want += (want.empty() ? "" : ",") + h;
    throw ValidationError("records csv: header mismatch (expected '" + want +
                          "')");
  }

  std::vector<BehavioralRecord> records;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != expected.size())
      throw ValidationError("records csv row " + std::to_string(row) +
                            ": expected " + std::to_string(expected.size()) +
                            " cells, got " + std::to_string(cells.size()));
    BehavioralRecord rec;
    rec.participant = cells[0];
    rec.condition = cells[1];
    rec.regime = cells[2];
    try {
      rec.trial = std::stoi(cells[3]);
    } catch (...) {
      throw ValidationError("records csv row " + std::to_string(row) +
                            ": trial is not an integer");
    }
    const std::size_t nf = space.feature_count();
    auto read_object = [&](std::size_t offset) {
      ObjectState o(nf);
      for (std::size_t f = 0; f < nf; ++f) {
        auto v = space.value_index(f, cells[4 + offset * nf + f]);
        if (!v)
          throw ValidationError("records csv row " + std::to_string(row) +
                                ": value '" + cells[4 + offset * nf + f] +
                                "' not in support of feature '" +
                                space.feature(f).name + "'");
        o[f] = *v;
      }
      return o;
    };
    rec.agent = read_object(0);
    rec.recipient = read_object(1);
    rec.choice = read_object(2);
    records.push_back(std::move(rec));
  }
  return records;
}

// Locates the task a record refers to by its (agent, recipient) pair.
inline std::optional<std::size_t> find_task(const Condition& cond,
                                            const ObjectState& agent,
                                            const ObjectState& recipient) {
  for (std::size_t t = 0; t < cond.tasks.size(); ++t)
    if (cond.tasks[t].agent == agent && cond.tasks[t].recipient == recipient)
      return t;
  return std::nullopt;
}

}  // namespace causalgen
