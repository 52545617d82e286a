#include "catch_amalgamated.hpp"

#include <cmath>
#include <fstream>

#include "causalgen/fit.hpp"

using namespace causalgen;
using Catch::Approx;

namespace {

std::string data_path(const std::string& rel) {
  return std::string(CAUSALGEN_DATA_DIR) + "/" + rel;
}

std::map<std::string, Condition> load_conditions(
    const std::vector<std::string>& names) {
  std::map<std::string, Condition> out;
  for (const auto& name : names)
    out.emplace(name,
                load_condition_file(data_path("conditions/" + name + ".json")));
  return out;
}

}  // namespace

TEST_CASE("softmax response endpoints and the hand-computed triple") {
  std::vector<double> pred = {0.8, 0.1, 0.1};

  SECTION("t = 0 is uniform") {
    for (double p : softmax_response(pred, 0.0))
      CHECK(p == Approx(1.0 / 3.0).margin(1e-12));
  }

  SECTION("t -> infinity concentrates on the argmax") {
    auto sharp = softmax_response(pred, 1e4);
    CHECK(sharp[0] == Approx(1.0).margin(1e-9));
    CHECK(sharp[1] == Approx(0.0).margin(1e-9));
  }

  SECTION("t = 5 equals exp(t p) / sum, hand-evaluated") {
    // e^4 / (e^4 + 2 e^0.5) and e^0.5 / (...)
    const double e4 = std::exp(4.0), eh = std::exp(0.5);
    auto soft = softmax_response(pred, 5.0);
    CHECK(soft[0] == Approx(e4 / (e4 + 2 * eh)).epsilon(1e-12));
    CHECK(soft[1] == Approx(eh / (e4 + 2 * eh)).epsilon(1e-12));
    CHECK(soft[0] == Approx(0.9430450).margin(1e-6));
    CHECK(soft[1] == Approx(0.0284775).margin(1e-6));
  }

  SECTION("normalization and order invariance") {
    std::vector<double> shuffled = {0.1, 0.8, 0.1};
    auto a = softmax_response(pred, 3.3);
    auto b = softmax_response(shuffled, 3.3);
    CHECK(a[0] == Approx(b[1]).epsilon(1e-12));
    CHECK(a[1] == Approx(b[0]).epsilon(1e-12));
    double total = a[0] + a[1] + a[2];
    CHECK(total == Approx(1.0).margin(1e-12));
  }

  SECTION("argmax is preserved for every positive t") {
    RngStream rng(6);
    for (int i = 0; i < 50; ++i) {
      std::vector<double> p(9);
      double total = 0.0;
      for (double& x : p) total += (x = rng.uniform());
      for (double& x : p) x /= total;
      std::size_t arg =
          std::max_element(p.begin(), p.end()) - p.begin();
      for (double t : {0.5, 2.0, 10.0}) {
        auto soft = softmax_response(p, t);
        CHECK(static_cast<std::size_t>(
                  std::max_element(soft.begin(), soft.end()) - soft.begin()) ==
              arg);
      }
    }
  }

  SECTION("log-probability basis is the power form") {
    auto soft = softmax_response(pred, 5.0, SoftmaxBasis::log_probability);
    double p5 = std::pow(0.8, 5.0), q5 = std::pow(0.1, 5.0);
    CHECK(soft[0] == Approx(p5 / (p5 + 2 * q5)).epsilon(1e-12));
  }
}

TEST_CASE("log likelihood sums floored per-choice logs") {
  auto conditions = load_conditions({"A1"});
  const Condition& a1 = conditions.at("A1");
  ModelParams params;
  params.t = 1.0;
  auto records = simulate_participants(ModelKind::baseline, params, a1,
                                       Regime::near, 3, 77);

  SECTION("point-mass predictions matching every choice give zero") {
    PredictionTable table;
    auto& dists = table.by_condition["A1"];
    dists.assign(a1.tasks.size(), {});
    for (std::size_t t = 0; t < a1.tasks.size(); ++t)
      dists[t].assign(a1.tasks[t].candidates.size(), 0.0);
    for (const auto& rec : records) {
      auto idx = find_task(a1, rec.agent, rec.recipient);
      for (std::size_t c = 0; c < a1.tasks[*idx].candidates.size(); ++c)
        if (a1.tasks[*idx].candidates[c] == rec.choice) dists[*idx][c] = 1.0;
    }
    CHECK(log_likelihood(table, records, conditions) == Approx(0.0).margin(1e-12));

    SECTION("a zero-probability choice hits the 1e-10 floor") {
      for (auto& d : dists)
        for (double& p : d) p = 0.0;
      double ll = log_likelihood(table, records, conditions);
      CHECK(ll == Approx(records.size() * std::log(1e-10)).epsilon(1e-9));
    }
  }

  SECTION("uniform predictions give n log(1/9)") {
    PredictionTable table;
    table.by_condition["A1"].assign(a1.tasks.size(),
                                    std::vector<double>(9, 1.0 / 9.0));
    CHECK(log_likelihood(table, records, conditions) ==
          Approx(records.size() * std::log(1.0 / 9.0)).epsilon(1e-12));
  }

  SECTION("missing predictions and foreign records are rejected") {
    PredictionTable empty;
    CHECK_THROWS_AS(log_likelihood(empty, records, conditions), ValidationError);
    auto foreign = records;
    foreign[0].condition = "ZX";
    PredictionTable table;
    table.by_condition["A1"].assign(a1.tasks.size(),
                                    std::vector<double>(9, 1.0 / 9.0));
    CHECK_THROWS_AS(log_likelihood(table, foreign, conditions), ValidationError);
  }
}

TEST_CASE("bic matches its definition") {
  CHECK(bic(-3955.0, 0, 1800) == Approx(7910.0));
  CHECK(bic(-4889.0, 0, 1632) == Approx(9778.0));
  CHECK(bic(0.0, 0, 10) == Approx(0.0));
  CHECK(bic(-100.0, 3, 50) == Approx(200.0 + 3 * std::log(50.0)));
  CHECK_THROWS_AS(bic(0.0, 0, 0), ValidationError);
}

TEST_CASE("grid search returns the argmax of its own table") {
  auto conditions = load_conditions({"A1", "A2"});
  ModelParams gen;
  gen.t = 7.0;
  std::vector<BehavioralRecord> records;
  for (const auto& [id, cond] : conditions)
    for (Regime regime : {Regime::near, Regime::far}) {
      auto part = simulate_participants(ModelKind::uncala, gen, cond, regime, 25,
                                        1234 + (id == "A2"), 2);
      // participants need unique ids across batches
      for (auto& rec : part)
        rec.participant += "_" + id + "_" + regime_name(regime);
      records.insert(records.end(), part.begin(), part.end());
    }

  SECTION("uncala recovers its generating temperature within one grid step") {
    ParamGrid grid;
    grid.t = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 12, 16};
    FitOptions opts;
    opts.jobs = 4;
    FitResult fit = grid_search(ModelKind::uncala, grid, conditions, records, opts);
    CHECK(fit.cells.size() == grid.t.size());
    CHECK(fit.k == 1);
    CHECK(fit.n_choices == records.size());
    CHECK(std::abs(fit.best.t - 7.0) <= 1.0);
    // best is the exact argmax of the table
    for (const auto& c : fit.cells)
      CHECK(c.log_likelihood <= fit.best.log_likelihood);
    CHECK(fit.bic_value ==
          Approx(bic(fit.best.log_likelihood, 1, records.size())));
  }

  SECTION("a one-cell grid returns that cell") {
    ParamGrid grid;
    grid.t = {3.5};
    FitResult fit = grid_search(ModelKind::uncala, grid, conditions, records, {});
    REQUIRE(fit.cells.size() == 1);
    CHECK(fit.best.t == 3.5);
    CHECK(fit.k == 0);
  }

  SECTION("the budget cap flags a partial table") {
    ParamGrid grid;
    grid.t = {1, 2, 3, 4, 5};
    FitOptions opts;
    opts.max_cells = 3;
    FitResult fit = grid_search(ModelKind::uncala, grid, conditions, records, opts);
    CHECK(fit.partial);
    CHECK(fit.cells.size() == 3);
  }

  SECTION("jobs do not change the result") {
    ParamGrid grid;
    grid.t = {2, 5, 7, 9};
    FitOptions one;
    one.jobs = 1;
    FitOptions many;
    many.jobs = 8;
    FitResult f1 = grid_search(ModelKind::uncala, grid, conditions, records, one);
    FitResult f8 = grid_search(ModelKind::uncala, grid, conditions, records, many);
    REQUIRE(f1.cells.size() == f8.cells.size());
    for (std::size_t i = 0; i < f1.cells.size(); ++i)
      CHECK(f1.cells[i].log_likelihood == f8.cells[i].log_likelihood);
  }

  SECTION("refinement appends a fine pass around the coarse best") {
    ParamGrid grid;
    grid.t = {1, 4, 7, 10};
    grid.refine = ParamGrid::Refine{"t", 2.0, 1.0};
    FitResult fit = grid_search(ModelKind::uncala, grid, conditions, records, {});
    CHECK(fit.cells.size() > grid.t.size());
    CHECK(std::abs(fit.best.t - 7.0) <= 1.0);
  }
}

TEST_CASE("the published fine alpha grid falls out of the refine rule") {
  // coarse best at 0.4, radius 0.12, step 0.02 -> 0.28 .. 0.52
  ParamGrid grid = ParamGrid::from_json(nlohmann::json::parse(R"({
    "alpha": [0.01, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1, 1.5, 2, 4, 8],
    "refine": {"parameter": "alpha", "radius": 0.12, "step": 0.02}
  })"));
  REQUIRE(grid.refine.has_value());
  std::vector<double> values;
  for (double v = 0.4 - grid.refine->radius; v <= 0.4 + grid.refine->radius + 1e-12;
       v += grid.refine->step)
    values.push_back(std::round(v / grid.refine->step) * grid.refine->step);
  REQUIRE(values.size() == 13);
  CHECK(values.front() == Approx(0.28));
  CHECK(values.back() == Approx(0.52));
  bool has_038 = false;
  for (double v : values)
    if (std::abs(v - 0.38) < 1e-9) has_038 = true;
  CHECK(has_038);
}

TEST_CASE("cronbach alpha on choice indicators") {
  SECTION("identical choices give exactly 1") {
    // 5 options x 4 participants, everyone picks option 2
    std::vector<std::vector<double>> m(5, std::vector<double>(4, 0.0));
    for (std::size_t p = 0; p < 4; ++p) m[2][p] = 1.0;
    CHECK(cronbach_alpha(m) == Approx(1.0).margin(1e-12));
  }

  SECTION("independent uniform choices average near zero") {
    // one-hot indicator matrix for a 15-trial set: 9 options, 50 participants
    RngStream rng(2718);
    double mean = 0.0;
    const int reps = 100;
    for (int rep = 0; rep < reps; ++rep) {
      std::vector<std::vector<double>> m(9 * 15, std::vector<double>(50, 0.0));
      for (std::size_t t = 0; t < 15; ++t)
        for (std::size_t p = 0; p < 50; ++p)
          m[9 * t + rng.uniform_index(9)][p] = 1.0;
      mean += cronbach_alpha(m);
    }
    mean /= reps;
    CHECK(std::abs(mean) < 0.15);
  }

  SECTION("anti-correlated halves go negative") {
    std::vector<std::vector<double>> m = {
        {1.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}};
    CHECK(cronbach_alpha(m) < 0.0);
  }

  SECTION("zero total variance is defined as perfect agreement") {
    std::vector<std::vector<double>> m = {{1.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}};
    // row sums are constant 1
    CHECK(cronbach_alpha(m) == 1.0);
  }

  SECTION("degenerate shapes are rejected") {
    CHECK_THROWS_AS(cronbach_alpha({{1.0, 2.0}}), ValidationError);
    CHECK_THROWS_AS(cronbach_alpha({{1.0}, {2.0}}), ValidationError);
    CHECK_THROWS_AS(cronbach_alpha({{1.0, 2.0}, {1.0}}), ValidationError);
  }
}

TEST_CASE("consistency table flags thin cells and scores full ones") {
  auto conditions = load_conditions({"A1"});
  const Condition& a1 = conditions.at("A1");
  ModelParams sharp;
  sharp.t = 1e4;

  SECTION("identical participants produce all-1 alphas") {
    std::vector<BehavioralRecord> records;
    for (int p = 1; p <= 12; ++p)
      for (std::size_t t = 0; t < a1.tasks.size(); ++t) {
        BehavioralRecord rec;
        rec.participant = "p" + std::to_string(p);
        rec.condition = "A1";
        rec.regime = "near";
        rec.trial = static_cast<int>(t) + 1;
        rec.agent = a1.tasks[t].agent;
        rec.recipient = a1.tasks[t].recipient;
        rec.choice = a1.tasks[t].candidates[t % 9];
        records.push_back(std::move(rec));
      }
    auto table = consistency_table(records, conditions);
    REQUIRE(table.size() == 15);
    for (const auto& cell : table) {
      REQUIRE(cell.computed);
      CHECK(cell.alpha == Approx(1.0).margin(1e-12));
    }
  }

  SECTION("cells with fewer than two participants are flagged, not computed") {
    auto records = simulate_participants(ModelKind::uncala, sharp, a1,
                                         Regime::near, 1, 5);
    auto table = consistency_table(records, conditions);
    for (const auto& cell : table) {
      CHECK(cell.participants == 1);
      CHECK_FALSE(cell.computed);
    }
  }

  SECTION("shuffled null choices keep the pooled trial-set alpha near zero") {
    ModelParams flat;
    flat.t = 0.0;
    double mean = 0.0;
    int reps = 0;
    for (std::uint64_t seed : {31u, 32u, 33u, 34u, 35u}) {
      auto records = simulate_participants(ModelKind::baseline, flat, a1,
                                           Regime::random, 50, seed);
      auto summaries = consistency_summaries(records, conditions);
      REQUIRE(summaries.size() == 1);
      REQUIRE(summaries[0].pooled_computed);
      CHECK(summaries[0].participants == 50);
      mean += summaries[0].pooled_alpha;
      ++reps;
    }
    CHECK(std::abs(mean / reps) < 0.1);
  }

  SECTION("pooled alpha of identical participants is 1") {
    std::vector<BehavioralRecord> records;
    for (int p = 1; p <= 6; ++p)
      for (std::size_t t = 0; t < a1.tasks.size(); ++t) {
        BehavioralRecord rec;
        rec.participant = "p" + std::to_string(p);
        rec.condition = "A1";
        rec.regime = "near";
        rec.trial = static_cast<int>(t) + 1;
        rec.agent = a1.tasks[t].agent;
        rec.recipient = a1.tasks[t].recipient;
        rec.choice = a1.tasks[t].candidates[(t * 2) % 9];
        records.push_back(std::move(rec));
      }
    auto summaries = consistency_summaries(records, conditions);
    REQUIRE(summaries.size() == 1);
    CHECK(summaries[0].pooled_alpha == Approx(1.0).margin(1e-12));
    CHECK(summaries[0].mean_alpha == Approx(1.0).margin(1e-12));
  }
}
