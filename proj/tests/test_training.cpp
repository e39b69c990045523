#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "mmrec/models.hpp"
#include "mmrec/synthetic.hpp"
#include "mmrec/trainer.hpp"
#include "support/fixtures.hpp"

using namespace mmrec;
using mmrec::testing::tiny_context;

namespace {

struct SyntheticRun {
  Split split;
  ModelContext context;
  TrainData data;
};

SyntheticRun synthetic_run(std::uint64_t seed, bool zero_features = false, std::size_t n_users = 50,
                           std::size_t n_items = 200) {
  SyntheticParams p;
  p.seed = seed;
  p.n_users = n_users;
  p.n_items = n_items;
  auto generated = generate_synthetic(p);
  SplitOptions options;
  options.seed = seed;
  SyntheticRun run;
  run.split = holdout_split(Dataset::from_log(generated.log), options);
  if (zero_features) {
    for (auto& f : generated.features) std::fill(f.values.values().begin(), f.values.values().end(), 0.0f);
  }
  MultimodalStore store(run.split.items, generated.features);
  run.context = ModelContext::from(run.split, store);
  run.data = TrainData::from(run.split);
  return run;
}

/// Expected Recall@k of a uniformly random ranking over the non-train items.
double random_recall(const TrainData& data, std::size_t k) {
  const auto train = items_by_user(data.train, data.n_users);
  double sum = 0;
  std::size_t n = 0;
  for (auto u : users_with_items(data.validation)) {
    const double candidates = static_cast<double>(data.n_items - train[u].size());
    sum += std::min(1.0, static_cast<double>(k) / candidates);
    ++n;
  }
  return sum / static_cast<double>(n);
}

void add_scalar(ParameterSet<double>& params, double value) {
  params.add("theta", ParamGroup::kPredictor, Matrix<double>(1, 1, value));
}

}  // namespace

TEST_CASE("bpr_loss examples") {
  CHECK(bpr_loss(0.3, 0.3) == doctest::Approx(0.6931).epsilon(1e-4));
  CHECK(bpr_loss(20.0, 0.0) < 1e-8);
  CHECK(bpr_loss(20.0, 0.0) > 0.0);
  CHECK(bpr_loss(0.0, 1.0) == doctest::Approx(std::log1p(std::exp(1.0))).epsilon(1e-12));
  CHECK(bpr_loss(0.0, 1.0) == doctest::Approx(1.3133).epsilon(1e-4));
  CHECK_THROWS_AS(bpr_loss(std::numeric_limits<double>::quiet_NaN(), 0.0), NumericError);
  CHECK_THROWS_AS(bpr_loss(0.0, std::numeric_limits<double>::infinity()), NumericError);

  // Gradient with respect to the margin at -1: -sigmoid(1).
  Tape<double> tape;
  auto pos = tape.variable(Matrix<double>(1, 1, -1.0));
  auto neg = tape.constant(Matrix<double>(1, 1, 0.0));
  auto loss = bpr_loss(tape, pos, neg);
  const double value = loss.value()(0, 0);
  CHECK(value == doctest::Approx(1.3133).epsilon(1e-4));
  tape.backward(loss);
  const double g = tape.grad(pos)(0, 0);
  CHECK(g == doctest::Approx(-1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-12));
  const double h = 1e-6;
  const double fd = (bpr_loss(-1.0 + h, 0.0) - bpr_loss(-1.0 - h, 0.0)) / (2 * h);
  CHECK(g == doctest::Approx(fd).epsilon(1e-6));
}

TEST_CASE("bpr_loss is decreasing in the margin") {
  double previous = std::numeric_limits<double>::infinity();
  for (double margin = -10; margin <= 10; margin += 0.25) {
    const double loss = bpr_loss(margin, 0.0);
    CHECK(loss > 0.0);
    CHECK(loss < previous);
    previous = loss;
  }
}

TEST_CASE("sampler forces the only negative") {
  std::vector<UserItem> train;
  for (std::uint32_t i = 0; i < 7; ++i) train.push_back({0, i});
  train.push_back({1, 3});
  const TripleSampler sampler(train, 2, 8);
  Rng rng(5);
  for (const auto& t : sampler.sample(2000, rng)) {
    if (t.user == 0) CHECK(t.neg == 7);
  }
}

TEST_CASE("sampler negatives are uniform") {
  // One user with a single positive over an 11-item catalog: 10 candidates.
  const std::vector<UserItem> train{{0, 4}};
  const TripleSampler sampler(train, 1, 11);
  Rng rng(17);
  std::map<std::uint32_t, int> counts;
  const int n = 10000;
  for (const auto& t : sampler.sample(n, rng)) {
    CHECK(t.pos == 4);
    ++counts[t.neg];
  }
  CHECK(counts.size() == 10);
  CHECK(!counts.contains(4));
  const double expected = n / 10.0;
  double chi2 = 0;
  for (const auto& [item, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
  // 99.9% quantile of chi-square with 9 degrees of freedom.
  CHECK(chi2 < 27.877);
}

TEST_CASE("sampler positives are uniform over the user's items") {
  const std::vector<UserItem> train{{0, 1}, {0, 2}, {0, 5}, {0, 9}};
  const TripleSampler sampler(train, 1, 12);
  Rng rng(23);
  std::map<std::uint32_t, int> counts;
  const int n = 8000;
  for (const auto& t : sampler.sample(n, rng)) ++counts[t.pos];
  CHECK(counts.size() == 4);
  double chi2 = 0;
  for (const auto& [item, c] : counts) chi2 += (c - n / 4.0) * (c - n / 4.0) / (n / 4.0);
  CHECK(chi2 < 16.266);  // 99.9% quantile, 3 dof
}

TEST_CASE("sampler is deterministic and never emits a train negative") {
  const auto c = tiny_context(12, 20, 9);
  const TripleSampler sampler(c.train, c.n_users, c.n_items);
  Rng a(99), b(99), other(100);
  const auto s1 = sampler.sample(5000, a);
  const auto s2 = sampler.sample(5000, b);
  const auto s3 = sampler.sample(5000, other);
  CHECK(s1 == s2);
  CHECK(s1 != s3);
  const std::set<UserItem> positives(c.train.begin(), c.train.end());
  for (const auto& t : s1) {
    CHECK(positives.contains(UserItem{t.user, t.pos}));
    CHECK(!positives.contains(UserItem{t.user, t.neg}));
  }
}

TEST_CASE("sampler skips users covering the catalog") {
  std::vector<UserItem> train;
  for (std::uint32_t i = 0; i < 4; ++i) train.push_back({0, i});
  train.push_back({1, 2});
  const TripleSampler sampler(train, 3, 4);
  CHECK(sampler.eligible_users() == 1);
  Rng rng(1);
  for (const auto& t : sampler.sample(200, rng)) CHECK(t.user == 1);

  const std::vector<UserItem> full{{0, 0}, {0, 1}};
  CHECK_THROWS_AS(TripleSampler(full, 1, 2), std::invalid_argument);
}

TEST_CASE("SGD step arithmetic") {
  ParameterSet<double> params;
  add_scalar(params, 1.0);
  params.get("theta").grad = Matrix<double>(1, 1, 2.0);
  Optimizer<double> sgd(OptimizerKind::kSgd, 0.1);
  sgd.step(params);
  CHECK(params.get("theta").value(0, 0) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(sgd.steps() == 1);
}

TEST_CASE("Adam first step matches hand-computed moments") {
  const double lr = 0.01;
  ParameterSet<double> params;
  add_scalar(params, 1.0);
  params.get("theta").grad = Matrix<double>(1, 1, 1.0);
  Optimizer<double> adam(OptimizerKind::kAdam, lr);
  adam.step(params);
  // m = 0.1, v = 0.001; bias-corrected both are 1.
  const double m_hat = 0.1 / (1 - 0.9);
  const double v_hat = 0.001 / (1 - 0.999);
  const double expected = 1.0 - lr * m_hat / (std::sqrt(v_hat) + 1e-8);
  CHECK(params.get("theta").value(0, 0) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(1.0 - params.get("theta").value(0, 0) == doctest::Approx(lr).epsilon(1e-6));

  // Second step with g = -1 by hand.
  params.get("theta").grad = Matrix<double>(1, 1, -1.0);
  const double before = params.get("theta").value(0, 0);
  adam.step(params);
  const double m2 = 0.9 * 0.1 + 0.1 * -1.0;
  const double v2 = 0.999 * 0.001 + 0.001 * 1.0;
  const double update = lr * (m2 / (1 - 0.81)) / (std::sqrt(v2 / (1 - 0.999 * 0.999)) + 1e-8);
  CHECK(params.get("theta").value(0, 0) == doctest::Approx(before - update).epsilon(1e-12));
}

TEST_CASE("non-finite update aborts and leaves parameters unchanged") {
  ParameterSet<double> params;
  add_scalar(params, 1.0);
  params.get("theta").grad = Matrix<double>(1, 1, std::numeric_limits<double>::infinity());
  Optimizer<double> sgd(OptimizerKind::kSgd, 0.1);
  CHECK_THROWS_AS(sgd.step(params), NumericError);
  CHECK(params.get("theta").value(0, 0) == 1.0);
}

TEST_CASE("l2 regularizer value and gradient") {
  ParameterSet<double> params;
  params.add("a", ParamGroup::kPredictor, Matrix<double>::from_rows({{1, -2}}));
  params.add("b", ParamGroup::kFusion, Matrix<double>::from_rows({{3}}));
  {
    Tape<double> tape;
    auto r = l2_regularizer(tape, params, 0.5);
    const double value = r.value()(0, 0);
    CHECK(value == doctest::Approx(0.5 * 0.5 * 14.0));
    params.zero_grad();
    tape.backward(r);
    CHECK(params.get("a").grad(0, 1) == doctest::Approx(-1.0));
    CHECK(params.get("b").grad(0, 0) == doctest::Approx(1.5));
  }
  {
    Tape<double> tape;
    auto r = l2_regularizer(tape, params, 0.0);
    CHECK(r.value()(0, 0) == 0.0);
    params.zero_grad();
    tape.backward(r);
    for (const auto& p : params) {
      for (double g : p.grad.values()) CHECK(g == 0.0);
    }
  }
}

TEST_CASE("config validation") {
  TrainerConfig ok;
  CHECK_NOTHROW(ok.validate());
  auto bad = ok;
  bad.epochs = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ok;
  bad.learning_rate = -1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ok;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = ok;
  bad.reg_weight = -1e-3;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK(parse_optimizer("adam") == OptimizerKind::kAdam);
  CHECK(parse_optimizer(to_string(OptimizerKind::kSgd)) == OptimizerKind::kSgd);
  CHECK_THROWS(parse_optimizer("rmsprop"));
}

TEST_CASE("grid is capped at ten points") {
  GridSpec grid;
  CHECK(grid.size() == 10);
  CHECK_NOTHROW(grid.validate());
  GridSpec eleven;
  eleven.learning_rates.assign(11, 1e-3);
  for (std::size_t i = 0; i < 11; ++i) eleven.learning_rates[i] = 1e-3 * (i + 1);
  eleven.reg_weights = {1e-5};
  CHECK(eleven.size() == 11);
  CHECK_THROWS_AS(eleven.validate(), std::invalid_argument);
  GridSpec twelve;
  twelve.learning_rates = {1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2};
  CHECK_THROWS_AS(twelve.validate(), std::invalid_argument);
  GridSpec empty;
  empty.reg_weights.clear();
  CHECK_THROWS_AS(empty.validate(), std::invalid_argument);

  CHECK(grid.point(0) == std::pair{1e-4, 1e-5});
  CHECK(grid.point(1) == std::pair{1e-4, 1e-2});
  CHECK(grid.point(9) == std::pair{1e-2, 1e-2});
}

TEST_CASE("select_grid_point ties and dominance") {
  auto trial = [](std::size_t index, std::vector<std::pair<int, double>> checkpoints) {
    GridTrial t;
    t.index = index;
    for (auto [epoch, recall] : checkpoints) t.result.trace.push_back({epoch, 0.1, recall, 0.0});
    return t;
  };
  SUBCASE("dominant config wins") {
    std::vector<GridTrial> trials{trial(0, {{10, 0.1}, {20, 0.2}}), trial(1, {{10, 0.3}, {20, 0.4}})};
    CHECK(select_grid_point(trials) == std::pair<std::size_t, int>{1, 20});
  }
  SUBCASE("ties go to the lower index then the earlier epoch") {
    std::vector<GridTrial> trials{trial(0, {{10, 0.2}, {20, 0.5}, {30, 0.5}}),
                                  trial(1, {{10, 0.5}, {20, 0.1}})};
    CHECK(select_grid_point(trials) == std::pair<std::size_t, int>{0, 20});
  }
  SUBCASE("diverged trials never win") {
    std::vector<GridTrial> trials{trial(0, {}), trial(1, {{10, 0.0}})};
    CHECK(select_grid_point(trials) == std::pair<std::size_t, int>{1, 10});
    std::vector<GridTrial> none{trial(0, {})};
    CHECK_THROWS_AS(select_grid_point(none), TrainingDiverged);
  }
}

TEST_CASE("grid_search over one config returns it with its best epoch") {
  auto run = synthetic_run(4, false, 20, 60);
  ModelConfig mc;
  mc.dim = 8;
  ModelFactory<float> factory = [&] { return make_model<float>(mc, run.context, 1); };
  GridSpec grid;
  grid.learning_rates = {5e-3};
  grid.reg_weights = {1e-5};
  TrainerConfig base;
  base.epochs = 12;
  base.batch_size = 64;
  TrainOptions options;
  options.eval_every = 4;
  const auto result = grid_search(factory, grid, run.data, base, options);
  REQUIRE(result.trials.size() == 1);
  CHECK(result.best_index == 0);
  CHECK(result.best().learning_rate == 5e-3);
  CHECK(result.best_epoch == result.best().result.best_epoch);
  CHECK(result.best_recall == result.best().result.best_recall);
  int measured = 0;
  for (const auto& row : result.best().result.trace) measured += row.recall.has_value();
  CHECK(measured == 3);

  TrainData no_validation = run.data;
  no_validation.validation.assign(no_validation.n_users, {});
  CHECK_THROWS_AS(grid_search(factory, grid, no_validation, base, options), std::invalid_argument);
}

TEST_CASE("grid_search skips a diverging point") {
  auto run = synthetic_run(2, false, 20, 60);
  ModelConfig mc;
  mc.dim = 8;
  ModelFactory<float> factory = [&] { return make_model<float>(mc, run.context, 1); };
  GridSpec grid;
  grid.learning_rates = {1e30, 5e-3};
  grid.reg_weights = {1e-5};
  TrainerConfig base;
  base.epochs = 4;
  base.batch_size = 64;
  base.optimizer = OptimizerKind::kSgd;
  TrainOptions options;
  options.eval_every = 2;
  const auto result = grid_search(factory, grid, run.data, base, options);
  CHECK(result.trials[0].result.trace.empty());
  CHECK(result.best_index == 1);
}

TEST_CASE("single-worker training is bitwise deterministic") {
  const auto c = tiny_context(10, 16, 7);
  for (auto kind : kAllModels) {
    CAPTURE(to_string(kind));
    auto config = testing::tiny_config(kind);
    TrainData data;
    data.n_users = c.n_users;
    data.n_items = c.n_items;
    data.train = c.train;
    TrainerConfig trainer;
    trainer.epochs = 3;
    trainer.batch_size = 8;
    trainer.learning_rate = 0.01;
    auto fit = [&] {
      auto model = make_model<float>(config, c, 5);
      auto result = train_loop(*model, data, trainer);
      return std::pair{model->parameters().snapshot(), result};
    };
    const auto [a, ra] = fit();
    const auto [b, rb] = fit();
    REQUIRE(a.size() == b.size());
    for (std::size_t p = 0; p < a.size(); ++p) {
      CHECK(std::memcmp(a[p].values().data(), b[p].values().data(), a[p].values().size() * sizeof(float)) == 0);
    }
    REQUIRE(ra.trace.size() == 3);
    for (std::size_t e = 0; e < 3; ++e) CHECK(ra.trace[e].loss == rb.trace[e].loss);
  }
}

TEST_CASE("train_loop runs the configured epochs and validates on cadence") {
  auto run = synthetic_run(1, false, 20, 60);
  ModelConfig mc;
  mc.dim = 8;
  auto model = make_model<float>(mc, run.context, 3);
  TrainerConfig trainer;
  trainer.epochs = 7;
  trainer.batch_size = 32;
  TrainOptions options;
  options.eval_every = 3;
  const auto result = train_loop(*model, run.data, trainer, options);
  CHECK(result.epochs == 7);
  REQUIRE(result.trace.size() == 7);
  std::vector<int> measured;
  for (const auto& row : result.trace) {
    if (row.recall) measured.push_back(row.epoch);
  }
  CHECK(measured == std::vector<int>{3, 6, 7});
  CHECK(result.best_epoch != 0);

  std::ostringstream out;
  write_trace_tsv(out, result.trace);
  std::istringstream lines(out.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "epoch\tloss\trecall\tseconds");
  std::getline(lines, line);
  CHECK(line.rfind("1\t", 0) == 0);
  CHECK(line.find("\t\t") != std::string::npos);  // no recall at epoch 1

  TrainOptions bad;
  bad.eval_every = 0;
  CHECK_THROWS_AS(train_loop(*model, run.data, trainer, bad), std::invalid_argument);
}

TEST_CASE("divergence is reported as TrainingDiverged") {
  auto run = synthetic_run(1, false, 20, 60);
  ModelConfig mc;
  mc.dim = 8;
  auto model = make_model<float>(mc, run.context, 3);
  TrainerConfig trainer;
  trainer.epochs = 3;
  trainer.optimizer = OptimizerKind::kSgd;
  trainer.learning_rate = 1e30;
  CHECK_THROWS_AS(train_loop(*model, run.data, trainer), TrainingDiverged);
}

TEST_CASE("VBPR learns the planted signal and beats the zero-feature ablation") {
  ModelConfig mc;
  mc.kind = ModelKind::kVbpr;
  TrainerConfig trainer;
  trainer.epochs = 50;
  trainer.learning_rate = 0.01;
  TrainOptions options;
  options.eval_every = 50;
  options.eval_k = 10;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    CAPTURE(seed);
    trainer.seed = seed;
    auto with = synthetic_run(seed);
    auto without = synthetic_run(seed, true);
    auto m1 = make_model<float>(mc, with.context, seed);
    auto m0 = make_model<float>(mc, without.context, seed);
    const auto r1 = train_loop(*m1, with.data, trainer, options);
    const auto r0 = train_loop(*m0, without.data, trainer, options);
    const double recall = *r1.trace.back().recall;
    CHECK(recall >= 5.0 * random_recall(with.data, 10));
    CHECK(recall > *r0.trace.back().recall);
    CHECK(r1.final_loss < r1.initial_loss);
  }
}
