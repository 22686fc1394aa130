#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "lfgof/harness.hpp"
#include "oracles.hpp"

using namespace lfgof;

namespace {

ToyModelSpec small_toy(ToyFamily family = ToyFamily::laplace) {
  ToyModelSpec s;
  s.family = family;
  s.d = 60;
  s.m = 6;
  return s;
}

}  // namespace

TEST_CASE("L-moments of a three-point sample", "[harness]") {
  const auto l = sample_lmoments(std::vector<double>{3.0, 1.0, 2.0}, 2);
  CHECK(l[0] == 2.0);
  CHECK(l[1] == Catch::Approx(2.0 / 3.0).epsilon(1e-15));
  const auto sym = sample_lmoments(std::vector<double>{-3.0, -1.0, 0.0, 1.0, 3.0}, 5);
  CHECK(sym[2] == Catch::Approx(0.0).margin(1e-15));
  CHECK(sym[4] == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("L-moments agree with the subset and probability-weighted definitions", "[harness][property]") {
  std::mt19937_64 gen(41);
  std::normal_distribution<double> g(0.0, 2.0);
  for (int trial = 0; trial < 150; ++trial) {
    const std::size_t n = 6 + gen() % 9;
    const std::size_t m = 2 + gen() % 5;
    std::vector<double> x(n);
    for (auto& v : x) v = trial % 3 == 0 ? std::exp(g(gen)) : g(gen);
    const auto l = sample_lmoments(x, m);
    REQUIRE(l[0] == Catch::Approx(static_cast<double>(oracle::lmoment_subsets(x, 1))).epsilon(1e-12));
    REQUIRE(l[1] == Catch::Approx(static_cast<double>(oracle::lmoment_subsets(x, 2))).epsilon(1e-11));
    for (std::size_t r = 3; r <= m; ++r) {
      const double want = static_cast<double>(oracle::lmoment_subsets(x, r));
      REQUIRE(l[r - 1] * l[1] == Catch::Approx(want).margin(1e-11));
      REQUIRE(static_cast<double>(oracle::lmoment_pwm(x, r)) == Catch::Approx(want).margin(1e-11));
    }
  }
  // long samples only against the PWM formula, whose alternating
  // coefficients lose precision beyond order 10
  for (const std::size_t n : {100u, 350u, 1000u}) {
    std::vector<double> x(n);
    for (auto& v : x) v = g(gen);
    const auto l = sample_lmoments(x, 10);
    for (std::size_t r = 3; r <= 10; ++r)
      REQUIRE(l[r - 1] * l[1] == Catch::Approx(static_cast<double>(oracle::lmoment_pwm(x, r))).margin(1e-9));
  }
}

TEST_CASE("L-moment ratios are affine invariant", "[harness][property]") {
  std::mt19937_64 gen(42);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> shift(-100.0, 100.0), scale(0.01, 100.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(350);
    for (auto& v : x) v = g(gen) * g(gen);
    const double a = shift(gen), b = scale(gen);
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = a + b * x[i];
    const auto lx = sample_lmoments(x, 20), ly = sample_lmoments(y, 20);
    REQUIRE(ly[0] == Catch::Approx(a + b * lx[0]).margin(1e-9));
    REQUIRE(ly[1] == Catch::Approx(b * lx[1]).epsilon(1e-11));
    for (std::size_t r = 3; r <= 20; ++r) REQUIRE(std::abs(ly[r - 1] - lx[r - 1]) <= 1e-12);
  }
}

TEST_CASE("L-moment errors", "[harness]") {
  CHECK_THROWS_AS(sample_lmoments(std::vector<double>{1, 1, 1, 1}, 3), SpecError);
  CHECK(sample_lmoments(std::vector<double>{1, 1, 1, 1}, 2)[1] == 0.0);
  CHECK_THROWS_AS(sample_lmoments(std::vector<double>{1, 2}, 3), SizeError);
  CHECK_THROWS_AS(LMomentWeights(5, 0), SpecError);
  const LMomentWeights w(4, 2);
  std::vector<double> five{1, 2, 3, 4, 5};
  CHECK_THROWS_AS(w.compute_sorted(five), SizeError);
}

TEST_CASE("toy model families have the expected moments", "[harness]") {
  ToyModelSpec lap;
  lap.d = 200000;
  lap.m = 4;
  ToyModelSpec gau = lap;
  gau.family = ToyFamily::gaussian;
  const std::vector<double> theta{1.0, 2.0};
  CounterRng rng(43);
  const auto z = ToyModel(lap).raw_sample(theta, rng);
  double mean = 0.0, var = 0.0;
  for (const double v : z) mean += v;
  mean /= static_cast<double>(z.size());
  for (const double v : z) var += (v - mean) * (v - mean);
  var /= static_cast<double>(z.size() - 1);
  CHECK(mean == Catch::Approx(1.0).margin(0.02));
  CHECK(var == Catch::Approx(4.0).epsilon(0.03));

  // Laplace: l2 = 3b/4, t3 = 0, t4 = 1/(3 sqrt 2); Gaussian: l2 = sigma / sqrt(pi), t4 ~ 0.1226
  const auto ll = ToyModel(lap).simulate(theta, rng);
  CHECK(ll[1] == Catch::Approx(0.75 * 2.0 / std::sqrt(2.0)).epsilon(0.01));
  CHECK(ll[2] == Catch::Approx(0.0).margin(0.01));
  CHECK(ll[3] == Catch::Approx(1.0 / (3.0 * std::sqrt(2.0))).margin(0.01));
  const auto lg = ToyModel(gau).simulate(theta, rng);
  CHECK(lg[1] == Catch::Approx(2.0 / std::sqrt(M_PI)).epsilon(0.01));
  CHECK(lg[3] == Catch::Approx(0.1226).margin(0.01));
}

TEST_CASE("toy simulation shape and determinism", "[harness]") {
  const ToyModel model(ToyModelSpec{});
  CHECK(model.stat_names().size() == 20);
  CHECK(model.stat_names()[2] == "t3");
  CounterRng a(44), b(44);
  const auto ta = model.draw_theta(a);
  CHECK(ta[0] >= -5.0);
  CHECK(ta[0] <= 5.0);
  CHECK(ta[1] >= 1.0);
  CHECK(ta[1] <= 4.0);
  CHECK(model.simulate(ta, a) == model.simulate(model.draw_theta(b), b));
  const auto t1 = simulate_toy(model, 200, 45, 1);
  const auto t3 = simulate_toy(model, 200, 45, 3);
  CHECK(t1.summary_data() == t3.summary_data());
  CHECK(t1.param_data() == t3.param_data());
  CHECK(t1.n_stats() == 20);
  ToyModelSpec bad;
  bad.m = 400;
  CHECK_THROWS_AS(ToyModel{bad}, SpecError);
  CHECK_THROWS_AS(parse_toy_family("cauchy"), SpecError);
  CHECK_THROWS_AS(simulate_toy(model, 0, 1), SizeError);
}

TEST_CASE("power formulations agree with the direct count", "[harness][property]") {
  const ToyModel null_sim(small_toy()), alt_sim(small_toy(ToyFamily::gaussian));
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const auto ref = simulate_toy(null_sim, 150 + 10 * seed, derive_seed(seed, 1));
    const auto calib = simulate_toy(null_sim, 100 + 7 * seed, derive_seed(seed, 2));
    const auto pods = simulate_toy(seed % 2 == 0 ? alt_sim : null_sim, 80, derive_seed(seed, 3));
    const double alpha = std::vector<double>{0.05, 0.1, 0.01, 0.2}[seed % 4];
    const auto spec = seed % 3 == 0 ? ScoreSpec::knn(1) : ScoreSpec::max_lof(2, 6);
    const auto res = prior_power(ref, calib, pods, spec, alpha);
    const OutlierScorer s(ref, spec);
    const double want = oracle::power(s.score_batch(calib, spec), s.score_batch(pods, spec), alpha);
    REQUIRE(res.power == want);
    REQUIRE(res.power_counting == want);
    REQUIRE(res.pvalues.size() == pods.size());
  }
}

TEST_CASE("null-versus-null power is close to the level", "[harness]") {
  ExperimentSpec exp;
  exp.budgets = {600};
  exp.n_test = 1500;
  exp.scores = {ScoreSpec::knn(1), ScoreSpec::max_lof(3, 10)};
  exp.seed = 46;
  const auto rows = estimate_power_prior(small_toy(), small_toy(), exp);
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) {
    // calibration-set and POD sampling both contribute
    const double se = std::sqrt(exp.alpha * (1 - exp.alpha) * (1.0 / exp.n_test + 1.0 / r.n_calib));
    CHECK(std::abs(r.power - exp.alpha) < 3.0 * se);
    CHECK(r.power == r.power_counting);
    CHECK(r.n_ref == 300);
  }
}

TEST_CASE("experiment helpers", "[harness]") {
  const auto sweep = k_sweep_specs(2, 4);
  REQUIRE(sweep.size() == 6);
  CHECK(sweep.front() == ScoreSpec::knn(2));
  CHECK(sweep.back() == ScoreSpec::lof(4));
  CHECK_THROWS_AS(k_sweep_specs(0, 3), SpecError);
  CHECK(max_rejecting_count(100, 0.05) == 5);
  CHECK(max_rejecting_count(1000, 0.05) == 50);
  CHECK(max_rejecting_count(10, 0.05) == 0);
  CHECK(max_rejecting_count(3, 1.0 / 3.0) == 1);
  CHECK(max_rejecting_count(500, 0.05) == 25);

  CHECK(ks_uniform_distance(std::vector<double>{0.5}) == 0.5);
  CHECK(ks_uniform_distance(std::vector<double>{0.2, 0.1}) == Catch::Approx(0.8));
  CHECK(max_quantile_deviation(std::vector<double>{0.5}) == 0.0);
  CHECK(max_quantile_deviation(std::vector<double>{0.2, 0.1}) == Catch::Approx(0.55));
  CHECK_THROWS_AS(ks_uniform_distance(std::vector<double>{}), SizeError);

  ExperimentSpec exp;
  exp.budgets = {501};
  CHECK_THROWS_AS(exp.validate_prior(), SpecError);
  exp.budgets = {};
  CHECK_THROWS_AS(exp.validate_common(), SpecError);
  exp.budgets = {20};
  CHECK_THROWS_AS(exp.validate_prior(), SizeError);
}

TEST_CASE("prior power on ingested tables", "[harness]") {
  const auto pool = simulate_toy(small_toy(), 1000, 47);
  const auto pods = simulate_toy(small_toy(ToyFamily::gaussian), 100, 48);
  ExperimentSpec exp;
  exp.budgets = {400, 1000};
  exp.scores = {ScoreSpec::knn(1)};
  const auto rows = estimate_power_prior(pool, pods, exp);
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].n_calib == 500);
  CHECK(rows[0].n_test == 100);
  exp.budgets = {1200};
  CHECK_THROWS_AS(estimate_power_prior(pool, pods, exp), SizeError);
}

TEST_CASE("small calibration and holdout power runs", "[harness]") {
  ExperimentSpec exp;
  exp.budgets = {200};
  exp.n_test = 40;
  exp.scores = {ScoreSpec::knn(1), ScoreSpec::max_lof(2, 6)};
  exp.workers = 2;
  const auto prior = calibration_check(small_toy(), exp, TestKind::prior);
  REQUIRE(prior.size() == 2);
  CHECK(prior[0].pvalues.size() == 40);
  CHECK(prior[0].ks == ks_uniform_distance(prior[0].pvalues));
  CHECK(prior[1].score == "maxlof(k=2..6)");
  exp.workers = 1;
  CHECK(calibration_check(small_toy(), exp, TestKind::prior)[1].pvalues == prior[1].pvalues);

  CHECK_THROWS_AS(calibration_check(small_toy(), exp, TestKind::holdout), SpecError);
  PosteriorSpec post;
  post.n_post = 60;
  exp.budgets = {600};
  const auto hold = calibration_check(small_toy(), exp, TestKind::holdout, post);
  REQUIRE(hold.size() == 2);
  CHECK(hold[0].method == "rejection");
  CHECK(hold[0].n_post == 60);

  const auto power = estimate_power_holdout(small_toy(), small_toy(ToyFamily::gaussian), post, exp);
  REQUIRE(power.size() == 2);
  CHECK(power[0].test == "holdout");
  CHECK(power[0].n_calib == 30);
}
