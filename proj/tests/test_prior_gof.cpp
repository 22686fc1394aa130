#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "lfgof/harness.hpp"
#include "lfgof/prior_gof.hpp"
#include "lfgof/report.hpp"
#include "oracles.hpp"

using namespace lfgof;

namespace {

ReferenceTable table_of(const oracle::Points& pts) {
  std::vector<double> params(pts.size(), 0.0);
  return ReferenceTable({"theta"}, std::vector<std::string>(pts.front().size(), "s"), params, oracle::flatten(pts));
}

ToyModelSpec small_toy(ToyFamily f = ToyFamily::laplace) {
  ToyModelSpec s;
  s.family = f;
  s.d = 60;
  s.m = 6;
  return s;
}

}  // namespace

TEST_CASE("exceedance counting uses a strict inequality", "[prior_gof]") {
  const std::vector<double> calib{1.0, 2.0, 3.0, 4.0};
  CHECK(exceedance_pvalue(calib, 2.5) == 0.5);
  CHECK(exceedance_pvalue(calib, 9.0) == 0.0);
  CHECK(exceedance_pvalue(calib, 0.0) == 1.0);
  CHECK(exceedance_pvalue(calib, 2.0) == 0.5);  // the tie counts as no exceedance
  CHECK_THROWS_AS(exceedance_pvalue(std::vector<double>{}, 1.0), SizeError);
}

TEST_CASE("prior p-value counts calibration scores above the observed score", "[prior_gof]") {
  std::mt19937_64 gen(21);
  const auto ref = oracle::random_points(gen, 80, 2);
  const auto calib = oracle::random_points(gen, 40, 2);
  const auto y = oracle::random_points(gen, 1, 2).front();
  for (const auto& spec : {ScoreSpec::knn(1), ScoreSpec::lof(5), ScoreSpec::max_lof(5, 20)}) {
    const auto r = prior_pvalue(y, table_of(ref), table_of(calib), spec);
    std::size_t above = 0;
    const double obs = spec.kind == ScoreKind::knn ? oracle::knn_score(ref, y, 1)
                       : spec.kind == ScoreKind::lof ? oracle::lof(ref, y, 5)
                                                     : oracle::max_lof(ref, y, 5, 20);
    for (const auto& c : calib) {
      const double s = spec.kind == ScoreKind::knn ? oracle::knn_score(ref, c, 1)
                       : spec.kind == ScoreKind::lof ? oracle::lof(ref, c, 5)
                                                     : oracle::max_lof(ref, c, 5, 20);
      if (s > obs) ++above;
    }
    CHECK(r.exceedances == above);
    CHECK(r.p_hat == static_cast<double>(above) / 40.0);
    CHECK(r.n_ref == 80);
    CHECK(r.n_calib == 40);
  }
  CHECK_THROWS_AS(prior_pvalue(y, table_of(ref), table_of(calib), ScoreSpec::knn(80)), SizeError);
}

TEST_CASE("p-value lies on the 1/N_calib lattice and is rank based", "[prior_gof][property]") {
  std::mt19937_64 gen(22);
  for (int trial = 0; trial < 50; ++trial) {
    const auto ref = oracle::random_points(gen, 30 + gen() % 30, 3);
    const std::size_t nc = 5 + gen() % 40;
    const auto calib = oracle::random_points(gen, nc, 3);
    const auto y = oracle::random_points(gen, 1, 3, 2.0).front();
    const auto r = prior_pvalue(y, table_of(ref), table_of(calib), ScoreSpec::knn(2));
    REQUIRE(r.p_hat * static_cast<double>(nc) == Catch::Approx(std::round(r.p_hat * static_cast<double>(nc))));
    // scores mapped through a strictly increasing function give the same count
    const OutlierScorer s(table_of(ref), ScoreSpec::knn(2));
    auto scores = s.score_batch(table_of(calib), ScoreSpec::knn(2));
    for (auto& v : scores) v = std::exp(3.0 * v) + v * v * v;
    const double o = s.score(y, ScoreSpec::knn(2));
    REQUIRE(exceedance_pvalue(scores, std::exp(3.0 * o) + o * o * o) == r.p_hat);
  }
}

TEST_CASE("asymptotic interval closed form", "[prior_gof]") {
  const auto a = asymptotic_ci(0.5, 100, 0.95);
  CHECK(a.low == Catch::Approx(0.5 - 1.959963984540054 * 0.05).epsilon(1e-12));
  CHECK(a.high == Catch::Approx(0.5 + 1.959963984540054 * 0.05).epsilon(1e-12));
  CHECK(a.low == Catch::Approx(0.402).margin(5e-4));
  const auto b = asymptotic_ci(0.05, 2500, 0.95);
  CHECK(b.low == Catch::Approx(0.0415).margin(1e-4));
  CHECK(b.high == Catch::Approx(0.0585).margin(1e-4));
  const auto z = asymptotic_confidence(0.0, 100);
  CHECK(z.low == 0.0);
  CHECK(z.high == 0.0);
  CHECK(z.degenerate);
  CHECK_FALSE(asymptotic_confidence(0.3, 100).degenerate);
  CHECK(asymptotic_ci(0.01, 3, 0.99).low == 0.0);  // clipped
  CHECK_THROWS_AS(asymptotic_ci(0.5, 100, 1.0), SpecError);
  CHECK_THROWS_AS(asymptotic_ci(0.5, 100, 0.0), SpecError);
  CHECK_THROWS_AS(asymptotic_ci(1.5, 100), SpecError);
  CHECK_THROWS_AS(asymptotic_ci(0.5, 0), SpecError);
}

TEST_CASE("HDI examples and exhaustive oracle", "[prior_gof]") {
  std::vector<double> seq(100);
  for (int i = 0; i < 100; ++i) seq[i] = i + 1;
  CHECK(hdi(seq, 0.95) == Interval{1.0, 95.0});
  CHECK(hdi(std::vector<double>{0.3}, 0.95) == Interval{0.3, 0.3});
  CHECK_THROWS_AS(hdi(std::vector<double>{}, 0.95), SpecError);

  std::mt19937_64 gen(23);
  std::normal_distribution<double> a(0.1, 0.02), b(0.6, 0.05);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s;
    const std::size_t n = 1 + gen() % 120;
    for (std::size_t i = 0; i < n; ++i) s.push_back(i % 3 == 0 ? b(gen) : a(gen));
    if (trial % 4 == 0)
      for (auto& v : s) v = std::round(v * 20.0) / 20.0;  // lattice values with ties
    const auto want = oracle::hdi(s, 95, 100);
    const auto got = hdi(s, 0.95);
    REQUIRE(got.low == want.first);
    REQUIRE(got.high == want.second);
    const auto want80 = oracle::hdi(s, 4, 5);
    REQUIRE(hdi(s, 0.8) == Interval{want80.first, want80.second});
  }
}

TEST_CASE("bootstrap p-values", "[prior_gof]") {
  const ToyModel model(small_toy());
  const auto pool = simulate_toy(model, 120, 5);
  CounterRng rng(8);
  const auto y = model.simulate(model.draw_theta(rng), rng);

  const auto one = bootstrap_pvalues(y, pool, 60, ScoreSpec::knn(1), 1, 77);
  CHECK(one.samples.size() == 1);
  CHECK(one.median == one.samples[0]);
  CHECK(one.hdi_low == one.hdi_high);
  const auto direct = split_calibration(pool, {60, derive_seed(77, 0)});
  CHECK(one.samples[0] == prior_pvalue(y, direct.reference, direct.calibration, ScoreSpec::knn(1)).p_hat);

  const auto many = bootstrap_pvalues(y, pool, 60, ScoreSpec::max_lof(5, 20), 40, 9, 0.9, {.workers = 3});
  CHECK(many.samples.size() == 40);
  CHECK(many.hdi_low <= many.median);
  CHECK(many.median <= many.hdi_high);
  const auto serial = bootstrap_pvalues(y, pool, 60, ScoreSpec::max_lof(5, 20), 40, 9, 0.9);
  CHECK(serial.samples == many.samples);

  // identical rows: every split gives the same p-value
  std::vector<double> same(40 * 2, 1.0);
  for (std::size_t i = 0; i < same.size(); i += 2) same[i] = 0.0;
  const ReferenceTable flat({}, {"a", "b"}, {}, same);
  const auto deg = bootstrap_pvalues(std::vector<double>{5.0, 5.0}, flat, 20, ScoreSpec::knn(1), 25, 1);
  CHECK(deg.hdi_low == deg.hdi_high);
  CHECK(deg.hdi_low == 0.0);

  CHECK_THROWS_AS(bootstrap_pvalues(y, pool, 60, ScoreSpec::knn(1), 0, 1), SpecError);
  CHECK_THROWS_AS(bootstrap_pvalues(y, pool, 120, ScoreSpec::knn(1), 5, 1), SizeError);
}

TEST_CASE("Benjamini-Hochberg adjustment", "[prior_gof]") {
  CHECK(bh_adjust(std::vector<double>{0.01, 0.04, 0.03, 0.005}) == std::vector<double>{0.02, 0.04, 0.04, 0.02});
  CHECK(bh_adjust(std::vector<double>{0.3, 0.3, 0.3}) == std::vector<double>{0.3, 0.3, 0.3});
  CHECK(bh_adjust(std::vector<double>{0.42}) == std::vector<double>{0.42});
  CHECK(bh_adjust(std::vector<double>{}).empty());
  CHECK_THROWS_AS(bh_adjust(std::vector<double>{0.1, 1.2}), SpecError);
  CHECK_THROWS_AS(bh_adjust(std::vector<double>{-0.1}), SpecError);
}

TEST_CASE("BH matches the long-hand oracle and is monotone and equivariant", "[prior_gof][property]") {
  std::mt19937_64 gen(24);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> p(1 + gen() % 30);
    for (auto& v : p) v = trial % 3 == 0 ? std::round(u(gen) * 10.0) / 10.0 : u(gen) * u(gen);
    const auto adj = bh_adjust(p);
    const auto want = oracle::bh(p);
    for (std::size_t i = 0; i < p.size(); ++i) {
      REQUIRE(adj[i] == Catch::Approx(want[i]).margin(1e-15));
      REQUIRE(adj[i] >= p[i]);
      REQUIRE(adj[i] <= 1.0);
    }
    std::vector<std::size_t> perm(p.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), gen);
    std::vector<double> q(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) q[i] = p[perm[i]];
    const auto adj_q = bh_adjust(q);
    for (std::size_t i = 0; i < p.size(); ++i) REQUIRE(adj_q[i] == adj[perm[i]]);
  }
}

TEST_CASE("localized prior test with the whole table and an identity simulator", "[prior_gof]") {
  std::mt19937_64 gen(25);
  oracle::Points pts = oracle::random_points(gen, 60, 2);
  const auto ref = ReferenceTable({"a", "b"}, {"a", "b"}, oracle::flatten(pts), oracle::flatten(pts));
  const Resimulator identity{{"a", "b"}, [](std::span<const double> t, CounterRng&) {
                               return std::vector<double>(t.begin(), t.end());
                             }};
  const auto y = oracle::random_points(gen, 1, 2).front();
  const auto r = localized_prior_pvalue(y, ref, identity, 60, ScoreSpec::knn(1), 3);
  const auto split = split_calibration(ref, {30, derive_seed(3, stream::kSplit)});
  const auto plain = prior_pvalue(y, split.reference, split.calibration, ScoreSpec::knn(1));
  CHECK(r.p_hat == plain.p_hat);
  CHECK(r.n_calib == 30);
  REQUIRE(r.holdout);
  CHECK(r.holdout->n_ref_total == 60);

  const auto odd = localized_prior_pvalue(y, ref, identity, 41, ScoreSpec::knn(1), 3);
  CHECK(odd.n_ref == 20);
  CHECK(odd.n_calib == 20);
  CHECK(odd.warnings.size() == 1);
  CHECK_THROWS_AS(localized_prior_pvalue(y, ref, identity, 1, ScoreSpec::knn(1), 3), SizeError);
}

TEST_CASE("localized prior test reports n_calib = n_post / 2 at 2% of 50 000", "[prior_gof]") {
  ToyModelSpec spec;  // default d = 350, m = 20
  const ToyModel model(spec);
  const auto ref = simulate_toy(model, 50000, 31);
  CounterRng rng(4);
  const auto y = model.simulate(model.draw_theta(rng), rng);
  const auto r = localized_prior_pvalue(y, ref, model.resimulator(), 1000, ScoreSpec::max_lof(5, 20), 9);
  CHECK(r.n_calib == 500);
  CHECK(r.n_ref == 500);
  CHECK(r.holdout->epsilon_implied > 0.0);
}

TEST_CASE("localized prior p-values are smaller under the alternative", "[prior_gof]") {
  const ToyModel null_model(small_toy());
  const ToyModel alt_model(small_toy(ToyFamily::gaussian));
  const auto ref = simulate_toy(null_model, 4000, 41);
  double null_sum = 0.0, alt_sum = 0.0;
  const int pods = 60;
  for (int k = 0; k < pods; ++k) {
    CounterRng a(derive_seed(100, k)), b(derive_seed(200, k));
    const auto yn = null_model.simulate(null_model.draw_theta(a), a);
    const auto ya = alt_model.simulate(alt_model.draw_theta(b), b);
    null_sum += localized_prior_pvalue(yn, ref, null_model.resimulator(), 200, ScoreSpec::knn(1), k).p_hat;
    alt_sum += localized_prior_pvalue(ya, ref, null_model.resimulator(), 200, ScoreSpec::knn(1), k).p_hat;
  }
  CHECK(alt_sum / pods < null_sum / pods - 0.1);
}

TEST_CASE("report JSON carries the documented fields and validates", "[prior_gof]") {
  GofReport r;
  r.scenario = "s1";
  r.score_spec = ScoreSpec::max_lof(5, 20);
  r.n_ref = 250;
  r.n_calib = 250;
  r.exceedances = 18;
  r.p_hat = 18.0 / 250.0;
  r.ci = asymptotic_confidence(r.p_hat, r.n_calib);
  r.seed = 12;
  const auto j = to_json(r);
  CHECK(report_schema_errors(j).empty());
  CHECK(j.at("score") == "maxlof(k=5..20)");
  CHECK(j.at("ci").at("method") == "asymptotic");
  CHECK(j.at("p_hat").get<double>() == r.p_hat);

  auto broken = j;
  broken["p_hat"] = 1.5;
  broken.erase("seed");
  CHECK(report_schema_errors(broken).size() == 2);
  broken = j;
  broken["score"] = "forest";
  CHECK(report_schema_errors(broken).size() == 1);
  broken = j;
  broken["exceedances"] = 300;
  CHECK(report_schema_errors(broken).size() == 1);
}
