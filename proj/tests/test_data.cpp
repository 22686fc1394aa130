#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <atomic>
#include <set>
#include <stdexcept>

#include "lfgof/io.hpp"
#include "lfgof/parallel.hpp"
#include "lfgof/rng.hpp"
#include "lfgof/table.hpp"
#include "test_util.hpp"

using namespace lfgof;

namespace {

ReferenceTable sequence_table(std::size_t n) {
  std::vector<double> params, stats;
  for (std::size_t i = 0; i < n; ++i) {
    params.push_back(static_cast<double>(i));
    stats.push_back(0.5 * static_cast<double>(i));
    stats.push_back(-static_cast<double>(i));
  }
  return ReferenceTable({"a"}, {"x", "y"}, params, stats);
}

}  // namespace

TEST_CASE("three-row csv loads with its dimensions", "[data]") {
  const auto dir = testutil::scratch("data3");
  testutil::write_file(dir / "t.csv",
                       "param:a,param:b,stat:x,stat:y\n"
                       "1,2,0.1,0.2\n"
                       "3,4,0.3,0.4\n"
                       "5,6,0.5,0.6\n");
  const auto t = load_reference_table(dir / "t.csv");
  CHECK(t.size() == 3);
  CHECK(t.n_params() == 2);
  CHECK(t.n_stats() == 2);
  CHECK(t.param_names() == std::vector<std::string>{"a", "b"});
  CHECK(t.summaries(2)[1] == 0.6);
  CHECK(t.params(1)[0] == 3.0);
}

TEST_CASE("NaN statistic is reported with its row and column", "[data]") {
  const auto dir = testutil::scratch("datanan");
  std::string text = "param:a,stat:x,stat:y\n";
  for (int r = 1; r <= 9; ++r) text += std::to_string(r) + "," + (r == 7 ? "NaN" : "1.5") + ",2\n";
  testutil::write_file(dir / "t.csv", text);
  try {
    load_reference_table(dir / "t.csv");
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(e.row() == 7);
    CHECK(e.column() == "stat:x");
    CHECK(std::string(e.what()).find("row 7") != std::string::npos);
  }
}

TEST_CASE("non-numeric cell, missing column and empty table errors", "[data]") {
  const auto dir = testutil::scratch("dataerr");
  testutil::write_file(dir / "bad.csv", "param:a,stat:x\n1,2\n3,abc\n");
  CHECK_THROWS_AS(load_reference_table(dir / "bad.csv"), ValidationError);

  testutil::write_file(dir / "short.csv", "param:a,stat:x\n1,2\n3\n");
  CHECK_THROWS_AS(load_reference_table(dir / "short.csv"), ValidationError);

  testutil::write_file(dir / "nostat.csv", "param:a,other\n1,2\n");
  CHECK_THROWS_AS(load_reference_table(dir / "nostat.csv"), SchemaError);

  ColumnSchema schema;
  schema.stats = {"x", "missing"};
  testutil::write_file(dir / "named.csv", "x,z\n1,2\n");
  CHECK_THROWS_AS(load_reference_table(dir / "named.csv", schema), SchemaError);

  testutil::write_file(dir / "empty.csv", "param:a,stat:x\n");
  CHECK_THROWS_AS(load_reference_table(dir / "empty.csv"), EmptyTableError);
  testutil::write_file(dir / "blank.csv", "");
  CHECK_THROWS_AS(load_reference_table(dir / "blank.csv"), EmptyTableError);
  CHECK_THROWS_AS(load_reference_table(dir / "nope.csv"), SchemaError);
}

TEST_CASE("schema maps foreign whitespace exports", "[data]") {
  const auto dir = testutil::scratch("dataws");
  testutil::write_file(dir / "ref.txt",
                       "Scenario  N1   t2    HW_1   FST_1_2\n"
                       "1  100  150  0.25  0.01\n"
                       "1\t200\t160\t0.30\t0.02\n");
  const auto schema = ColumnSchema::from_json(
      nlohmann::json::parse(R"({"delimiter":"whitespace","params":["N1","t2"],"stats":["HW_1","FST_1_2"]})"));
  const auto t = load_reference_table(dir / "ref.txt", schema);
  REQUIRE(t.size() == 2);
  CHECK(t.stat_names() == std::vector<std::string>{"HW_1", "FST_1_2"});
  CHECK(t.params(1)[1] == 160.0);
  CHECK(t.summaries(1)[0] == 0.30);

  testutil::write_file(dir / "obs.txt", "FST_1_2 HW_1\n0.5 0.7\n");
  const auto obs = load_observations(dir / "obs.txt", t.stat_names(), schema);
  REQUIRE(obs.size() == 1);
  CHECK(obs[0] == std::vector<double>{0.7, 0.5});

  CHECK_THROWS_AS(ColumnSchema::from_json(nlohmann::json::parse(R"({"delimiter":"::"})")), SchemaError);
}

TEST_CASE("tab-separated files are read by extension", "[data]") {
  const auto dir = testutil::scratch("datatsv");
  testutil::write_file(dir / "t.tsv", "param:a\tstat:x\n1\t2\n");
  CHECK(load_reference_table(dir / "t.tsv").summaries(0)[0] == 2.0);
}

TEST_CASE("csv write and read round-trips bit for bit", "[data]") {
  const auto dir = testutil::scratch("datart");
  CounterRng rng(99);
  std::vector<double> params, stats;
  for (int i = 0; i < 200; ++i) {
    params.push_back(rng.uniform01() * 1e7 - 3.3);
    stats.push_back(rng.uniform_open01() * 1e-9);
    stats.push_back(-rng.uniform01());
  }
  const ReferenceTable t({"p"}, {"s1", "s2"}, params, stats);
  write_table_csv(dir / "t.csv", t);
  const auto back = load_reference_table(dir / "t.csv");
  CHECK(back.param_data() == t.param_data());
  CHECK(back.summary_data() == t.summary_data());
}

TEST_CASE("a 50 000-row table loads in full", "[data]") {
  const auto dir = testutil::scratch("databig");
  const auto t = sequence_table(50000);
  write_table_csv(dir / "big.csv", t);
  const auto back = load_reference_table(dir / "big.csv");
  CHECK(back.size() == 50000);
  CHECK(back.summaries(49999)[1] == -49999.0);
}

TEST_CASE("table construction rejects non-finite and inconsistent storage", "[data]") {
  CHECK_THROWS_AS(ReferenceTable({"a"}, {"x"}, {1.0}, {std::nan("")}), ValidationError);
  CHECK_THROWS_AS(ReferenceTable({"a"}, {"x"}, {1.0, 2.0}, {1.0}), SchemaError);
  CHECK_THROWS_AS(ReferenceTable({"a"}, {}, {}, {}), SchemaError);
  CHECK_THROWS_AS(ReferenceTable::from_particles({"a"}, {"x"}, {{{1.0, 2.0}, {1.0}}}), SchemaError);
}

TEST_CASE("calibration split is a seeded partition", "[data]") {
  const auto t = sequence_table(10);
  const auto a = split_calibration(t, {5, 42});
  CHECK(a.reference.size() == 5);
  CHECK(a.calibration.size() == 5);
  std::set<std::size_t> all(a.reference_rows.begin(), a.reference_rows.end());
  all.insert(a.calibration_rows.begin(), a.calibration_rows.end());
  CHECK(all.size() == 10);

  const auto b = split_calibration(t, {5, 42});
  CHECK(a.calibration_rows == b.calibration_rows);
  CHECK(a.calibration.summary_data() == b.calibration.summary_data());
  CHECK(split_calibration(t, {5, 43}).calibration_rows != a.calibration_rows);

  const auto big = split_calibration(sequence_table(5000), {2500, 7});
  CHECK(big.reference.size() == 2500);
  CHECK(big.calibration.size() == 2500);

  CHECK_THROWS_AS(split_calibration(t, {10, 1}), SizeError);
  CHECK_THROWS_AS(split_calibration(t, {0, 1}), SizeError);
}

TEST_CASE("split partition property over random sizes", "[data][property]") {
  CounterRng gen(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + gen() % 300;
    const std::size_t c = 1 + gen() % (n - 1);
    const auto s = split_calibration(sequence_table(n), {c, gen()});
    REQUIRE(s.reference.size() + s.calibration.size() == n);
    std::vector<std::size_t> merged = s.reference_rows;
    merged.insert(merged.end(), s.calibration_rows.begin(), s.calibration_rows.end());
    std::sort(merged.begin(), merged.end());
    for (std::size_t i = 0; i < n; ++i) REQUIRE(merged[i] == i);
    // ids follow the rows they came from
    for (std::size_t i = 0; i < s.calibration.size(); ++i) REQUIRE(s.calibration.id(i) == s.calibration_rows[i]);
  }
}

TEST_CASE("counter rng streams are reproducible and distinct", "[data]") {
  CounterRng a(1), b(1);
  for (int i = 0; i < 100; ++i) REQUIRE(a() == b());
  CounterRng c(1);
  c();
  CHECK(CounterRng(1, 1)() == c());  // counter addressable
  CHECK(a.child(3)() == b.child(3)());
  CHECK(a.child(3)() != a.child(4)());
  CHECK(derive_seed(1, 2) != derive_seed(2, 1));
  double lo = 1.0, hi = 0.0, sum = 0.0;
  CounterRng u(7);
  for (int i = 0; i < 100000; ++i) {
    const double x = u.uniform_open01();
    lo = std::min(lo, x);
    hi = std::max(hi, x);
    sum += x;
  }
  CHECK(lo > 0.0);
  CHECK(hi < 1.0);
  CHECK(sum / 100000.0 == Catch::Approx(0.5).margin(0.005));
}

TEST_CASE("parallel_for fills every slot and reports the lowest failing index", "[data]") {
  std::vector<int> out(1000, 0);
  parallel_for(out.size(), 4, [&](std::size_t i) { out[i] = static_cast<int>(i) * 2; });
  for (std::size_t i = 0; i < out.size(); ++i) REQUIRE(out[i] == static_cast<int>(i) * 2);

  try {
    parallel_for(100, 4, [](std::size_t i) {
      if (i == 30 || i == 80) throw std::runtime_error(std::to_string(i));
    });
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()) == "30");
  }
}
