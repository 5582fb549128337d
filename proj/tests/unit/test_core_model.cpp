#include <doctest.h>

#include <algorithm>
#include <set>

#include "support.hpp"
#include "transport/config.hpp"
#include "transport/error.hpp"
#include "transport/simulation.hpp"

using namespace transport;

TEST_SUITE("core_model") {

TEST_CASE("two source rows and one target row with V = X") {
  auto dir = testing::scratch_dir("core-vx");
  testing::write_text(dir / "s.csv", "A,Y,X1,X2\n0,1.5,0.1,0.2\n1,2.5,0.3,0.4\n");
  testing::write_text(dir / "t.csv", "X1,X2\n0.5,0.6\n");
  Schema schema;
  schema.x_columns = {"X1", "X2"};
  schema.v_columns = {"X1", "X2"};
  const auto r = load_combined_csv(dir / "s.csv", dir / "t.csv", schema);
  CHECK(r.sample.n1() == 2);
  CHECK(r.sample.n2() == 1);
  CHECK(r.sample.v_index_map() == std::vector<std::size_t>{0, 1});
  CHECK(r.sample.v_equals_x());
  CHECK(r.sample.source()[1].a == 1);
  CHECK(r.sample.target()[0].v[1] == 0.6);
}

TEST_CASE("survey columns populate the target design") {
  auto dir = testing::scratch_dir("core-survey");
  testing::write_text(dir / "s.csv", "A,Y,X1\n0,1,0.1\n1,2,0.3\n");
  testing::write_text(dir / "t.csv", "X1,strat,psu,w\n0.5,1,7,2.5\n0.7,2,8,1\n");
  Schema schema;
  schema.x_columns = {"X1"};
  schema.v_columns = {"X1"};
  schema.stratum = "strat";
  schema.cluster = "psu";
  schema.weight = "w";
  const auto r = load_combined_csv(dir / "s.csv", dir / "t.csv", schema);
  REQUIRE(r.sample.has_survey());
  CHECK(*r.sample.target()[0].survey == SurveyInfo{1, 7, 2.5});
  CHECK(*r.sample.target()[1].survey == SurveyInfo{2, 8, 1.0});
}

TEST_CASE("non-binary treatment is a data error naming the row") {
  auto dir = testing::scratch_dir("core-a2");
  testing::write_text(dir / "s.csv", "A,Y,X1\n0,1,0.1\n2,2,0.3\n");
  testing::write_text(dir / "t.csv", "X1\n0.5\n");
  Schema schema;
  schema.x_columns = {"X1"};
  schema.v_columns = {"X1"};
  try {
    load_combined_csv(dir / "s.csv", dir / "t.csv", schema);
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
}

TEST_CASE("rows with missing fields are dropped and reported") {
  auto dir = testing::scratch_dir("core-missing");
  testing::write_text(dir / "s.csv", "A,Y,X1\n0,1,0.1\n1,,0.3\n1,2,NA\n1,3,0.2\n");
  testing::write_text(dir / "t.csv", "X1\n0.5\n\n");
  Schema schema;
  schema.x_columns = {"X1"};
  schema.v_columns = {"X1"};
  const auto r = load_combined_csv(dir / "s.csv", dir / "t.csv", schema);
  CHECK(r.sample.n1() == 2);
  CHECK(r.rejected.size() == 2);
  CHECK(r.rejected[0].row == 2);
}

TEST_CASE("V not contained in X is a schema error") {
  Schema schema;
  schema.x_columns = {"X1"};
  schema.v_columns = {"Z"};
  CHECK_THROWS_AS(resolve_v_index_map(schema), SchemaError);
}

TEST_CASE("load, write and reload round-trips") {
  const auto sim = simulate_dgp(300, 11);
  Schema schema;
  schema.x_columns = {"X1", "X2", "X3", "X4", "X5"};
  schema.v_columns = {"X1", "X2", "X3"};
  auto dir = testing::scratch_dir("core-roundtrip");
  write_combined_csv(sim.sample, schema, dir / "s.csv", dir / "t.csv");
  const auto a = load_combined_csv(dir / "s.csv", dir / "t.csv", schema).sample;
  write_combined_csv(a, schema, dir / "s2.csv", dir / "t2.csv");
  const auto b = load_combined_csv(dir / "s2.csv", dir / "t2.csv", schema).sample;
  REQUIRE(a.n1() == sim.sample.n1());
  REQUIRE(a.n2() == sim.sample.n2());
  for (std::size_t i = 0; i < a.n1(); ++i) {
    CHECK(a.source()[i].x == sim.sample.source()[i].x);
    CHECK(a.source()[i].y == sim.sample.source()[i].y);
    CHECK(b.source()[i].x == a.source()[i].x);
  }
  for (std::size_t i = 0; i < a.n2(); ++i) CHECK(b.target()[i].v == sim.sample.target()[i].v);
  CHECK(testing::read_text(dir / "s.csv") == testing::read_text(dir / "s2.csv"));
}

TEST_CASE("clip_probabilities") {
  const std::vector<double> v{0.005, 0.5, 0.999};
  CHECK(clip_probabilities(v, 0.01) == std::vector<double>{0.01, 0.5, 0.99});
  CHECK(clip_probabilities(std::vector<double>{0.3}, 0.01) == std::vector<double>{0.3});
  CHECK(clip_probabilities(std::vector<double>{0.0, 1.0}, 0.05) == std::vector<double>{0.05, 0.95});
  const auto once = clip_probabilities(v, 0.01);
  CHECK(clip_probabilities(once, 0.01) == once);
  CHECK_THROWS_AS(clip_probabilities(v, 0.5), ArgumentError);
  CHECK_THROWS_AS(clip_probabilities(v, 0.0), ArgumentError);
}

TEST_CASE("split_folds balances and partitions") {
  const auto f = split_folds(10, 5, 7);
  for (int k = 0; k < 5; ++k) CHECK(f.size(k) == 2);
  const auto g = split_folds(7, 3, 1);
  std::multiset<std::size_t> sizes{g.size(0), g.size(1), g.size(2)};
  CHECK(sizes == std::multiset<std::size_t>{2, 2, 3});
  CHECK(split_folds(7, 3, 1).fold == g.fold);

  const auto h = split_folds(103, 4, 99);
  std::vector<int> seen(103, 0);
  for (int k = 0; k < 4; ++k)
    for (auto i : h.members(k)) ++seen[i];
  CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
  CHECK_THROWS_AS(split_folds(3, 4, 1), ArgumentError);
  CHECK_THROWS_AS(split_folds(3, 1, 1), ArgumentError);
}

TEST_CASE("estimate JSON round trip") {
  const auto e = make_estimate(0.25, 0.1, 42, {EstimandKind::generalization, Arm::treated}, Method::plugin, true);
  const auto j = estimate_to_json(e);
  for (const char* key : {"\"point\"", "\"se\"", "\"ci_lower\"", "\"ci_upper\"", "\"n_used\"", "\"kind\"", "\"arm\"", "\"method\""})
    CHECK(j.find(key) != std::string::npos);
  const auto back = estimate_from_json(j);
  CHECK(back.point == e.point);
  CHECK(back.ci_upper == e.ci_upper);
  CHECK(back.spec == e.spec);
  CHECK(back.method == Method::plugin);
  CHECK(back.naive_se);
  CHECK(e.ci_lower == doctest::Approx(0.25 - kNormalQuantile975 * 0.1));
}

TEST_CASE("subset keeps record ids") {
  const auto s = testing::tiny_sample({0, 1, 2}, {0, 1, 0}, {1, 2, 3}, {4, 5});
  const std::vector<std::size_t> idx{1, 4};
  const auto sub = s.subset(idx);
  CHECK(sub.n1() == 1);
  CHECK(sub.n2() == 1);
  CHECK(sub.record_ids() == std::vector<std::size_t>{1, 4});
}

}  // TEST_SUITE
