#include <doctest.h>

#include "support.hpp"
#include "transport/config.hpp"
#include "transport/error.hpp"

using namespace transport;

TEST_SUITE("config") {

TEST_CASE("parse plain key/value text") {
  const auto c = KeyValueConfig::parse("# comment\nseed = 7\n\n  n_grid=100, 200 \n");
  CHECK(*c.get("seed") == "7");
  CHECK(*c.get("n_grid") == "100, 200");
  CHECK(split_list(*c.get("n_grid")) == std::vector<std::string>{"100", "200"});
  CHECK_FALSE(c.contains("reps"));
}

TEST_CASE("embedded lines win over the rest of a CSV artifact") {
  const auto c = KeyValueConfig::parse("#cfg seed = 3\n#cfg command = simulate\nestimator,n\nplugin,10\n");
  CHECK(c.entries().size() == 2);
  CHECK(*c.get("command") == "simulate");
}

TEST_CASE("JSON artifact with a config object") {
  const auto c = KeyValueConfig::parse(R"({"config": {"seed": "9", "kind": "tr"}, "estimates": []})");
  CHECK(*c.get("seed") == "9");
  CHECK(*c.get("kind") == "tr");
}

TEST_CASE("render then parse is the identity") {
  KeyValueConfig c;
  c.set("b", "2");
  c.set("a", "x,y");
  const auto back = KeyValueConfig::parse(c.render(kEmbeddedConfigPrefix));
  CHECK(back.entries() == c.entries());
  CHECK(c.render() == "a = x,y\nb = 2\n");
}

TEST_CASE("schema keys") {
  KeyValueConfig c;
  c.set("x_columns", "X1,X2");
  c.set("v_columns", "X2");
  const Schema s = schema_from_config(c);
  CHECK(s.treatment == "A");
  CHECK(s.v_columns == std::vector<std::string>{"X2"});
  KeyValueConfig out;
  schema_to_config(s, out);
  CHECK(schema_from_config(out).x_columns == s.x_columns);
}

TEST_CASE("malformed line is a config error") {
  CHECK_THROWS_AS(KeyValueConfig::parse("no equals sign here\n"), ConfigError);
}

}  // TEST_SUITE
