#include <doctest.h>

#include <cmath>

#include "mhs/config.hpp"
#include "mhs/rng.hpp"

using namespace mhs;

TEST_CASE("config parse, typed access, canonical form") {
  const std::string text =
      "# comment\n"
      "[env]\n"
      "seed = 7\n"
      "reward_scale = 0.01\n"
      "flag = true\n"
      "rates = 140, 120, 100\n"
      "\n"
      "[nodes]\n"
      "in0 incoming loop0 4 5.0\n";
  ConfigDoc doc = ConfigDoc::parse(text);
  CHECK(doc.get_int("env", "seed", 0) == 7);
  CHECK(doc.get_double("env", "reward_scale", 0) == doctest::Approx(0.01));
  CHECK(doc.get_bool("env", "flag", false));
  CHECK(doc.get_double_list("env", "rates", {}).size() == 3);
  CHECK(doc.get_int("env", "missing", 42) == 42);
  REQUIRE(doc.section("nodes").rows.size() == 1);
  CHECK(doc.section("nodes").rows[0][1] == "incoming");

  // canonical dump is stable and reparses to itself
  ConfigDoc again = ConfigDoc::parse(doc.canonical());
  CHECK(again.canonical() == doc.canonical());

  CHECK_THROWS_AS(ConfigDoc::parse("orphan = 1\n"), ConfigError);
  CHECK_THROWS_AS(doc.get_int("env", "flag", 0), ConfigError);
}

TEST_CASE("config overlay: later keys win, hash tracks content") {
  ConfigDoc base = ConfigDoc::parse("[train]\nepisodes = 300\nlr = 0.001\n");
  ConfigDoc over = ConfigDoc::parse("[train]\nepisodes = 60\n");
  base.merge_from(over);
  CHECK(base.get_int("train", "episodes", 0) == 60);
  CHECK(base.get_double("train", "lr", 0) == doctest::Approx(0.001));
  uint64_t h1 = fnv1a64(base.canonical());
  base.set("train", "episodes", "61");
  CHECK(fnv1a64(base.canonical()) != h1);
}

TEST_CASE("rng streams are deterministic and roughly uniform") {
  Rng a(123), b(123), c(124);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(a.next_u64() != c.next_u64());

  Rng d1 = Rng::derive(99, 1);
  Rng d2 = Rng::derive(99, 2);
  CHECK(d1.next_u64() != d2.next_u64());

  Rng u(5);
  int buckets[10] = {0};
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) buckets[u.next_below(10)] += 1;
  for (int k = 0; k < 10; ++k) {
    // 5 sigma around draws/10 under binomial
    double sigma = std::sqrt(draws * 0.1 * 0.9);
    CHECK(std::abs(buckets[k] - draws / 10.0) < 5 * sigma);
  }

  // weighted draw hits only positive-weight entries
  Rng w(6);
  std::vector<double> weights = {0.0, 0.5, 0.5};
  for (int i = 0; i < 1000; ++i) CHECK(w.weighted(weights) != 0);
}
