#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "support/fixtures.hpp"
#include "tmd/error.hpp"
#include "tmd/sus_eval.hpp"

using namespace tmd;

namespace {

SUSResponse response(std::array<int, 10> items, int scenario = 1, Platform p = Platform::ios) {
  SUSResponse r;
  r.item_scores = items;
  r.scenario = scenario;
  r.platform = p;
  return r;
}

/// Independent scorer: sum of per-item contributions times 2.5.
double oracle(const std::array<int, 10>& s) {
  double total = 0;
  for (int i = 0; i < 10; ++i) total += (i == 5 || i == 6) ? 5 - s[i] : s[i] - 1;
  return total * 2.5;
}

std::vector<SUSResponse> cohort() {
  std::ifstream in(testing::data_dir() / "fixtures" / "sus_cohort.csv");
  return read_sus_csv(in);
}

}  // namespace

TEST_CASE("analytic extremes and the midpoint") {
  CHECK(score_sus(response({5, 5, 5, 5, 5, 1, 1, 5, 5, 5})) == 100.0);
  CHECK(score_sus(response({1, 1, 1, 1, 1, 5, 5, 1, 1, 1})) == 0.0);
  CHECK(score_sus(response({3, 3, 3, 3, 3, 3, 3, 3, 3, 3})) == 50.0);
  CHECK(score_sus(std::vector<int>{3, 3, 3, 3, 3, 3, 3, 3, 3, 3}) == 50.0);
  CHECK(is_reverse_item(6));
  CHECK(is_reverse_item(7));
  CHECK_FALSE(is_reverse_item(1));
}

TEST_CASE("invalid responses") {
  CHECK_THROWS_AS(score_sus(response({0, 3, 3, 3, 3, 3, 3, 3, 3, 3})), Error);
  CHECK_THROWS_AS(score_sus(response({3, 3, 3, 3, 3, 3, 3, 3, 3, 6})), Error);
  CHECK_THROWS_AS(score_sus(std::vector<int>{3, 3, 3}), Error);
  auto bad = response({3, 3, 3, 3, 3, 3, 3, 3, 3, 3}, 4);
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("range and monotonicity over 100000 random responses") {
  std::mt19937_64 rng(12345);
  std::uniform_int_distribution<int> score(1, 5), item(0, 9);
  for (int i = 0; i < 100000; ++i) {
    std::array<int, 10> s{};
    for (auto& v : s) v = score(rng);
    const double sus = score_sus(response(s));
    REQUIRE(sus >= 0.0);
    REQUIRE(sus <= 100.0);
    REQUIRE(sus == oracle(s));

    const int q = item(rng);
    if (s[q] < 5) {
      auto up = s;
      ++up[q];
      const double after = score_sus(response(up));
      if (q == 5 || q == 6) REQUIRE(after <= sus);
      else REQUIRE(after >= sus);
    }
  }
}

TEST_CASE("aggregation basics") {
  const auto one = response({4, 4, 4, 4, 4, 2, 2, 4, 4, 4});
  const auto rep = aggregate_sus({one}, SusGrouping::scenario);
  REQUIRE(rep.rows.size() == 1);
  CHECK(rep.rows[0].score_mean == score_sus(one));
  CHECK(rep.rows[0].n == 1);
  CHECK(rep.rows[0].question_means[5] == 2.0);

  const auto same = aggregate_sus({one, one, one}, SusGrouping::scenario);
  CHECK(same.rows[0].score_mean == score_sus(one));

  // two disjoint scenarios: (75 + 25) per scenario hand-computed
  const auto a = response({5, 5, 5, 5, 5, 1, 1, 5, 5, 5}, 1);  // 100
  const auto b = response({3, 3, 3, 3, 3, 3, 3, 3, 3, 3}, 1);  // 50
  const auto c = response({1, 1, 1, 1, 1, 5, 5, 1, 1, 1}, 2);  // 0
  const auto d = response({3, 3, 3, 3, 3, 3, 3, 3, 3, 3}, 2);  // 50
  const auto two = aggregate_sus({a, c, b, d}, SusGrouping::scenario);
  REQUIRE(two.rows.size() == 2);
  CHECK(two.rows[0].scenario == 1);
  CHECK(two.rows[0].score_mean == 75.0);
  CHECK(two.rows[0].question_means[0] == 4.0);
  CHECK(two.rows[1].scenario == 2);
  CHECK(two.rows[1].score_mean == 25.0);
  CHECK(two.rows[1].question_means[5] == 4.0);

  CHECK(aggregate_sus({}, SusGrouping::scenario).rows.empty());
}

TEST_CASE("pinned cohort reproduces the quoted item means") {
  const auto responses = cohort();
  REQUIRE(responses.size() == 30);
  const auto rep = aggregate_sus(responses, SusGrouping::scenario);
  REQUIRE(rep.rows.size() == 3);

  const auto& s1 = rep.rows[0];
  CHECK(s1.scenario == 1);
  CHECK(s1.n == 10);
  CHECK(s1.question_means[0] == 4.9);
  CHECK(s1.question_means[1] == 4.8);
  CHECK(s1.question_means[4] == 4.9);
  CHECK(s1.question_means[8] == 4.9);
  CHECK(s1.score_mean == doctest::Approx(70.0).epsilon(1e-12));

  const auto& s2 = rep.rows[1];
  CHECK(s2.question_means[2] == 3.5);
  CHECK(s2.score_mean == doctest::Approx(55.0).epsilon(1e-12));

  const auto& s3 = rep.rows[2];
  CHECK(s3.question_means[0] == 4.9);
  CHECK(s3.question_means[4] == 4.7);
  CHECK(s3.question_means[1] == 4.7);
  CHECK(s3.score_mean == doctest::Approx(70.0).epsilon(1e-12));
  // reverse items rated below the strong positives in scenario 3
  CHECK(5 - s3.question_means[5] < s3.question_means[0] - 1);
}

TEST_CASE("grouping by platform and by both") {
  const auto responses = cohort();
  const auto by_platform = aggregate_sus(responses, SusGrouping::platform);
  REQUIRE(by_platform.rows.size() == 2);
  CHECK(by_platform.rows[0].platform == Platform::ios);
  CHECK(by_platform.rows[0].n + by_platform.rows[1].n == 30);
  CHECK_FALSE(by_platform.rows[0].scenario);

  const auto both = aggregate_sus(responses, SusGrouping::scenario_platform);
  CHECK(both.rows.size() == 6);
  for (const auto& r : both.rows) {
    CHECK(r.scenario);
    CHECK(r.platform);
    CHECK(r.n == 5);
  }
}

TEST_CASE("csv ingestion errors name the line") {
  auto err = [](const std::string& text) -> std::string {
    std::istringstream in(text);
    try {
      read_sus_csv(in);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidScore);
      return e.what();
    }
    return {};
  };
  const std::string header = "scenario,platform,expertise,q1,q2,q3,q4,q5,q6,q7,q8,q9,q10\n";
  CHECK(err(header + "1,ios,expert,3,3,3,3,3,3,3,3,3,9\n").find("line 2") != std::string::npos);
  CHECK(err(header + "1,ios,expert,3,3,3\n").find("line 2") != std::string::npos);
  CHECK(err(header + "1,ios,expert,3,3,3,3,3,3,3,3,3,3\n1,web,expert,3,3,3,3,3,3,3,3,3,3\n").find("line 3") !=
        std::string::npos);
  CHECK(err("a,b,c\n").find("line 1") != std::string::npos);
  CHECK_FALSE(err("").empty());

  std::istringstream ok(header + "2,android,non-expert,4,4,4,4,4,2,2,4,4,4\r\n");
  const auto rs = read_sus_csv(ok);
  REQUIRE(rs.size() == 1);
  CHECK(rs[0].expertise == Expertise::non_expert);
  CHECK(score_sus(rs[0]) == 75.0);
}

TEST_CASE("json and table output") {
  const auto rep = aggregate_sus(cohort(), SusGrouping::scenario);
  const auto j = to_json(rep);
  CHECK(j["rows"].size() == 3);
  CHECK(j["rows"][0]["question_means"][0] == 4.9);
  const auto table = format_table(rep);
  CHECK(table.find("4.90") != std::string::npos);
  const auto back = sus_response_from_json(
      {{"item_scores", {5, 5, 5, 5, 5, 1, 1, 5, 5, 5}}, {"scenario", 3}, {"platform", "android"}});
  CHECK(back.scenario == 3);
  CHECK(back.platform == Platform::android);
  CHECK(score_sus(back) == 100.0);
}
