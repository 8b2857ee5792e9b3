#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "findr/embedding_gateway.hpp"
#include "findr/error.hpp"
#include "findr/refinement.hpp"
#include "findr/synthetic_provider.hpp"
#include "support/fixtures.hpp"

using namespace findr;
using nlohmann::json;

namespace {

Embedding random_vector(std::mt19937& gen, std::size_t dim) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::vector<float> v(dim);
  for (auto& x : v) x = n(gen);
  return Embedding(std::move(v));
}

std::vector<ScoredName> scored(std::initializer_list<std::pair<const char*, double>> xs) {
  std::vector<ScoredName> out;
  for (const auto& [n, s] : xs) out.push_back({n, s});
  return out;
}

}  // namespace

TEST_CASE("score examples") {
  const std::vector<std::string> names{"c"};
  const std::vector<Embedding> t{Embedding{0.6f, 0.8f}};
  const std::vector<Embedding> same{Embedding{0.6f, 0.8f}, Embedding{0.6f, 0.8f}, Embedding{0.6f, 0.8f}};
  CHECK(score_candidates(names, t, same)[0].score == doctest::Approx(1.0).epsilon(1e-12));

  const std::vector<Embedding> t2{Embedding{1, 0}};
  const std::vector<Embedding> imgs{Embedding{1, 0}, Embedding{0, 1}};
  CHECK(score_candidates(names, t2, imgs)[0].score == 0.5);
  CHECK_THROWS_AS(score_candidates(names, t2, std::vector<Embedding>{}), Error);
}

TEST_CASE("score matches a double-loop oracle") {
  std::mt19937 gen(2024);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> names;
    std::vector<Embedding> t, v;
    for (int c = 0; c < 5; ++c) {
      names.push_back("n" + std::to_string(c));
      t.push_back(random_vector(gen, 3));
    }
    for (int j = 0; j < 4; ++j) v.push_back(random_vector(gen, 3));
    const auto got = score_candidates(names, t, v);
    REQUIRE(got.size() == 5);
    for (int c = 0; c < 5; ++c) {
      double total = 0;
      for (int j = 0; j < 4; ++j) {
        double d = 0, a = 0, b = 0;
        for (int k = 0; k < 3; ++k) {
          d += double(t[c][k]) * v[j][k];
          a += double(t[c][k]) * t[c][k];
          b += double(v[j][k]) * v[j][k];
        }
        total += d / (std::sqrt(a) * std::sqrt(b));
      }
      CHECK(got[c].name == names[c]);
      CHECK(std::abs(got[c].score - total / 4) <= 1e-6);
    }
  }
}

TEST_CASE("score is invariant to image order and positive scaling") {
  std::mt19937 gen(7);
  std::vector<std::string> names{"a", "b", "c"};
  std::vector<Embedding> t, v;
  for (int c = 0; c < 3; ++c) t.push_back(random_vector(gen, 8));
  for (int j = 0; j < 9; ++j) v.push_back(random_vector(gen, 8));
  const auto base = score_candidates(names, t, v);
  std::uniform_real_distribution<double> scale(0.01, 50.0);
  for (int trial = 0; trial < 20; ++trial) {
    auto w = v;
    std::shuffle(w.begin(), w.end(), gen);
    for (auto& e : w) e = scaled(e, scale(gen));
    const auto got = score_candidates(names, t, w);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(got[c].score - base[c].score) <= 1e-6);
  }
}

TEST_CASE("retention rules") {
  const auto three = scored({{"low", 0.1}, {"high", 0.9}, {"mid", 0.5}});
  auto r = retain(three, RetentionRule::top_m(2));
  CHECK(r.names == std::vector<std::string>{"high", "mid"});
  CHECK(r.scores == std::vector<double>{0.9, 0.5});
  r = retain(three, RetentionRule::min_score(0.95));
  CHECK(r.names == std::vector<std::string>{"high"});
  r = retain(three, RetentionRule::min_score(0.5));
  CHECK(r.names == std::vector<std::string>{"high", "mid"});
  r = retain(three, RetentionRule::keep_all());
  CHECK(r.names.size() == 3);
  r = retain(three, RetentionRule::top_m(10));
  CHECK(r.names.size() == 3);

  CHECK(retain(scored({{"Rose", 0.5}, {"Aster", 0.5}}), RetentionRule::top_m(1)).names ==
        std::vector<std::string>{"Aster"});

  CHECK_THROWS_AS(retain(three, RetentionRule::top_m(0)), Error);
  CHECK_THROWS_AS(retain(three, RetentionRule::min_score(1.5)), Error);
  CHECK_THROWS_AS(retain({}, RetentionRule::keep_all()), Error);
}

TEST_CASE("retain output is a prefix of the sorted sequence") {
  std::mt19937 gen(99);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ScoredName> xs;
    const int n = 1 + trial % 9;
    for (int i = 0; i < n; ++i) xs.push_back({"name" + std::to_string(i), std::round(u(gen) * 4) / 4});
    auto sorted = xs;
    std::sort(sorted.begin(), sorted.end(), [](const ScoredName& a, const ScoredName& b) {
      return a.score != b.score ? a.score > b.score : a.name < b.name;
    });
    for (const auto& rule : {RetentionRule::keep_all(), RetentionRule::top_m(1 + trial % 4),
                             RetentionRule::min_score(u(gen))}) {
      const auto r = retain(xs, rule);
      REQUIRE(!r.names.empty());
      REQUIRE(r.names.size() <= sorted.size());
      for (std::size_t i = 0; i < r.names.size(); ++i) {
        CHECK(r.names[i] == sorted[i].name);
        CHECK(r.scores[i] == sorted[i].score);
      }
    }
  }
}

TEST_CASE("refined vocabulary json round trip") {
  auto r = retain(scored({{"b", 0.25}, {"a", 0.75}}), RetentionRule::min_score(0.1));
  r.provider_model_id = "m";
  const json j = r;
  CHECK(j["retention"] == json{{"rule", "min_score"}, {"tau", 0.1}});
  const auto back = j.get<RefinedVocabulary>();
  CHECK(back.names == r.names);
  CHECK(back.scores == r.scores);
  CHECK(back.provider_model_id == "m");
  CHECK(back.retention.kind == RetentionRule::Kind::min_score);
  CHECK_THROWS_AS(json({{"rule", "bogus"}}).get<RetentionRule>(), Error);
}

TEST_CASE("refine ranks true classes above distractors") {
  testing::TempDir dir;
  const std::vector<std::string> classes{"Iris", "Tulip", "Lotus"};
  const auto corpus = testing::make_corpus(dir.path, classes, 3, 1);
  EmbeddingGatewayOptions opts;
  opts.sleeper = [](std::chrono::milliseconds) {};
  EmbeddingGateway gw(std::make_shared<SyntheticProvider>(
                          synthetic_plan_from_json(testing::synthetic_slot(classes, 16, 0.05)["synthetic"])),
                      opts);
  const std::vector<std::string> candidates{"Gravel", "Lotus", "Iris", "Tulip", "Parking Lot"};
  const auto r = refine(gw, candidates, corpus.disc, RetentionRule::top_m(3));
  CHECK(r.provider_model_id.rfind("synthetic@", 0) == 0);
  auto top = r.names;
  std::sort(top.begin(), top.end());
  CHECK(top == std::vector<std::string>{"Iris", "Lotus", "Tulip"});
  const auto all = refine(gw, candidates, corpus.disc, RetentionRule::keep_all());
  CHECK(all.names.size() == 5);
  CHECK(std::is_sorted(all.scores.rbegin(), all.scores.rend()));
}
