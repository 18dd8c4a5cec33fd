#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "rxl/data/synth.hpp"
#include "rxl/rank/human_rank.hpp"
#include "rxl/util/rng.hpp"
#include "support/rank_oracle.hpp"

using namespace rxl;
using namespace rxl::rank;
using rxl::testing::oracle_ranks;

namespace {

data::WorkerResponse resp(const std::string& worker, bool correct, double elapsed) {
  data::WorkerResponse r;
  r.worker_id = worker;
  r.chosen = correct ? "o1" : "o2";
  r.correct = correct;
  r.elapsed = elapsed;
  return r;
}

data::WorkerResponse impossible(const std::string& worker) {
  data::WorkerResponse r;
  r.worker_id = worker;
  r.chosen = data::kImpossible;
  r.elapsed = 4.0;
  return r;
}

data::SentenceRecord sentence(const std::string& id, const std::vector<bool>& correct, const std::vector<double>& times) {
  data::SentenceRecord s;
  s.sentence_id = id;
  s.object_id = "o1";
  for (std::size_t i = 0; i < correct.size(); ++i) s.responses.push_back(resp("w" + std::to_string(i), correct[i], times[i]));
  return s;
}

std::vector<std::size_t> ranks_of(const RankedSentenceSet& r) {
  std::vector<std::size_t> out;
  for (const auto& e : r.entries) out.push_back(e.rank);
  return out;
}

}  // namespace

TEST_CASE("sentence validation keeps strict majorities") {
  auto s3 = sentence("a", {true, true, true, false, false}, {1, 1, 1, 1, 1});
  CHECK(validate_sentence(s3.responses));
  auto s2 = sentence("b", {true, true, false, false, false}, {1, 1, 1, 1, 1});
  CHECK_FALSE(validate_sentence(s2.responses));
  std::vector<data::WorkerResponse> imp;
  for (int i = 0; i < 5; ++i) imp.push_back(impossible("w" + std::to_string(i)));
  CHECK_FALSE(validate_sentence(imp));
  auto half = sentence("c", {true, true, false, false}, {1, 1, 1, 1});
  CHECK_FALSE(validate_sentence(half.responses));
  CHECK_THROWS(validate_sentence({}));
}

TEST_CASE("robust timing statistics") {
  const std::vector<double> five = {5, 1, 4, 2, 3};
  const TimingStats s = robust_time_stats(five);
  CHECK(s.n_used == 3);
  CHECK(s.robust_mean == 3.0);
  CHECK(s.standard_error == 1.0 / std::sqrt(3.0));

  const std::vector<double> same = {2.5, 2.5, 2.5, 2.5, 2.5, 2.5};
  const TimingStats e = robust_time_stats(same);
  CHECK(e.robust_mean == 2.5);
  CHECK(e.standard_error == 0.0);
  CHECK(e.n_used == 4);

  const std::vector<double> three = {1, 2, 3};
  CHECK(robust_time_stats(three).robust_mean == 2.0);
  CHECK(robust_time_stats(three).n_used == 3);
  const std::vector<double> one = {7};
  CHECK(robust_time_stats(one).standard_error == 0.0);
  CHECK_THROWS(robust_time_stats(std::vector<double>{}));
  CHECK_THROWS(robust_time_stats(std::vector<double>{1.0, 0.0}));
}

TEST_CASE("better_than is strict, irreflexive and asymmetric") {
  const TimingStats a{3.0, 0.577, 3}, b{9.0, 0.577, 3};
  CHECK(better_than(a, b));
  CHECK_FALSE(better_than(b, a));
  CHECK_FALSE(better_than(a, a));
  const TimingStats c{3.0, 0.5, 3}, d{4.0, 0.5, 3};
  CHECK_FALSE(better_than(c, d));  // difference equals the SE sum
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    const TimingStats x{rng.uniform(1, 10), rng.uniform(0, 2), 3}, y{rng.uniform(1, 10), rng.uniform(0, 2), 3};
    CHECK_FALSE((better_than(x, y) && better_than(y, x)));
    CHECK_FALSE(better_than(x, x));
  }
}

TEST_CASE("build_ranks worked examples") {
  std::vector<data::SentenceRecord> s = {
      sentence("fast", {true, true, true}, {2, 3, 4}),
      sentence("slow", {true, true, true}, {8, 9, 10}),
      sentence("weak", {true, true, true, false, false}, {1, 1, 1, 1, 1}),
  };
  // 0.6 accuracy: three of five
  CHECK(ranks_of(build_ranks(s)) == std::vector<std::size_t>{1, 2, 3});
  CHECK(build_ranks(s).entries[0].better_than_count == 1);

  std::vector<data::SentenceRecord> tied = {sentence("a", {true, true}, {3, 3}), sentence("b", {true, true}, {3, 3}),
                                            sentence("c", {true, true}, {3, 3})};
  CHECK(ranks_of(build_ranks(tied)) == std::vector<std::size_t>{1, 1, 1});

  std::vector<data::SentenceRecord> acc = {sentence("a", {true, true, true, true, true}, {9, 9, 9, 9, 9}),
                                           sentence("b", {true, true, true, true, false}, {1, 1, 1, 1, 1}),
                                           sentence("c", {true, true, true, true, false}, {5, 5, 5, 5, 5})};
  CHECK(ranks_of(build_ranks(acc)) == std::vector<std::size_t>{1, 2, 2});

  RankOptions no_time;
  no_time.use_time = false;
  CHECK(ranks_of(build_ranks(s, no_time)) == std::vector<std::size_t>{1, 1, 3});
}

TEST_CASE("build_ranks equals the brute-force oracle on 500 random fixtures") {
  Rng rng(2024);
  int agree = 0;
  for (int fx = 0; fx < 500; ++fx) {
    const std::size_t m = 1 + rng.index(6);
    std::vector<data::SentenceRecord> sents;
    for (std::size_t i = 0; i < m; ++i) {
      const double p = rng.chance(0.5) ? 1.0 : rng.uniform(0.3, 1.0);
      const double base = rng.uniform(1.0, 6.0);
      std::vector<bool> c;
      std::vector<double> t;
      for (int w = 0; w < 5; ++w) {
        c.push_back(rng.chance(p));
        t.push_back(base * std::exp(0.3 * rng.normal()));
      }
      sents.push_back(sentence("s" + std::to_string(i), c, t));
    }
    const RankedSentenceSet got = build_ranks(sents);
    const auto want = oracle_ranks(sents);
    if (ranks_of(got) == want) ++agree;
    for (const auto& e : got.entries) {
      CHECK(e.rank >= 1);
      for (const auto& f : got.entries) {
        if (e.accuracy > f.accuracy) CHECK(e.rank < f.rank);
      }
    }
  }
  CHECK(agree == 500);
}

TEST_CASE("pair extraction") {
  RankedSentenceSet r;
  r.entries = {{"a", 1, 1, 0, {}}, {"b", 2, 1, 0, {}}, {"c", 2, 1, 0, {}}};
  const RankedPairSet p = extract_pairs(r);
  CHECK(p == RankedPairSet{{"a", "b"}, {"a", "c"}});

  RankedSentenceSet distinct;
  for (std::size_t i = 0; i < 5; ++i) distinct.entries.push_back({"s" + std::to_string(i), i + 1, 1, 0, {}});
  const RankedPairSet all = extract_pairs(distinct);
  CHECK(all.size() == 10);
  for (const auto& [x, y] : all) {
    CHECK(x != y);
    CHECK(std::find(all.begin(), all.end(), std::make_pair(y, x)) == all.end());
  }
  RankedSentenceSet tie;
  tie.entries = {{"a", 1, 1, 0, {}}, {"b", 1, 1, 0, {}}};
  CHECK(extract_pairs(tie).empty());
}

TEST_CASE("rank pair accuracy") {
  RankedSentenceSet r;
  for (std::size_t i = 0; i < 4; ++i) r.entries.push_back({"s" + std::to_string(i), i + 1, 1, 0, {}});
  const RankedPairSet pairs = extract_pairs(r);
  auto gt = [&](const std::string& id) { return static_cast<double>(r.find(id)->rank); };
  CHECK(rank_pair_accuracy(pairs, [&](const std::string& id) { return -gt(id); }) == 1.0);
  CHECK(rank_pair_accuracy(pairs, gt) == 0.0);
  CHECK(rank_pair_accuracy(pairs, [](const std::string&) { return 1.0; }) == 0.5);
  CHECK_THROWS(rank_pair_accuracy({}, gt));

  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::map<std::string, double> s;
    for (const auto& e : r.entries) s[e.sentence_id] = rng.normal();
    const double a = rank_pair_accuracy(pairs, [&](const std::string& id) { return s[id]; });
    const double b = rank_pair_accuracy(pairs, [&](const std::string& id) { return -s[id]; });
    CHECK(a + b == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("first-rank ratio") {
  std::vector<std::vector<MethodOutcome>> wins = {{{1.0, 2.0}, {0.8, 1.0}, {1.0, 3.0}},
                                                  {{0.9, 5.0}, {0.8, 1.0}, {0.2, 1.0}}};
  CHECK(first_rank_ratio(wins) == std::vector<double>{1.0, 0.0, 0.0});
  std::vector<std::vector<MethodOutcome>> tie = {{{1.0, 2.0}, {1.0, 2.0}}};
  CHECK(first_rank_ratio(tie) == std::vector<double>{0.5, 0.5});
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::vector<MethodOutcome>> o(1 + rng.index(20));
    for (auto& inst : o) {
      for (int k = 0; k < 4; ++k) inst.push_back({static_cast<double>(rng.index(3)) / 2.0, static_cast<double>(rng.index(3))});
    }
    const auto ratio = first_rank_ratio(o);
    double total = 0.0;
    for (double x : ratio) total += x;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS(first_rank_ratio({{{1.0, 1.0}}}));
}

TEST_CASE("rank file round trip over a synthetic dataset") {
  data::SynthConfig c;
  c.num_scenes = 10;
  const data::Dataset ds = data::generate_synthetic(c);
  const auto ranks = rank_dataset(ds);
  CHECK(!ranks.empty());
  std::stringstream ss;
  write_rank_file(ss, ranks);
  const auto back = read_rank_file(ss);
  REQUIRE(back.size() == ranks.size());
  for (const auto& [obj, set] : ranks) {
    const auto& other = back.at(obj);
    REQUIRE(other.entries.size() == set.entries.size());
    for (const auto& e : set.entries) {
      const RankEntry* f = other.find(e.sentence_id);
      REQUIRE(f != nullptr);
      CHECK(f->rank == e.rank);
      CHECK(f->accuracy == e.accuracy);
      CHECK(f->better_than_count == e.better_than_count);
    }
  }
  std::stringstream bad("{\"o\": {\"s\": {\"rank\": 0, \"accuracy\": 1, \"better_than_count\": 0}}}");
  CHECK_THROWS(read_rank_file(bad));
}
