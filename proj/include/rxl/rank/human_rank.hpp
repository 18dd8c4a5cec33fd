#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rxl/data/scene.hpp"

namespace rxl::rank {

struct TimingStats {
  double robust_mean = 0.0;
  double standard_error = 0.0;
  std::size_t n_used = 0;
};

// Strictly more than half of the responses are correct; IMPOSSIBLE is incorrect.
bool validate_sentence(std::span<const data::WorkerResponse> responses);

// Drops one minimum and one maximum when n >= 5. SE uses the n-1 sample deviation, 0 when n_used == 1.
TimingStats robust_time_stats(std::span<const double> times);

// mean(b) - mean(a) > SE(a) + SE(b)
bool better_than(const TimingStats& a, const TimingStats& b);

struct RankEntry {
  std::string sentence_id;
  std::size_t rank = 1;
  double accuracy = 0.0;
  std::size_t better_than_count = 0;
  TimingStats timing;
};

struct RankedSentenceSet {
  std::vector<RankEntry> entries;  // input order
  const RankEntry* find(const std::string& sentence_id) const;
};

struct RankOptions {
  // Break ties inside the all-correct group by response time; off gives accuracy-only ranks.
  bool use_time = true;
};

RankedSentenceSet build_ranks(std::span<const data::SentenceRecord> sentences, const RankOptions& opts = {});
RankedSentenceSet build_ranks(const std::vector<const data::SentenceRecord*>& sentences,
                              const RankOptions& opts = {});

// Ordered (better, worse) sentence id pairs; ties excluded.
using RankedPairSet = std::vector<std::pair<std::string, std::string>>;
RankedPairSet extract_pairs(const RankedSentenceSet& ranks);

// Fraction of pairs with scorer(better) > scorer(worse); exact ties count one half.
double rank_pair_accuracy(const RankedPairSet& pairs, const std::function<double(const std::string&)>& scorer);

struct MethodOutcome {
  double accuracy = 0.0;
  double mean_time = 0.0;
};

// outcomes[instance][method]. Per instance methods are ordered by accuracy, then lower mean time;
// a t-way tie for first gives each 1/t. Returns per-method ratios over instances.
std::vector<double> first_rank_ratio(const std::vector<std::vector<MethodOutcome>>& outcomes);

// Validated sentences of every object, ranked per object. Objects with no kept sentence are absent.
std::map<std::string, RankedSentenceSet> rank_dataset(const data::Dataset& ds, const RankOptions& opts = {});

// {object_id: {sentence_id: {rank, accuracy, better_than_count}}}
void write_rank_file(std::ostream& os, const std::map<std::string, RankedSentenceSet>& ranks);
std::map<std::string, RankedSentenceSet> read_rank_file(std::istream& is);

}  // namespace rxl::rank
