#include "rxl/rank/human_rank.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

namespace rxl::rank {

bool validate_sentence(std::span<const data::WorkerResponse> responses) {
  if (responses.empty()) throw std::invalid_argument("validate_sentence: no responses");
  std::size_t correct = 0;
  for (const auto& r : responses) correct += (r.correct && !r.impossible()) ? 1 : 0;
  return 2 * correct > responses.size();
}

TimingStats robust_time_stats(std::span<const double> times) {
  if (times.empty()) throw std::invalid_argument("robust_time_stats: empty time list");
  for (double t : times) {
    if (!(t > 0.0) || !std::isfinite(t)) throw std::invalid_argument("robust_time_stats: times must be positive");
  }
  std::vector<double> v(times.begin(), times.end());
  std::sort(v.begin(), v.end());
  std::size_t lo = 0, hi = v.size();
  if (v.size() >= 5) {
    ++lo;
    --hi;
  }
  TimingStats s;
  s.n_used = hi - lo;
  double sum = 0.0;
  for (std::size_t i = lo; i < hi; ++i) sum += v[i];
  s.robust_mean = sum / static_cast<double>(s.n_used);
  if (s.n_used > 1) {
    double ss = 0.0;
    for (std::size_t i = lo; i < hi; ++i) ss += (v[i] - s.robust_mean) * (v[i] - s.robust_mean);
    const double n = static_cast<double>(s.n_used);
    s.standard_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return s;
}

bool better_than(const TimingStats& a, const TimingStats& b) {
  return b.robust_mean - a.robust_mean > a.standard_error + b.standard_error;
}

const RankEntry* RankedSentenceSet::find(const std::string& sentence_id) const {
  for (const RankEntry& e : entries) {
    if (e.sentence_id == sentence_id) return &e;
  }
  return nullptr;
}

RankedSentenceSet build_ranks(std::span<const data::SentenceRecord> sentences, const RankOptions& opts) {
  std::vector<const data::SentenceRecord*> ptrs;
  ptrs.reserve(sentences.size());
  for (const auto& s : sentences) ptrs.push_back(&s);
  return build_ranks(ptrs, opts);
}

RankedSentenceSet build_ranks(const std::vector<const data::SentenceRecord*>& sentences, const RankOptions& opts) {
  RankedSentenceSet out;
  const std::size_t m = sentences.size();
  out.entries.resize(m);
  std::vector<bool> perfect(m);
  for (std::size_t i = 0; i < m; ++i) {
    const data::SentenceRecord& s = *sentences[i];
    if (s.responses.empty()) throw std::invalid_argument("build_ranks: sentence " + s.sentence_id + " has no responses");
    RankEntry& e = out.entries[i];
    e.sentence_id = s.sentence_id;
    std::size_t correct = 0;
    std::vector<double> times;
    for (const auto& r : s.responses) {
      correct += (r.correct && !r.impossible()) ? 1 : 0;
      times.push_back(r.elapsed);
    }
    e.accuracy = static_cast<double>(correct) / static_cast<double>(s.responses.size());
    e.timing = robust_time_stats(times);
    perfect[i] = correct == s.responses.size();
  }
  if (opts.use_time) {
    for (std::size_t i = 0; i < m; ++i) {
      if (!perfect[i]) continue;
      for (std::size_t j = 0; j < m; ++j) {
        if (j != i && perfect[j] && better_than(out.entries[i].timing, out.entries[j].timing)) {
          ++out.entries[i].better_than_count;
        }
      }
    }
  }
  auto above = [&](std::size_t j, std::size_t i) {
    const RankEntry& a = out.entries[j];
    const RankEntry& b = out.entries[i];
    if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
    return perfect[i] && a.better_than_count > b.better_than_count;
  };
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t n_above = 0;
    for (std::size_t j = 0; j < m; ++j) n_above += above(j, i) ? 1 : 0;
    out.entries[i].rank = 1 + n_above;
  }
  return out;
}

RankedPairSet extract_pairs(const RankedSentenceSet& ranks) {
  RankedPairSet pairs;
  for (const RankEntry& p : ranks.entries) {
    for (const RankEntry& q : ranks.entries) {
      if (p.rank < q.rank) pairs.emplace_back(p.sentence_id, q.sentence_id);
    }
  }
  return pairs;
}

double rank_pair_accuracy(const RankedPairSet& pairs, const std::function<double(const std::string&)>& scorer) {
  if (pairs.empty()) throw std::invalid_argument("rank_pair_accuracy: no pairs");
  double hits = 0.0;
  for (const auto& [p, q] : pairs) {
    const double sp = scorer(p), sq = scorer(q);
    if (sp > sq) hits += 1.0;
    else if (sp == sq) hits += 0.5;
  }
  return hits / static_cast<double>(pairs.size());
}

std::vector<double> first_rank_ratio(const std::vector<std::vector<MethodOutcome>>& outcomes) {
  if (outcomes.empty()) throw std::invalid_argument("first_rank_ratio: no instances");
  const std::size_t methods = outcomes.front().size();
  if (methods < 2) throw std::invalid_argument("first_rank_ratio: need at least two methods");
  std::vector<double> credit(methods, 0.0);
  for (const auto& inst : outcomes) {
    if (inst.size() != methods) throw std::invalid_argument("first_rank_ratio: ragged method list");
    auto better = [](const MethodOutcome& a, const MethodOutcome& b) {
      if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
      return a.mean_time < b.mean_time;
    };
    std::size_t best = 0;
    for (std::size_t k = 1; k < methods; ++k) {
      if (better(inst[k], inst[best])) best = k;
    }
    std::vector<std::size_t> firsts;
    for (std::size_t k = 0; k < methods; ++k) {
      if (!better(inst[best], inst[k])) firsts.push_back(k);
    }
    for (std::size_t k : firsts) credit[k] += 1.0 / static_cast<double>(firsts.size());
  }
  for (double& c : credit) c /= static_cast<double>(outcomes.size());
  return credit;
}

std::map<std::string, RankedSentenceSet> rank_dataset(const data::Dataset& ds, const RankOptions& opts) {
  std::map<std::string, std::vector<const data::SentenceRecord*>> by_object;
  for (const auto& s : ds.sentences()) {
    if (validate_sentence(s.responses)) by_object[s.object_id].push_back(&s);
  }
  std::map<std::string, RankedSentenceSet> out;
  for (const auto& [obj, sents] : by_object) out.emplace(obj, build_ranks(sents, opts));
  return out;
}

void write_rank_file(std::ostream& os, const std::map<std::string, RankedSentenceSet>& ranks) {
  nlohmann::ordered_json root = nlohmann::ordered_json::object();
  for (const auto& [obj, set] : ranks) {
    nlohmann::ordered_json inner = nlohmann::ordered_json::object();
    for (const RankEntry& e : set.entries) {
      inner[e.sentence_id] = {{"rank", e.rank}, {"accuracy", e.accuracy}, {"better_than_count", e.better_than_count}};
    }
    root[obj] = std::move(inner);
  }
  os << root.dump(2) << '\n';
}

std::map<std::string, RankedSentenceSet> read_rank_file(std::istream& is) {
  nlohmann::ordered_json root;
  try {
    is >> root;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("rank file: ") + e.what());
  }
  if (!root.is_object()) throw std::runtime_error("rank file: top level must be an object");
  std::map<std::string, RankedSentenceSet> out;
  for (const auto& [obj, inner] : root.items()) {
    RankedSentenceSet set;
    for (const auto& [sid, v] : inner.items()) {
      RankEntry e;
      e.sentence_id = sid;
      try {
        e.rank = v.at("rank").get<std::size_t>();
        e.accuracy = v.at("accuracy").get<double>();
        e.better_than_count = v.at("better_than_count").get<std::size_t>();
      } catch (const nlohmann::json::exception& ex) {
        throw std::runtime_error("rank file: sentence " + sid + ": " + ex.what());
      }
      if (e.rank < 1) throw std::runtime_error("rank file: sentence " + sid + " has rank 0");
      set.entries.push_back(std::move(e));
    }
    out.emplace(obj, std::move(set));
  }
  return out;
}

}  // namespace rxl::rank
