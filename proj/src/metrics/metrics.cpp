#include "rxl/metrics/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace rxl::metrics {

Tokens tokenize(const std::string& sentence) {
  Tokens out;
  std::string cur;
  for (char ch : sentence) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c) || std::ispunct(c)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string join(const Tokens& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s.push_back(' ');
    s += tokens[i];
  }
  return s;
}

NGramCounts ngrams(const Tokens& tokens, std::size_t n) {
  NGramCounts counts;
  if (n == 0 || tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string g = tokens[i];
    for (std::size_t j = 1; j < n; ++j) {
      g.push_back(' ');
      g += tokens[i + j];
    }
    counts[g] += 1.0;
  }
  return counts;
}

NGramIndex::NGramIndex(const std::vector<std::vector<Tokens>>& reference_sets) : corpus_size_(reference_sets.size()) {
  log_corpus_size_ = std::log(static_cast<double>(std::max<std::size_t>(corpus_size_, 1)));
  for (const auto& refs : reference_sets) {
    std::set<NGram> seen;
    for (const Tokens& r : refs) {
      for (std::size_t n = 1; n <= kMaxN; ++n) {
        for (const auto& [g, c] : ngrams(r, n)) seen.insert(g);
      }
    }
    for (const NGram& g : seen) df_[g] += 1.0;
  }
}

double NGramIndex::document_frequency(const NGram& g) const {
  auto it = df_.find(g);
  return it == df_.end() ? 0.0 : it->second;
}

const char* metric_name(Metric m) {
  switch (m) {
    case Metric::kCider: return "cider";
    case Metric::kCiderD: return "cider-d";
    case Metric::kR1Cider: return "r1-cider";
    case Metric::kR2Cider: return "r2-cider";
  }
  return "?";
}

std::optional<Metric> parse_metric(const std::string& name) {
  for (Metric m : {Metric::kCider, Metric::kCiderD, Metric::kR1Cider, Metric::kR2Cider}) {
    if (name == metric_name(m)) return m;
  }
  return std::nullopt;
}

namespace {

struct TfIdf {
  std::array<std::map<NGram, double>, kMaxN> vec;
  std::array<double, kMaxN> norm{};
  double length = 0.0;
};

TfIdf tfidf(const Tokens& tokens, const NGramIndex& index) {
  TfIdf out;
  out.length = static_cast<double>(tokens.size());
  for (std::size_t n = 1; n <= kMaxN; ++n) {
    for (const auto& [g, tf] : ngrams(tokens, n)) {
      const double df = std::log(std::max(1.0, index.document_frequency(g)));
      const double v = tf * (index.log_corpus_size() - df);
      out.vec[n - 1][g] = v;
      out.norm[n - 1] += v * v;
    }
    out.norm[n - 1] = std::sqrt(out.norm[n - 1]);
  }
  return out;
}

double similarity(const TfIdf& c, const TfIdf& r, std::size_t n, CiderVariant variant) {
  double val = 0.0;
  for (const auto& [g, v] : c.vec[n]) {
    auto it = r.vec[n].find(g);
    if (it == r.vec[n].end()) continue;
    val += (variant == CiderVariant::kD ? std::min(v, it->second) : v) * it->second;
  }
  if (c.norm[n] != 0.0 && r.norm[n] != 0.0) val /= c.norm[n] * r.norm[n];
  if (variant == CiderVariant::kD) {
    const double delta = c.length - r.length;
    val *= std::exp(-(delta * delta) / (2.0 * kCiderSigma * kCiderSigma));
  }
  return val;
}

}  // namespace

double weighted_cider(const Tokens& candidate, const std::vector<Tokens>& references, std::span<const double> weights,
                      const NGramIndex& index, CiderVariant variant) {
  if (references.empty()) throw std::invalid_argument("cider: no references");
  if (weights.size() != references.size()) throw std::invalid_argument("cider: one weight per reference required");
  if (candidate.empty()) return 0.0;
  const TfIdf c = tfidf(candidate, index);
  std::array<double, kMaxN> per_n{};
  for (std::size_t j = 0; j < references.size(); ++j) {
    const TfIdf r = tfidf(references[j], index);
    for (std::size_t n = 0; n < kMaxN; ++n) per_n[n] += weights[j] * similarity(c, r, n, variant);
  }
  double score = 0.0;
  for (double v : per_n) score += v;
  return std::max(0.0, score / static_cast<double>(kMaxN) * 10.0);
}

double cider(const Tokens& candidate, const std::vector<Tokens>& references, const NGramIndex& index,
             CiderVariant variant) {
  const std::vector<std::size_t> uniform(references.size(), 1);
  return r_cider(candidate, references, uniform, index, variant);
}

std::vector<double> rank_weights(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw std::invalid_argument("rank_weights: no ranks");
  for (std::size_t r : ranks) {
    if (r < 1) throw std::invalid_argument("rank_weights: ranks must be >= 1");
  }
  // With L = lcm(ranks), w_j = (L / r_j) / sum_k (L / r_k) has integer numerator and denominator.
  std::uint64_t L = 1;
  bool exact = true;
  for (std::size_t r : ranks) {
    const std::uint64_t g = std::gcd(L, static_cast<std::uint64_t>(r));
    const std::uint64_t f = static_cast<std::uint64_t>(r) / g;
    if (L > (std::numeric_limits<std::uint64_t>::max() >> 8) / f) {
      exact = false;
      break;
    }
    L *= f;
  }
  std::vector<double> w(ranks.size());
  if (exact) {
    std::uint64_t total = 0;
    for (std::size_t r : ranks) total += L / r;
    for (std::size_t j = 0; j < ranks.size(); ++j) {
      w[j] = static_cast<double>(L / ranks[j]) / static_cast<double>(total);
    }
    return w;
  }
  double s = 0.0;
  for (std::size_t r : ranks) s += 1.0 / static_cast<double>(r);
  for (std::size_t j = 0; j < ranks.size(); ++j) w[j] = 1.0 / (static_cast<double>(ranks[j]) * s);
  return w;
}

double r_cider(const Tokens& candidate, const std::vector<Tokens>& references, std::span<const std::size_t> ranks,
               const NGramIndex& index, CiderVariant variant) {
  if (ranks.size() != references.size()) throw std::invalid_argument("r_cider: one rank per reference required");
  if (references.empty()) throw std::invalid_argument("cider: no references");
  const std::vector<double> w = rank_weights(ranks);
  return weighted_cider(candidate, references, w, index, variant);
}

std::string argmax_object(std::span<const Candidate> candidates) {
  if (candidates.empty()) throw std::invalid_argument("argmax_object: no candidates");
  const Candidate* best = &candidates[0];
  for (const Candidate& c : candidates) {
    if (c.score > best->score || (c.score == best->score && c.object_id < best->object_id)) best = &c;
  }
  return best->object_id;
}

double comprehension_accuracy(const std::map<std::string, std::string>& predictions,
                              const std::map<std::string, std::string>& truth) {
  if (truth.empty()) throw std::invalid_argument("comprehension_accuracy: no instances");
  std::size_t hits = 0;
  for (const auto& [inst, obj] : truth) {
    auto it = predictions.find(inst);
    if (it == predictions.end()) throw std::invalid_argument("comprehension_accuracy: no prediction for " + inst);
    hits += it->second == obj ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

Histogram saliency_bins(std::span<const SaliencyItem> items, bool normalize, std::size_t bins) {
  if (bins == 0) throw std::invalid_argument("saliency_bins: bins must be >= 1");
  Histogram h;
  h.counts.assign(bins, 0);
  h.mean_value.assign(bins, 0.0);
  std::vector<double> x;
  x.reserve(items.size());
  for (const SaliencyItem& it : items) {
    if (!(it.score >= 0.0)) throw std::invalid_argument("saliency_bins: scores must be >= 0");
    if (normalize && !(it.width * it.height > 0.0)) throw std::invalid_argument("saliency_bins: empty box area");
    x.push_back(normalize ? it.score / std::sqrt(it.width * it.height) : it.score);
  }
  const double lo = x.empty() ? 0.0 : *std::min_element(x.begin(), x.end());
  const double hi = x.empty() ? 0.0 : *std::max_element(x.begin(), x.end());
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b <= bins; ++b) h.edges.push_back(b == bins ? hi : lo + width * static_cast<double>(b));
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::size_t b = width > 0.0 ? static_cast<std::size_t>((x[i] - lo) / width) : 0;
    b = std::min(b, bins - 1);
    ++h.counts[b];
    h.mean_value[b] += items[i].value;
  }
  for (std::size_t b = 0; b < bins; ++b) {
    if (h.counts[b]) h.mean_value[b] /= static_cast<double>(h.counts[b]);
  }
  return h;
}

std::string Histogram::csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "bin_lo,bin_hi,count,mean_value\n";
  for (std::size_t b = 0; b < counts.size(); ++b) {
    os << edges[b] << ',' << edges[b + 1] << ',' << counts[b] << ',' << mean_value[b] << '\n';
  }
  return os.str();
}

CorpusStats corpus_stats(const std::vector<Tokens>& sentences) {
  CorpusStats s;
  std::set<std::string> vocab;
  std::size_t total = 0;
  for (const Tokens& t : sentences) {
    vocab.insert(t.begin(), t.end());
    total += t.size();
    ++s.length_histogram[t.size()];
  }
  s.vocabulary_size = vocab.size();
  if (!sentences.empty()) s.mean_length = static_cast<double>(total) / static_cast<double>(sentences.size());
  return s;
}

ScoreReport make_report(Metric metric, std::vector<std::pair<std::string, double>> per_instance) {
  ScoreReport r;
  r.metric = metric;
  r.per_instance = std::move(per_instance);
  double s = 0.0;
  for (const auto& [id, v] : r.per_instance) s += v;
  if (!r.per_instance.empty()) r.mean = s / static_cast<double>(r.per_instance.size());
  return r;
}

std::string ScoreReport::to_json() const {
  nlohmann::ordered_json j;
  j["metric"] = metric_name(metric);
  j["mean"] = mean;
  j["count"] = per_instance.size();
  j["meteor"] = nullptr;
  nlohmann::ordered_json inst = nlohmann::ordered_json::object();
  for (const auto& [id, v] : per_instance) inst[id] = v;
  j["per_instance"] = std::move(inst);
  return j.dump(2);
}

}  // namespace rxl::metrics
