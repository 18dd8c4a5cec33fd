#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace rxl::metrics {

using Tokens = std::vector<std::string>;

// Lowercase, punctuation to spaces, whitespace split.
Tokens tokenize(const std::string& sentence);
std::string join(const Tokens& tokens);

inline constexpr std::size_t kMaxN = 4;

using NGram = std::string;  // tokens joined by a single space
using NGramCounts = std::map<NGram, double>;

// Counts of all n-grams of one order.
NGramCounts ngrams(const Tokens& tokens, std::size_t n);

class NGramIndex {
 public:
  // One document per reference set; an n-gram's frequency counts the sets it occurs in.
  explicit NGramIndex(const std::vector<std::vector<Tokens>>& reference_sets);

  std::size_t corpus_size() const { return corpus_size_; }
  double document_frequency(const NGram& g) const;
  double log_corpus_size() const { return log_corpus_size_; }

 private:
  std::size_t corpus_size_ = 0;
  double log_corpus_size_ = 0.0;
  std::map<NGram, double> df_;
};

enum class CiderVariant { kPlain, kD };
enum class Metric { kCider, kCiderD, kR1Cider, kR2Cider };
const char* metric_name(Metric m);
std::optional<Metric> parse_metric(const std::string& name);

inline constexpr double kCiderSigma = 6.0;

double cider(const Tokens& candidate, const std::vector<Tokens>& references, const NGramIndex& index,
             CiderVariant variant = CiderVariant::kD);

// w_j = (rank_j * sum_k 1/rank_k)^-1, evaluated in integer arithmetic when the lcm of the ranks fits.
std::vector<double> rank_weights(std::span<const std::size_t> ranks);

double r_cider(const Tokens& candidate, const std::vector<Tokens>& references, std::span<const std::size_t> ranks,
               const NGramIndex& index, CiderVariant variant = CiderVariant::kD);

// Reference-weighted core shared by cider and r_cider.
double weighted_cider(const Tokens& candidate, const std::vector<Tokens>& references, std::span<const double> weights,
                      const NGramIndex& index, CiderVariant variant);

struct Candidate {
  std::string object_id;
  double score = 0.0;
};
// Highest score; ties go to the lexicographically lowest object id.
std::string argmax_object(std::span<const Candidate> candidates);

// predictions and truth keyed by instance id.
double comprehension_accuracy(const std::map<std::string, std::string>& predictions,
                              const std::map<std::string, std::string>& truth);

struct SaliencyItem {
  double score = 0.0;
  double width = 1.0;
  double height = 1.0;
  double value = 0.0;  // e.g. number of correct responses
};

struct Histogram {
  std::vector<double> edges;  // bins + 1
  std::vector<std::size_t> counts;
  std::vector<double> mean_value;
  std::string csv() const;
};

Histogram saliency_bins(std::span<const SaliencyItem> items, bool normalize, std::size_t bins);

struct CorpusStats {
  std::size_t vocabulary_size = 0;
  double mean_length = 0.0;
  std::map<std::size_t, std::size_t> length_histogram;
};
CorpusStats corpus_stats(const std::vector<Tokens>& sentences);

struct ScoreReport {
  Metric metric = Metric::kCiderD;
  std::vector<std::pair<std::string, double>> per_instance;
  double mean = 0.0;
  std::string to_json() const;
};
ScoreReport make_report(Metric metric, std::vector<std::pair<std::string, double>> per_instance);

}  // namespace rxl::metrics
