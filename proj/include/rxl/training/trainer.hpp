#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "rxl/data/scene.hpp"
#include "rxl/metrics/metrics.hpp"
#include "rxl/rank/human_rank.hpp"
#include "rxl/reinforcer/reinforcer.hpp"
#include "rxl/training/losses.hpp"

namespace rxl::training {

using reinforcer::Reinforcer;
using speaker::Vocabulary;

struct CorpusSentence {
  std::string sentence_id;
  std::vector<std::string> tokens;
  std::vector<std::size_t> ids;  // ends with EOS
  std::size_t rank = 1;          // accuracy, then time
  std::size_t accuracy_rank = 1; // accuracy only
};

struct CorpusItem {
  std::string object_id;
  std::string scene_id;
  Instance instance;
  std::vector<std::size_t> peers;  // other items of the same scene
  std::vector<CorpusSentence> sentences;  // validated sentences only
  std::vector<RankedIds> omega;
  rank::RankedPairSet pairs;
};

// Every object of a split's scenes, with its validated sentences and ranked pairs. Items refer to
// the dataset's feature tensors, so the dataset must outlive the corpus.
struct Corpus {
  std::string split;
  std::vector<CorpusItem> items;
  std::size_t sentence_count = 0;
  std::size_t pair_count = 0;

  std::vector<std::size_t> described() const;  // items with at least one sentence
};

Corpus build_corpus(const data::Dataset& ds, const std::string& split, const Vocabulary& vocab,
                    std::size_t K = features::kDefaultNeighbors);

// Training-split vocabulary over every sentence of the split.
Vocabulary build_vocabulary(const data::Dataset& ds, const std::string& split, std::size_t min_count = 1);

struct TrainConfig {
  std::size_t steps = 0;   // 0 derives the count from epochs
  std::size_t epochs = 1;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  grad::OptimizerConfig optim{grad::OptimizerConfig::Kind::kAdam, 2e-3, 0.9, 0.999, 1e-8, 5.0};
  std::size_t checkpoint_every = 0;
  LossToggles toggles;

  std::vector<std::string> violations() const;
  void validate() const;
  std::size_t total_steps(std::size_t examples) const;
};

class SpeakerTrainer {
 public:
  SpeakerTrainer(const Corpus& corpus, Speaker& speaker, HyperParams hp, TrainConfig cfg);

  // Reward for the policy-gradient term; without one that term is skipped.
  void set_reward(RewardFn reward) { reward_ = std::move(reward); }
  std::vector<SpeakerExample> next_batch();
  LossReport step();
  // `on_checkpoint` runs every checkpoint_every steps. Each report is logged as one JSON line.
  std::vector<LossReport> run(std::size_t steps, std::ostream* log = nullptr,
                              const std::function<void(std::size_t)>& on_checkpoint = {});
  std::size_t example_count() const { return order_.size(); }
  std::size_t steps_done() const { return opt_.steps(); }

 private:
  const Corpus& corpus_;
  Speaker& speaker_;
  HyperParams hp_;
  TrainConfig cfg_;
  grad::Optimizer opt_;
  Rng rng_;
  BaselineState baseline_;
  RewardFn reward_;
  std::vector<std::pair<std::size_t, std::size_t>> order_;  // (item, sentence)
  std::size_t cursor_ = 0;
};

struct ReinforcerTrainConfig {
  std::size_t steps = 500;
  std::size_t batch_size = 16;  // positives per step; each gets one negative
  std::uint64_t seed = 1;
  grad::OptimizerConfig optim{grad::OptimizerConfig::Kind::kAdam, 2e-3, 0.9, 0.999, 1e-8, 5.0};
  bool rank = false;
  std::size_t pretrain_steps = 0;  // leading logistic-only steps when rank is on
  double margin = 1.0;
  double lambda = 1.0;
};

struct ReinforcerReport {
  std::size_t step = 0;
  double logistic = 0.0;
  double rank = 0.0;
  double total = 0.0;
};

// Negatives: half wrong-object (same scene), half wrong-sentence (another object).
std::vector<ReinforcerReport> train_reinforcer(const Corpus& corpus, Reinforcer& r, const ReinforcerTrainConfig& cfg,
                                               std::ostream* log = nullptr);

// Probability that a sample matches its target; empty samples earn 0. Scores without side effects.
RewardFn reinforcer_reward(Reinforcer& r);

struct ComprehensionResult {
  double accuracy = 0.0;
  std::size_t count = 0;
  std::map<std::string, std::string> predictions;  // sentence id -> object id
};

// argmax over the objects of the sentence's scene.
ComprehensionResult speaker_comprehension(const Corpus& corpus, Speaker& sp);
ComprehensionResult reinforcer_comprehension(const Corpus& corpus, Reinforcer& r);

// Pooled over every item's ranked pairs; scorer log P(r|v) or the reinforcer logit.
double speaker_rank_pair_accuracy(const Corpus& corpus, Speaker& sp);
double reinforcer_rank_pair_accuracy(const Corpus& corpus, Reinforcer& r);

struct Generation {
  std::string object_id;
  metrics::Tokens tokens;
};

std::vector<Generation> generate(const Corpus& corpus, Speaker& sp, const Vocabulary& vocab,
                                 const speaker::DecodeOptions& opts);

// References are each item's validated sentences; the IDF index covers the corpus's reference sets.
// cider, r1-cider and r2-cider use `variant`; cider-d is always the D variant.
metrics::ScoreReport score_generations(const Corpus& corpus, const std::vector<Generation>& gens,
                                       metrics::Metric metric,
                                       metrics::CiderVariant variant = metrics::CiderVariant::kD);

}  // namespace rxl::training
