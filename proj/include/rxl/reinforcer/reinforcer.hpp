#pragma once

#include <cstdint>
#include <vector>

#include "rxl/grad/optim.hpp"
#include "rxl/speaker/speaker.hpp"

namespace rxl::reinforcer {

using grad::Parameter;
using grad::ParameterSet;
using grad::Shape;
using grad::Tape;
using grad::Tensor;
using grad::Var;
using speaker::Instance;

class ReinforcerError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ReinforcerConfig {
  std::size_t d = 32;           // feature width and fused target width
  std::size_t embed = 32;
  std::size_t hidden = 32;      // sentence encoder width
  std::size_t attn = 32;        // sentence attention width
  std::size_t mlp_hidden = 64;  // conventionally 2d
  std::size_t K = features::kDefaultNeighbors;
  std::size_t vocab_size = 0;
  double sigma_init = features::kDefaultSigma;
  std::uint64_t seed = 1;
};

struct SentenceEncoding {
  Var vector;   // [hidden]
  Var weights;  // attention over steps
};

struct MatchScore {
  double logit = 0.0;
  double probability = 0.5;
};

struct LabeledPair {
  const Instance* target = nullptr;
  std::vector<std::size_t> ids;
  bool paired = false;
};

struct RankedPair {
  const Instance* target = nullptr;
  std::vector<std::size_t> better;  // rank(better) < rank(worse)
  std::vector<std::size_t> worse;
};

struct ReinforcerLoss {
  Var logistic;
  Var rank;
  Var total;
};

class Reinforcer {
 public:
  explicit Reinforcer(const ReinforcerConfig& cfg);

  const ReinforcerConfig& config() const { return cfg_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  // Fused target encoding with this model's own W_m and sigma.
  Var target(Tape& t, const Instance& inst);
  // Trailing EOS is ignored; an empty sentence is an error.
  SentenceEncoding encode_sentence(Tape& t, const std::vector<std::size_t>& ids);
  Var logit(Tape& t, Var target, const std::vector<std::size_t>& ids);
  MatchScore score(const Instance& inst, const std::vector<std::size_t>& ids);

  // Mean binary cross-entropy on sigmoid(logit); the batch must hold both labels.
  Var logistic_loss(Tape& t, const std::vector<LabeledPair>& batch);
  // lambda * max(0, M + logit(worse) - logit(better)) averaged over pairs.
  Var rank_loss(Tape& t, const std::vector<RankedPair>& pairs, double margin, double lambda);
  // Logistic plus ranking loss; either list may be empty but not both.
  ReinforcerLoss loss(Tape& t, const std::vector<LabeledPair>& batch, const std::vector<RankedPair>& pairs,
                      double margin, double lambda);

  double pretrain_step(const std::vector<LabeledPair>& batch, grad::Optimizer& opt);
  double rank_train_step(const std::vector<RankedPair>& pairs, grad::Optimizer& opt, double margin, double lambda);

 private:
  enum Slot : std::size_t {
    kWm, kLogSigmaG, kEmbed, kLstmW, kLstmB, kAttW, kAttU, kW1, kB1, kW2, kB2, kSlots
  };
  Parameter& p(Slot s) { return params_[s]; }

  ReinforcerConfig cfg_;
  ParameterSet params_;
};

// Stable log sigmoid(z) and log(1 - sigmoid(z)) of a scalar.
Var log_sigmoid(Var z);
Var log_one_minus_sigmoid(Var z);

}  // namespace rxl::reinforcer
