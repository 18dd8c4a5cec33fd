#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rxl/grad/optim.hpp"
#include "rxl/speaker/speaker.hpp"

namespace rxl::training {

using grad::Tape;
using grad::Var;
using speaker::Context;
using speaker::Instance;
using speaker::Speaker;

enum class Baseline { kOff, kMovingAverage };

struct HyperParams {
  double lambda_s1 = 1.0;  // MMI wrong-object hinge
  double lambda_s2 = 1.0;  // MMI wrong-sentence hinge
  double lambda_s3 = 1.0;  // ranking hinge
  double lambda_r = 1.0;   // policy-gradient reward
  double M1 = 1.0, M2 = 1.0, M3 = 1.0;
  std::size_t pg_samples = 1;
  std::size_t pg_max_len = 20;
  Baseline baseline = Baseline::kOff;
  double baseline_decay = 0.9;
  bool all_pairs = false;  // sum over every ranked pair instead of sampling one

  // Lists every violation; empty when valid.
  std::vector<std::string> violations() const;
  void validate() const;
};

struct RankedIds {
  std::vector<std::size_t> better;
  std::vector<std::size_t> worse;
};

struct SpeakerExample {
  const Instance* target = nullptr;
  std::vector<std::size_t> ids;
  const Instance* wrong_object = nullptr;   // same-scene distractor, null for single-object scenes
  std::vector<std::size_t> wrong_sentence;  // a sentence of another object, empty when none
  const std::vector<RankedIds>* omega = nullptr;
};

// Contexts and teacher-forced log-probabilities shared by all terms of one tape.
class TapeCache {
 public:
  TapeCache(Tape& t, Speaker& sp) : tape_(t), speaker_(sp) {}
  Tape& tape() { return tape_; }
  Speaker& speaker() { return speaker_; }
  const Context& context(const Instance& inst);
  Var logprob(const Instance& inst, const std::vector<std::size_t>& ids);

 private:
  Tape& tape_;
  Speaker& speaker_;
  std::map<const Instance*, Context> contexts_;
  std::map<std::pair<const Instance*, std::vector<std::size_t>>, Var> logprobs_;
};

// -(1/B) sum_i log P(r_i | v_i)
Var nll_loss(TapeCache& c, std::span<const SpeakerExample> batch);

// (1/B) sum_i l1 [M1 + log P(r_i|v_k) - log P(r_i|v_i)]_+ + l2 [M2 + log P(r_j|v_i) - log P(r_i|v_i)]_+
Var mmi_loss(TapeCache& c, std::span<const SpeakerExample> batch, const HyperParams& hp);

// (1/B) sum_i l3 [M3 + log P(r_iq|v_i) - log P(r_ip|v_i)]_+ over one sampled pair (or the mean over all pairs).
Var rank_loss(TapeCache& c, std::span<const SpeakerExample> batch, const HyperParams& hp, Rng& rng);

// Reward of a sampled sequence; ids end with EOS when the sample finished.
using RewardFn = std::function<double(const Instance&, const std::vector<std::size_t>& ids)>;

struct BaselineState {
  double value = 0.0;
  bool initialized = false;
};

struct PolicyGradient {
  Var surrogate;  // (1/BS) sum (F - b) log P(w); its gradient estimates grad E[F]
  double reward_mean = 0.0;
};

PolicyGradient policy_gradient(TapeCache& c, std::span<const SpeakerExample> batch, const RewardFn& reward,
                               const HyperParams& hp, Rng& rng, BaselineState* baseline);

// Exact E[F] = sum_w P(w | v) F(w) over every sequence of at most max_len tokens; unfinished
// sequences of length max_len are included with their prefix probability.
Var expected_reward_exact(Tape& t, Speaker& sp, const Context& ctx, const std::function<double(const std::vector<std::size_t>&)>& reward,
                          std::size_t max_len);

struct LossToggles {
  bool mmi = true;
  bool rank = true;
  bool pg = true;
};

struct CompoundTerms {
  Var nll, mmi, rank, pg, total;  // pg holds -lambda_r * surrogate
  double pg_reward_mean = 0.0;
};

struct LossReport {
  std::size_t step = 0;
  double nll = 0.0;
  double mmi = 0.0;
  double rank = 0.0;
  double pg = 0.0;
  double pg_reward_mean = 0.0;
  double total = 0.0;
  // {step, nll, mmi, rank, pg, pg_reward_mean, total}
  std::string to_json() const;
};

// Terms with a zero weight, disabled toggle or missing reward are skipped and reported as 0.
CompoundTerms compound_loss(TapeCache& c, std::span<const SpeakerExample> batch, const RewardFn* reward,
                            const HyperParams& hp, const LossToggles& toggles, Rng& rng, BaselineState* baseline);

// One backward pass over the summed terms and one optimizer update. A non-finite term aborts
// before any parameter changes, naming the term.
LossReport compound_step(Speaker& sp, std::span<const SpeakerExample> batch, const RewardFn* reward,
                         const HyperParams& hp, const LossToggles& toggles, grad::Optimizer& opt, Rng& rng,
                         BaselineState* baseline);

}  // namespace rxl::training
