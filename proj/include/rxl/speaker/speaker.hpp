#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rxl/data/scene.hpp"
#include "rxl/features/target.hpp"
#include "rxl/grad/ops.hpp"
#include "rxl/speaker/vocab.hpp"
#include "rxl/util/rng.hpp"

namespace rxl::speaker {

using grad::Parameter;
using grad::ParameterSet;
using grad::Shape;
using grad::Tape;
using grad::Tensor;
using grad::Var;

struct SpeakerConfig {
  std::size_t d = 32;       // feature width, LSTM width and fused target width
  std::size_t embed = 32;   // word embedding width
  std::size_t attn = 32;    // attention projection width
  std::size_t K = features::kDefaultNeighbors;
  std::size_t vocab_size = 0;  // total ids including reserved ones
  double sigma_init = features::kDefaultSigma;
  std::uint64_t seed = 1;

  std::size_t input_width() const { return d + embed; }
};

// Model inputs for one target that do not depend on trainable parameters.
struct Instance {
  features::TargetStatic target;
  const Tensor* v_global = nullptr;  // [d, k]
  const Tensor* v_local = nullptr;   // [d, l]
  std::size_t k() const { return v_global->cols(); }
  std::size_t l() const { return v_local->cols(); }
};

Instance make_instance(const data::Scene& scene, const data::ObjectRef& target,
                       std::size_t K = features::kDefaultNeighbors);

// Per-instance values on a tape, shared by every sentence scored against the instance.
struct Context {
  Var v;            // fused target encoding [d]
  Var raw_visual;   // [V_global V_local], [d, k+l]
  Var proj_visual;  // rows are W_global f_s and W_local f_s, [k+l, attn]
  Var bias;         // [log G_i; 0], [k+l]
  std::size_t k = 0;
  std::size_t l = 0;
};

struct DecoderState {
  Var h;
  Var m;
  std::size_t t = 0;
};

struct AttentionStep {
  Var s;      // sentinel
  Var z;      // logits over k+l+1 slots, bias included
  Var alpha;  // attention weights
  Var c;      // context vector
};

struct StepOutput {
  DecoderState state;
  AttentionStep attention;
  Var log_probs;  // over output ids
};

// s_t = sigmoid(W_x x_t + W_h h_{t-1}) * tanh(m_t)
Var sentinel(Var x, Var h_prev, Var m, Var w_x, Var w_h);

// Tri-source attention from precomputed visual projections. `w_s`, `w_g` are [attn, d]; `w_h` is [attn].
AttentionStep attend(const Context& ctx, Var s, Var h, Var w_s, Var w_g, Var w_h);

// log Softmax(W_p (c_t + h_t) + b_p)
Var word_dist(Var c, Var h, Var w_p, Var b_p);

enum class DecodeMode { kGreedy, kBeam, kSample };

struct DecodeOptions {
  DecodeMode mode = DecodeMode::kGreedy;
  std::size_t beam = 3;
  std::uint64_t seed = 1;
  std::size_t max_len = 20;
};

struct StepTrace {
  std::size_t token = 0;
  std::vector<double> alpha;
  double global_mass = 0.0;
  double local_mass = 0.0;
  double sentinel_mass = 0.0;
};

struct DecodeResult {
  std::vector<std::size_t> ids;  // ends with EOS when finished
  bool finished = false;
  double logprob = 0.0;
  std::vector<StepTrace> trace;
};

struct SampledSequence {
  std::vector<std::size_t> ids;
  Var logprob;
};

class Speaker {
 public:
  explicit Speaker(const SpeakerConfig& cfg);

  const SpeakerConfig& config() const { return cfg_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  std::size_t output_size() const { return cfg_.vocab_size - kFirstOutput; }

  Context context(Tape& t, const Instance& inst);
  DecoderState initial_state(Tape& t) const;
  StepOutput step(Tape& t, const Context& ctx, const DecoderState& state, std::size_t input_id);

  // Teacher-forced log P(ids | instance); EOS is appended when missing.
  Var sentence_logprob(Tape& t, const Context& ctx, std::vector<std::size_t> ids);
  double logprob(const Instance& inst, const std::vector<std::size_t>& ids);

  DecodeResult decode(const Instance& inst, const DecodeOptions& opts);
  // Ancestral sample recorded on `t`, with its differentiable log-probability.
  SampledSequence sample(Tape& t, const Context& ctx, Rng& rng, std::size_t max_len);

 private:
  DecodeResult greedy_or_sample(const Instance& inst, const DecodeOptions& opts);
  DecodeResult beam_search(const Instance& inst, const DecodeOptions& opts);

  enum Slot : std::size_t {
    kWm, kLogSigmaG, kLogSigmaB, kEmbed, kLstmW, kLstmB, kWx, kWhs,
    kWGlobal, kWLocal, kWs, kWg, kWh, kWp, kBp, kSlots
  };
  Parameter& p(Slot s) { return params_[s]; }

  SpeakerConfig cfg_;
  ParameterSet params_;
};

// Per-step attention masses as JSON: {"tokens": [...], "steps": [{token, global, local, sentinel, alpha}]}.
std::string trace_json(const DecodeResult& result, const Vocabulary& vocab);

// Fresh parameters of the given shapes drawn from N(0, 1/fan_in); shared by the model constructors.
Tensor init_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0);

}  // namespace rxl::speaker
