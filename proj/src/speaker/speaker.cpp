#include "rxl/speaker/speaker.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace rxl::speaker {

using namespace grad;

Tensor init_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
  Tensor t(Shape{rows, cols});
  const double sd = scale / std::sqrt(static_cast<double>(cols));
  for (double& v : t.values()) v = sd * rng.normal();
  return t;
}

Instance make_instance(const data::Scene& scene, const data::ObjectRef& target, std::size_t K) {
  Instance inst;
  inst.target = features::prepare_target(scene, target, K);
  inst.v_global = &scene.global_features;
  inst.v_local = &target.local_features;
  return inst;
}

Var sentinel(Var x, Var h_prev, Var m, Var w_x, Var w_h) {
  return mul(sigmoid(add(matmul(w_x, x), matmul(w_h, h_prev))), grad::tanh(m));
}

AttentionStep attend(const Context& ctx, Var s, Var h, Var w_s, Var w_g, Var w_h) {
  AttentionStep out;
  out.s = s;
  const Var hg = matmul(w_g, h);
  const Var zv = add(matmul(grad::tanh(add_rowwise(ctx.proj_visual, hg)), w_h), ctx.bias);
  const Var zs = dot(w_h, grad::tanh(add(matmul(w_s, s), hg)));
  out.z = concat({zv, zs});
  out.alpha = softmax(out.z);
  const std::size_t n = ctx.k + ctx.l;
  out.c = add(matmul(ctx.raw_visual, slice(out.alpha, 0, n)), mul_scalar(s, pick(out.alpha, n)));
  return out;
}

Var word_dist(Var c, Var h, Var w_p, Var b_p) { return log_softmax(add(matmul(w_p, add(c, h)), b_p)); }

Speaker::Speaker(const SpeakerConfig& cfg) : cfg_(cfg) {
  if (cfg.vocab_size <= kFirstOutput) throw std::invalid_argument("speaker: vocabulary has no output tokens");
  if (cfg.d == 0 || cfg.embed == 0 || cfg.attn == 0 || cfg.K == 0) {
    throw std::invalid_argument("speaker: widths must be positive");
  }
  if (!(cfg.sigma_init > 0.0)) throw std::invalid_argument("speaker: sigma_init must be positive");
  Rng rng(cfg.seed);
  const std::size_t d = cfg.d, e = cfg.embed, a = cfg.attn, x = cfg.input_width();
  params_.add("W_m", init_matrix(rng, d, features::fused_width(d, cfg.K)));
  params_.add("log_sigma_g", Tensor::scalar(std::log(cfg.sigma_init)));
  params_.add("log_sigma_b", Tensor::scalar(std::log(cfg.sigma_init)));
  params_.add("embed", init_matrix(rng, cfg.vocab_size, e, std::sqrt(static_cast<double>(e)) * 0.3));
  params_.add("lstm_W", init_matrix(rng, 4 * d, x + d));
  Tensor lstm_b(Shape{4 * d});
  for (std::size_t i = d; i < 2 * d; ++i) lstm_b[i] = 1.0;  // forget gate
  params_.add("lstm_b", std::move(lstm_b));
  params_.add("W_x", init_matrix(rng, d, x));
  params_.add("W_hs", init_matrix(rng, d, d));
  params_.add("W_global", init_matrix(rng, a, d));
  params_.add("W_local", init_matrix(rng, a, d));
  params_.add("W_s", init_matrix(rng, a, d));
  params_.add("W_g", init_matrix(rng, a, d));
  Tensor w_h(Shape{a});
  for (double& v : w_h.values()) v = rng.normal() / std::sqrt(static_cast<double>(a));
  params_.add("w_h", std::move(w_h));
  params_.add("W_p", init_matrix(rng, output_size(), d));
  params_.add("b_p", Tensor(Shape{output_size()}));
}

Context Speaker::context(Tape& t, const Instance& inst) {
  if (inst.v_global->rows() != cfg_.d || inst.v_local->rows() != cfg_.d) {
    throw ShapeError("speaker: feature grids " + inst.v_global->shape().str() + " / " +
                     inst.v_local->shape().str() + " do not match width " + std::to_string(cfg_.d));
  }
  Context ctx;
  ctx.k = inst.k();
  ctx.l = inst.l();
  const Var vg = t.constant(*inst.v_global);
  const Var vl = t.constant(*inst.v_local);
  const features::TargetStatic& ts = inst.target;
  const Var gp = features::gaussian_global(vg, t.param(p(kLogSigmaG)), ts.sq_dist);
  ctx.v = features::assemble(t.param(p(kWm)), t.constant(ts.o), gp, t.constant(ts.l), t.constant(ts.delta_o),
                             t.constant(ts.delta_l));
  ctx.raw_visual = concat_cols({vg, vl});
  ctx.proj_visual =
      transpose(concat_cols({matmul(t.param(p(kWGlobal)), vg), matmul(t.param(p(kWLocal)), vl)}));
  ctx.bias = concat({features::gaussian_logits(t.param(p(kLogSigmaB)), ts.sq_dist), t.constant(Tensor(Shape{ctx.l}))});
  return ctx;
}

DecoderState Speaker::initial_state(Tape& t) const {
  return DecoderState{t.constant(Tensor(Shape{cfg_.d})), t.constant(Tensor(Shape{cfg_.d})), 0};
}

StepOutput Speaker::step(Tape& t, const Context& ctx, const DecoderState& state, std::size_t input_id) {
  const std::size_t d = cfg_.d;
  const Var x = concat({ctx.v, lookup(t.param(p(kEmbed)), input_id)});
  const Var gates = add(matmul(t.param(p(kLstmW)), concat({x, state.h})), t.param(p(kLstmB)));
  const Var i = sigmoid(slice(gates, 0, d));
  const Var f = sigmoid(slice(gates, d, 2 * d));
  const Var o = sigmoid(slice(gates, 2 * d, 3 * d));
  const Var g = grad::tanh(slice(gates, 3 * d, 4 * d));
  StepOutput out;
  out.state.m = add(mul(f, state.m), mul(i, g));
  out.state.h = mul(o, grad::tanh(out.state.m));
  out.state.t = state.t + 1;
  const Var s = sentinel(x, state.h, out.state.m, t.param(p(kWx)), t.param(p(kWhs)));
  out.attention = attend(ctx, s, out.state.h, t.param(p(kWs)), t.param(p(kWg)), t.param(p(kWh)));
  out.log_probs = word_dist(out.attention.c, out.state.h, t.param(p(kWp)), t.param(p(kBp)));
  return out;
}

Var Speaker::sentence_logprob(Tape& t, const Context& ctx, std::vector<std::size_t> ids) {
  if (ids.empty() || ids.back() != kEos) ids.push_back(kEos);
  std::vector<Var> terms;
  terms.reserve(ids.size());
  DecoderState state = initial_state(t);
  std::size_t input = kBos;
  for (std::size_t id : ids) {
    if (id < kFirstOutput || id >= cfg_.vocab_size) {
      throw std::invalid_argument("sentence_logprob: token id " + std::to_string(id) + " cannot be emitted");
    }
    StepOutput out = step(t, ctx, state, input);
    terms.push_back(pick(out.log_probs, id - kFirstOutput));
    state = out.state;
    input = id;
  }
  return add_n(terms);
}

double Speaker::logprob(const Instance& inst, const std::vector<std::size_t>& ids) {
  Tape t(Tape::Mode::kInference);
  const Context ctx = context(t, inst);
  return sentence_logprob(t, ctx, ids).item();
}

namespace {

StepTrace make_trace(std::size_t token, const AttentionStep& a, std::size_t k, std::size_t l) {
  StepTrace tr;
  tr.token = token;
  const Tensor& alpha = a.alpha.value();
  tr.alpha.assign(alpha.values().begin(), alpha.values().end());
  for (std::size_t s = 0; s < k; ++s) tr.global_mass += alpha[s];
  for (std::size_t s = k; s < k + l; ++s) tr.local_mass += alpha[s];
  tr.sentinel_mass = alpha[k + l];
  return tr;
}

std::size_t argmax(const Tensor& v) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < v.size(); ++j) {
    if (v[j] > v[best]) best = j;
  }
  return best;
}

}  // namespace

DecodeResult Speaker::decode(const Instance& inst, const DecodeOptions& opts) {
  if (opts.max_len == 0) throw std::invalid_argument("decode: max_len must be >= 1");
  if (opts.mode == DecodeMode::kBeam) {
    if (opts.beam == 0) throw std::invalid_argument("decode: beam width must be >= 1");
    return beam_search(inst, opts);
  }
  return greedy_or_sample(inst, opts);
}

DecodeResult Speaker::greedy_or_sample(const Instance& inst, const DecodeOptions& opts) {
  Tape t(Tape::Mode::kInference);
  const Context ctx = context(t, inst);
  Rng rng(opts.seed);
  DecodeResult res;
  DecoderState state = initial_state(t);
  std::size_t input = kBos;
  std::vector<double> probs(output_size());
  for (std::size_t step_i = 0; step_i < opts.max_len; ++step_i) {
    StepOutput out = step(t, ctx, state, input);
    const Tensor& lp = out.log_probs.value();
    std::size_t j;
    if (opts.mode == DecodeMode::kSample) {
      for (std::size_t q = 0; q < lp.size(); ++q) probs[q] = std::exp(lp[q]);
      j = rng.categorical(probs);
    } else {
      j = argmax(lp);
    }
    const std::size_t id = j + kFirstOutput;
    res.logprob += lp[j];
    res.ids.push_back(id);
    res.trace.push_back(make_trace(id, out.attention, ctx.k, ctx.l));
    if (id == kEos) {
      res.finished = true;
      break;
    }
    state = out.state;
    input = id;
  }
  return res;
}

DecodeResult Speaker::beam_search(const Instance& inst, const DecodeOptions& opts) {
  struct Hyp {
    DecoderState state;
    DecodeResult res;
  };
  struct Cand {
    double score;
    std::size_t hyp;
    std::size_t j;
  };
  Tape t(Tape::Mode::kInference);
  const Context ctx = context(t, inst);
  std::vector<Hyp> active{Hyp{initial_state(t), {}}};
  std::vector<DecodeResult> finished;

  for (std::size_t step_i = 0; step_i < opts.max_len && !active.empty(); ++step_i) {
    std::vector<StepOutput> outs;
    std::vector<Cand> cands;
    for (std::size_t h = 0; h < active.size(); ++h) {
      const std::size_t input = active[h].res.ids.empty() ? kBos : active[h].res.ids.back();
      outs.push_back(step(t, ctx, active[h].state, input));
      const Tensor& lp = outs.back().log_probs.value();
      for (std::size_t j = 0; j < lp.size(); ++j) cands.push_back({active[h].res.logprob + lp[j], h, j});
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.hyp != b.hyp) return a.hyp < b.hyp;
      return a.j < b.j;
    });
    // Finished hypotheses leave the beam without taking a slot from the open ones.
    std::vector<Hyp> next;
    for (const Cand& cd : cands) {
      if (next.size() == opts.beam) break;
      const std::size_t id = cd.j + kFirstOutput;
      Hyp h{outs[cd.hyp].state, active[cd.hyp].res};
      h.res.logprob = cd.score;
      h.res.ids.push_back(id);
      h.res.trace.push_back(make_trace(id, outs[cd.hyp].attention, ctx.k, ctx.l));
      if (id == kEos) {
        h.res.finished = true;
        finished.push_back(std::move(h.res));
      } else {
        next.push_back(std::move(h));
      }
    }
    active = std::move(next);
    if (!finished.empty() && !active.empty()) {
      double best_done = -1e300, best_open = -1e300;
      for (const DecodeResult& r : finished) best_done = std::max(best_done, r.logprob);
      for (const Hyp& h : active) best_open = std::max(best_open, h.res.logprob);
      // Extending a hypothesis never raises its log-probability.
      if (best_done >= best_open) break;
    }
  }
  const std::vector<DecodeResult>* pool = &finished;
  std::vector<DecodeResult> open;
  if (finished.empty()) {
    for (Hyp& h : active) open.push_back(std::move(h.res));
    pool = &open;
  }
  const DecodeResult* best = &(*pool)[0];
  for (const DecodeResult& r : *pool) {
    if (r.logprob > best->logprob) best = &r;
  }
  return *best;
}

SampledSequence Speaker::sample(Tape& t, const Context& ctx, Rng& rng, std::size_t max_len) {
  if (max_len == 0) throw std::invalid_argument("sample: max_len must be >= 1");
  SampledSequence out;
  std::vector<Var> terms;
  DecoderState state = initial_state(t);
  std::size_t input = kBos;
  std::vector<double> probs(output_size());
  for (std::size_t step_i = 0; step_i < max_len; ++step_i) {
    StepOutput so = step(t, ctx, state, input);
    const Tensor& lp = so.log_probs.value();
    for (std::size_t q = 0; q < lp.size(); ++q) probs[q] = std::exp(lp[q]);
    const std::size_t j = rng.categorical(probs);
    terms.push_back(pick(so.log_probs, j));
    const std::size_t id = j + kFirstOutput;
    out.ids.push_back(id);
    if (id == kEos) break;
    state = so.state;
    input = id;
  }
  out.logprob = add_n(terms);
  return out;
}

std::string trace_json(const DecodeResult& result, const Vocabulary& vocab) {
  nlohmann::json steps = nlohmann::json::array();
  for (const StepTrace& s : result.trace) {
    steps.push_back({{"token", vocab.token(s.token)},
                     {"global", s.global_mass},
                     {"local", s.local_mass},
                     {"sentinel", s.sentinel_mass},
                     {"alpha", s.alpha}});
  }
  nlohmann::json doc = {{"tokens", vocab.decode(result.ids)},
                        {"finished", result.finished},
                        {"logprob", result.logprob},
                        {"steps", steps}};
  return doc.dump();
}

}  // namespace rxl::speaker
