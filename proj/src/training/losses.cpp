#include "rxl/training/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace rxl::training {

using namespace grad;

std::vector<std::string> HyperParams::violations() const {
  std::vector<std::string> v;
  auto nonneg = [&](const char* name, double x) {
    if (!std::isfinite(x) || x < 0.0) v.push_back(std::string(name) + " must be a finite non-negative number");
  };
  nonneg("lambda_s1", lambda_s1);
  nonneg("lambda_s2", lambda_s2);
  nonneg("lambda_s3", lambda_s3);
  nonneg("lambda_r", lambda_r);
  nonneg("M1", M1);
  nonneg("M2", M2);
  nonneg("M3", M3);
  if (pg_samples == 0) v.push_back("pg_samples must be >= 1");
  if (pg_max_len == 0) v.push_back("pg_max_len must be >= 1");
  if (!(baseline_decay >= 0.0 && baseline_decay < 1.0)) v.push_back("baseline_decay must lie in [0, 1)");
  return v;
}

void HyperParams::validate() const {
  const auto v = violations();
  if (v.empty()) return;
  std::string msg = "invalid hyper-parameters:";
  for (const auto& s : v) msg += "\n  " + s;
  throw std::invalid_argument(msg);
}

const Context& TapeCache::context(const Instance& inst) {
  auto it = contexts_.find(&inst);
  if (it == contexts_.end()) it = contexts_.emplace(&inst, speaker_.context(tape_, inst)).first;
  return it->second;
}

Var TapeCache::logprob(const Instance& inst, const std::vector<std::size_t>& ids) {
  std::vector<std::size_t> key = ids;
  if (key.empty() || key.back() != speaker::kEos) key.push_back(speaker::kEos);
  auto k = std::make_pair(&inst, std::move(key));
  auto it = logprobs_.find(k);
  if (it != logprobs_.end()) return it->second;
  const Var lp = speaker_.sentence_logprob(tape_, context(inst), k.second);
  logprobs_.emplace(std::move(k), lp);
  return lp;
}

namespace {

void require_batch(std::span<const SpeakerExample> batch, const char* what) {
  if (batch.empty()) throw std::invalid_argument(std::string(what) + ": empty batch");
  for (const auto& ex : batch) {
    if (ex.target == nullptr) throw std::invalid_argument(std::string(what) + ": example without a target");
  }
}

Var zero(Tape& t) { return t.constant(Tensor(Shape{1})); }

Var mean_of(Tape& t, const std::vector<Var>& terms, std::size_t n, double weight = 1.0) {
  if (terms.empty()) return zero(t);
  return scale(add_n(terms), weight / static_cast<double>(n));
}

Var hinge(Var a, Var b, double margin) { return relu(add_constant(sub(a, b), margin)); }

}  // namespace

Var nll_loss(TapeCache& c, std::span<const SpeakerExample> batch) {
  require_batch(batch, "nll_loss");
  std::vector<Var> terms;
  for (const auto& ex : batch) terms.push_back(c.logprob(*ex.target, ex.ids));
  return neg(mean_of(c.tape(), terms, batch.size()));
}

Var mmi_loss(TapeCache& c, std::span<const SpeakerExample> batch, const HyperParams& hp) {
  require_batch(batch, "mmi_loss");
  std::vector<Var> terms;
  for (const auto& ex : batch) {
    const Var pos = c.logprob(*ex.target, ex.ids);
    if (ex.wrong_object != nullptr && hp.lambda_s1 != 0.0) {
      terms.push_back(scale(hinge(c.logprob(*ex.wrong_object, ex.ids), pos, hp.M1), hp.lambda_s1));
    }
    if (!ex.wrong_sentence.empty() && hp.lambda_s2 != 0.0) {
      terms.push_back(scale(hinge(c.logprob(*ex.target, ex.wrong_sentence), pos, hp.M2), hp.lambda_s2));
    }
  }
  return mean_of(c.tape(), terms, batch.size());
}

Var rank_loss(TapeCache& c, std::span<const SpeakerExample> batch, const HyperParams& hp, Rng& rng) {
  require_batch(batch, "rank_loss");
  std::vector<Var> terms;
  for (const auto& ex : batch) {
    if (ex.omega == nullptr || ex.omega->empty()) continue;
    const auto& om = *ex.omega;
    auto term = [&](const RankedIds& p) {
      return hinge(c.logprob(*ex.target, p.worse), c.logprob(*ex.target, p.better), hp.M3);
    };
    if (hp.all_pairs) {
      std::vector<Var> all;
      for (const RankedIds& p : om) all.push_back(term(p));
      terms.push_back(scale(add_n(all), 1.0 / static_cast<double>(all.size())));
    } else {
      terms.push_back(term(om[rng.index(om.size())]));
    }
  }
  return mean_of(c.tape(), terms, batch.size(), hp.lambda_s3);
}

PolicyGradient policy_gradient(TapeCache& c, std::span<const SpeakerExample> batch, const RewardFn& reward,
                               const HyperParams& hp, Rng& rng, BaselineState* baseline) {
  require_batch(batch, "policy_gradient");
  const bool use_baseline = hp.baseline == Baseline::kMovingAverage && baseline != nullptr;
  const double b = use_baseline && baseline->initialized ? baseline->value : 0.0;
  std::vector<Var> terms;
  double total = 0.0;
  for (const auto& ex : batch) {
    const Context& ctx = c.context(*ex.target);
    for (std::size_t s = 0; s < hp.pg_samples; ++s) {
      const speaker::SampledSequence seq = c.speaker().sample(c.tape(), ctx, rng, hp.pg_max_len);
      const double f = reward(*ex.target, seq.ids);
      if (!std::isfinite(f)) throw NonFiniteError("policy_gradient: reward is not finite");
      total += f;
      terms.push_back(scale(seq.logprob, f - b));
    }
  }
  PolicyGradient out;
  const std::size_t n = terms.size();
  out.surrogate = mean_of(c.tape(), terms, n);
  out.reward_mean = total / static_cast<double>(n);
  if (use_baseline) {
    baseline->value = baseline->initialized
                          ? hp.baseline_decay * baseline->value + (1.0 - hp.baseline_decay) * out.reward_mean
                          : out.reward_mean;
    baseline->initialized = true;
  }
  return out;
}

namespace {

void enumerate(Tape& t, Speaker& sp, const Context& ctx, const speaker::DecoderState& state, std::size_t input,
               std::vector<std::size_t>& prefix, const Var* prefix_lp,
               const std::function<double(const std::vector<std::size_t>&)>& reward, std::size_t max_len,
               std::vector<Var>& terms) {
  const speaker::StepOutput out = sp.step(t, ctx, state, input);
  for (std::size_t j = 0; j < sp.output_size(); ++j) {
    const std::size_t id = j + speaker::kFirstOutput;
    const Var lp = prefix_lp ? add(*prefix_lp, pick(out.log_probs, j)) : pick(out.log_probs, j);
    prefix.push_back(id);
    if (id == speaker::kEos || prefix.size() == max_len) {
      terms.push_back(scale(grad::exp(lp), reward(prefix)));
    } else {
      enumerate(t, sp, ctx, out.state, id, prefix, &lp, reward, max_len, terms);
    }
    prefix.pop_back();
  }
}

}  // namespace

Var expected_reward_exact(Tape& t, Speaker& sp, const Context& ctx,
                          const std::function<double(const std::vector<std::size_t>&)>& reward, std::size_t max_len) {
  if (max_len == 0) throw std::invalid_argument("expected_reward_exact: max_len must be >= 1");
  std::vector<Var> terms;
  std::vector<std::size_t> prefix;
  enumerate(t, sp, ctx, sp.initial_state(t), speaker::kBos, prefix, nullptr, reward, max_len, terms);
  return add_n(terms);
}

std::string LossReport::to_json() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["nll"] = nll;
  j["mmi"] = mmi;
  j["rank"] = rank;
  j["pg"] = pg;
  j["pg_reward_mean"] = pg_reward_mean;
  j["total"] = total;
  return j.dump();
}

namespace {

template <class F>
Var guarded(const char* name, F&& f) {
  Var v;
  try {
    v = f();
  } catch (const NonFiniteError& e) {
    throw NonFiniteError(std::string("compound: component '") + name + "' is not finite (" + e.what() + ")");
  }
  if (!std::isfinite(v.item())) {
    throw NonFiniteError(std::string("compound: component '") + name + "' is not finite");
  }
  return v;
}

}  // namespace

CompoundTerms compound_loss(TapeCache& c, std::span<const SpeakerExample> batch, const RewardFn* reward,
                            const HyperParams& hp, const LossToggles& toggles, Rng& rng, BaselineState* baseline) {
  hp.validate();
  Tape& t = c.tape();
  CompoundTerms out;
  out.nll = guarded("nll", [&] { return nll_loss(c, batch); });
  const bool mmi_on = toggles.mmi && (hp.lambda_s1 != 0.0 || hp.lambda_s2 != 0.0);
  out.mmi = mmi_on ? guarded("mmi", [&] { return mmi_loss(c, batch, hp); }) : zero(t);
  out.rank = toggles.rank && hp.lambda_s3 != 0.0 ? guarded("rank", [&] { return rank_loss(c, batch, hp, rng); })
                                                 : zero(t);
  if (toggles.pg && hp.lambda_r != 0.0 && reward != nullptr) {
    out.pg = guarded("pg", [&] {
      const PolicyGradient pg = policy_gradient(c, batch, *reward, hp, rng, baseline);
      out.pg_reward_mean = pg.reward_mean;
      return scale(pg.surrogate, -hp.lambda_r);
    });
  } else {
    out.pg = zero(t);
  }
  out.total = guarded("total", [&] { return add_n({out.nll, out.mmi, out.rank, out.pg}); });
  return out;
}

LossReport compound_step(Speaker& sp, std::span<const SpeakerExample> batch, const RewardFn* reward,
                         const HyperParams& hp, const LossToggles& toggles, Optimizer& opt, Rng& rng,
                         BaselineState* baseline) {
  Tape t;
  TapeCache cache(t, sp);
  const CompoundTerms terms = compound_loss(cache, batch, reward, hp, toggles, rng, baseline);
  LossReport r;
  r.nll = terms.nll.item();
  r.mmi = terms.mmi.item();
  r.rank = terms.rank.item();
  r.pg = terms.pg.item();
  r.pg_reward_mean = terms.pg_reward_mean;
  r.total = terms.total.item();
  opt.step(sp.params(), t.backward(terms.total));
  r.step = opt.steps();
  return r;
}

}  // namespace rxl::training
