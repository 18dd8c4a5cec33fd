#include "rxl/reinforcer/reinforcer.hpp"

#include <cmath>

namespace rxl::reinforcer {

using namespace grad;
using speaker::init_matrix;

Var log_sigmoid(Var z) {
  Tape& t = *z.tape();
  return pick(log_softmax(concat({t.constant(Tensor(Shape{1})), z})), 1);
}

Var log_one_minus_sigmoid(Var z) {
  Tape& t = *z.tape();
  return pick(log_softmax(concat({t.constant(Tensor(Shape{1})), z})), 0);
}

Reinforcer::Reinforcer(const ReinforcerConfig& cfg) : cfg_(cfg) {
  if (cfg.vocab_size <= speaker::kFirstOutput) throw ReinforcerError("reinforcer: empty vocabulary");
  if (cfg.d == 0 || cfg.embed == 0 || cfg.hidden == 0 || cfg.attn == 0 || cfg.mlp_hidden == 0 || cfg.K == 0) {
    throw ReinforcerError("reinforcer: widths must be positive");
  }
  if (!(cfg.sigma_init > 0.0)) throw ReinforcerError("reinforcer: sigma_init must be positive");
  Rng rng(cfg.seed ^ 0x5eedf00dULL);
  const std::size_t d = cfg.d, e = cfg.embed, h = cfg.hidden, a = cfg.attn, m = cfg.mlp_hidden;
  params_.add("W_m", init_matrix(rng, d, features::fused_width(d, cfg.K)));
  params_.add("log_sigma_g", Tensor::scalar(std::log(cfg.sigma_init)));
  params_.add("embed", init_matrix(rng, cfg.vocab_size, e, std::sqrt(static_cast<double>(e)) * 0.3));
  params_.add("lstm_W", init_matrix(rng, 4 * h, e + h));
  Tensor lstm_b(Shape{4 * h});
  for (std::size_t i = h; i < 2 * h; ++i) lstm_b[i] = 1.0;
  params_.add("lstm_b", std::move(lstm_b));
  params_.add("att_W", init_matrix(rng, a, h));
  Tensor u(Shape{a});
  for (double& v : u.values()) v = rng.normal() / std::sqrt(static_cast<double>(a));
  params_.add("att_u", std::move(u));
  params_.add("mlp_W1", init_matrix(rng, m, h + d));
  params_.add("mlp_b1", Tensor(Shape{m}));
  Tensor w2(Shape{m});
  for (double& v : w2.values()) v = rng.normal() / std::sqrt(static_cast<double>(m));
  params_.add("mlp_w2", std::move(w2));
  params_.add("mlp_b2", Tensor::scalar(0.0));
}

Var Reinforcer::target(Tape& t, const Instance& inst) {
  if (inst.v_global->rows() != cfg_.d) {
    throw ShapeError("reinforcer: feature grid " + inst.v_global->shape().str() + " does not match width " +
                     std::to_string(cfg_.d));
  }
  const features::TargetStatic& ts = inst.target;
  const Var gp = features::gaussian_global(t.constant(*inst.v_global), t.param(p(kLogSigmaG)), ts.sq_dist);
  return features::assemble(t.param(p(kWm)), t.constant(ts.o), gp, t.constant(ts.l), t.constant(ts.delta_o),
                            t.constant(ts.delta_l));
}

SentenceEncoding Reinforcer::encode_sentence(Tape& t, const std::vector<std::size_t>& ids) {
  std::size_t n = ids.size();
  if (n > 0 && ids[n - 1] == speaker::kEos) --n;
  if (n == 0) throw ReinforcerError("reinforcer: cannot encode an empty sentence");
  const std::size_t h = cfg_.hidden;
  const Var W = t.param(p(kLstmW));
  const Var b = t.param(p(kLstmB));
  const Var emb = t.param(p(kEmbed));
  Var hs = t.constant(Tensor(Shape{h}));
  Var ms = t.constant(Tensor(Shape{h}));
  std::vector<Var> states;
  states.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (ids[i] >= cfg_.vocab_size) throw ReinforcerError("reinforcer: token id " + std::to_string(ids[i]) + " out of range");
    const Var gates = add(matmul(W, concat({lookup(emb, ids[i]), hs})), b);
    const Var ig = sigmoid(slice(gates, 0, h));
    const Var fg = sigmoid(slice(gates, h, 2 * h));
    const Var og = sigmoid(slice(gates, 2 * h, 3 * h));
    const Var gg = grad::tanh(slice(gates, 3 * h, 4 * h));
    ms = add(mul(fg, ms), mul(ig, gg));
    hs = mul(og, grad::tanh(ms));
    states.push_back(hs);
  }
  const Var H = concat_cols(states);  // [h, n]
  const Var scores = matmul(transpose(grad::tanh(matmul(t.param(p(kAttW)), H))), t.param(p(kAttU)));
  SentenceEncoding enc;
  enc.weights = softmax(scores);
  enc.vector = matmul(H, enc.weights);
  return enc;
}

Var Reinforcer::logit(Tape& t, Var target, const std::vector<std::size_t>& ids) {
  const SentenceEncoding enc = encode_sentence(t, ids);
  const Var hidden = grad::tanh(add(matmul(t.param(p(kW1)), concat({enc.vector, target})), t.param(p(kB1))));
  return add(dot(t.param(p(kW2)), hidden), t.param(p(kB2)));
}

MatchScore Reinforcer::score(const Instance& inst, const std::vector<std::size_t>& ids) {
  Tape t(Tape::Mode::kInference);
  const double z = logit(t, target(t, inst), ids).item();
  return MatchScore{z, 1.0 / (1.0 + std::exp(-z))};
}

Var Reinforcer::logistic_loss(Tape& t, const std::vector<LabeledPair>& batch) {
  if (batch.empty()) throw ReinforcerError("reinforcer: empty batch");
  bool pos = false, negv = false;
  for (const LabeledPair& s : batch) (s.paired ? pos : negv) = true;
  if (!pos || !negv) throw ReinforcerError("reinforcer: batch must contain both paired and unpaired examples");
  std::vector<Var> terms;
  terms.reserve(batch.size());
  const Instance* last = nullptr;
  Var v;
  for (const LabeledPair& s : batch) {
    if (s.target != last) {
      v = target(t, *s.target);
      last = s.target;
    }
    const Var z = logit(t, v, s.ids);
    terms.push_back(neg(s.paired ? log_sigmoid(z) : log_one_minus_sigmoid(z)));
  }
  return scale(add_n(terms), 1.0 / static_cast<double>(terms.size()));
}

Var Reinforcer::rank_loss(Tape& t, const std::vector<RankedPair>& pairs, double margin, double lambda) {
  if (pairs.empty()) throw ReinforcerError("reinforcer: no ranked pairs");
  std::vector<Var> terms;
  terms.reserve(pairs.size());
  const Instance* last = nullptr;
  Var v;
  for (const RankedPair& pr : pairs) {
    if (pr.target != last) {
      v = target(t, *pr.target);
      last = pr.target;
    }
    const Var zb = logit(t, v, pr.better);
    const Var zw = logit(t, v, pr.worse);
    terms.push_back(relu(add_constant(sub(zw, zb), margin)));
  }
  return scale(add_n(terms), lambda / static_cast<double>(terms.size()));
}

ReinforcerLoss Reinforcer::loss(Tape& t, const std::vector<LabeledPair>& batch, const std::vector<RankedPair>& pairs,
                                double margin, double lambda) {
  if (batch.empty() && pairs.empty()) throw ReinforcerError("reinforcer: nothing to train on");
  ReinforcerLoss out;
  out.logistic = batch.empty() ? t.constant(Tensor(Shape{1})) : logistic_loss(t, batch);
  out.rank = pairs.empty() ? t.constant(Tensor(Shape{1})) : rank_loss(t, pairs, margin, lambda);
  out.total = add(out.logistic, out.rank);
  return out;
}

double Reinforcer::pretrain_step(const std::vector<LabeledPair>& batch, Optimizer& opt) {
  Tape t;
  const Var l = logistic_loss(t, batch);
  opt.step(params_, t.backward(l));
  return l.item();
}

double Reinforcer::rank_train_step(const std::vector<RankedPair>& pairs, Optimizer& opt, double margin,
                                   double lambda) {
  Tape t;
  const Var l = rank_loss(t, pairs, margin, lambda);
  opt.step(params_, t.backward(l));
  return l.item();
}

}  // namespace rxl::reinforcer
