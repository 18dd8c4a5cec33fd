#include <cmath>

#include "doctest.h"
#include "rxl/data/synth.hpp"
#include "rxl/reinforcer/reinforcer.hpp"
#include "support/finite_diff.hpp"

using namespace rxl;
using namespace rxl::reinforcer;

namespace {

data::Dataset tiny_dataset(std::uint64_t seed, std::size_t d = 8, std::size_t scenes = 2) {
  data::SynthConfig c;
  c.num_scenes = scenes;
  c.d = d;
  c.grid_rows = 3;
  c.grid_cols = 3;
  c.local_rows = 2;
  c.local_cols = 2;
  c.min_objects = 2;
  c.max_objects = 3;
  c.max_landmarks = 2;
  c.seed = seed;
  return data::generate_synthetic(c);
}

ReinforcerConfig config(std::size_t d, std::size_t vocab_size, std::uint64_t seed) {
  ReinforcerConfig c;
  c.d = d;
  c.embed = d;
  c.hidden = d;
  c.attn = d;
  c.mlp_hidden = 2 * d;
  c.vocab_size = vocab_size;
  c.seed = seed;
  return c;
}

double sum_of(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v;
  return s;
}

// Two objects of one scene; object 0 is described by token 4, object 1 by token 5.
struct Separable {
  data::Dataset ds = tiny_dataset(3);
  Instance a, b;
  std::vector<LabeledPair> batch;
  Separable() {
    const auto& sc = ds.scenes()[0];
    a = speaker::make_instance(sc, sc.objects[0]);
    b = speaker::make_instance(sc, sc.objects[1]);
    for (std::size_t rep = 0; rep < 2; ++rep) {
      batch.push_back({&a, {4, 6}, true});
      batch.push_back({&a, {5, 6}, false});
      batch.push_back({&b, {5, 6}, true});
      batch.push_back({&b, {4, 6}, false});
    }
  }
};

}  // namespace

TEST_CASE("length-1 sentence puts all attention on its only step") {
  Reinforcer r(config(8, 10, 1));
  Tape t;
  const SentenceEncoding enc = r.encode_sentence(t, {5, speaker::kEos});
  REQUIRE(enc.weights.value().size() == 1);
  CHECK(enc.weights.value()[0] == 1.0);
  CHECK_THROWS_AS(r.encode_sentence(t, {}), ReinforcerError);
  CHECK_THROWS_AS(r.encode_sentence(t, {speaker::kEos}), ReinforcerError);
}

TEST_CASE("identical hidden states give uniform sentence attention") {
  Reinforcer r(config(8, 10, 2));
  // No recurrence and a closed forget gate: every step of a repeated token has the same state.
  Tensor& w = r.params().get("lstm_W").value();
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t j = 8; j < 16; ++j) w.at(i, j) = 0.0;
  Tensor& b = r.params().get("lstm_b").value();
  for (std::size_t i = 8; i < 16; ++i) b[i] = -1e3;
  Tape t;
  const SentenceEncoding enc = r.encode_sentence(t, {7, 7, 7, 7});
  for (double v : enc.weights.value().values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("sentence attention weights are distributions") {
  Reinforcer r(config(8, 12, 3));
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::size_t> ids(1 + rng.index(9));
    for (auto& id : ids) id = 3 + rng.index(9);
    Tape t;
    const SentenceEncoding enc = r.encode_sentence(t, ids);
    for (double v : enc.weights.value().values()) CHECK(v >= 0.0);
    CHECK(sum_of(enc.weights.value()) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("zero output head scores exactly one half") {
  const data::Dataset ds = tiny_dataset(1);
  const auto& sc = ds.scenes()[0];
  const Instance inst = speaker::make_instance(sc, sc.objects[0]);
  Reinforcer r(config(8, 10, 4));
  r.params().get("mlp_w2").value().fill(0.0);
  const MatchScore s = r.score(inst, {4, 5, 6});
  CHECK(s.logit == 0.0);
  CHECK(s.probability == 0.5);
}

TEST_CASE("scores are deterministic and probabilities lie strictly inside (0,1)") {
  const data::Dataset ds = tiny_dataset(2);
  const auto& sc = ds.scenes()[0];
  const Instance inst = speaker::make_instance(sc, sc.objects[0]);
  Reinforcer r(config(8, 10, 5));
  const MatchScore s1 = r.score(inst, {speaker::kUnk, 4});
  const MatchScore s2 = r.score(inst, {speaker::kUnk, 4});
  CHECK(s1.logit == s2.logit);
  CHECK(s1.probability > 0.0);
  CHECK(s1.probability < 1.0);
  CHECK(s1.probability == doctest::Approx(1.0 / (1.0 + std::exp(-s1.logit))));
}

TEST_CASE("logistic loss hand values") {
  Separable f;
  Reinforcer r(config(8, 10, 6));
  r.params().get("mlp_w2").value().fill(0.0);
  {
    Tape t;
    CHECK(r.logistic_loss(t, f.batch).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  // Saturated logits of the right sign give zero loss.
  Tape t;
  const Var big = t.constant(Tensor::scalar(800.0));
  CHECK(neg(log_sigmoid(big)).item() == 0.0);
  CHECK(neg(log_one_minus_sigmoid(neg(big))).item() == 0.0);
  CHECK(neg(log_one_minus_sigmoid(big)).item() == doctest::Approx(800.0));

  std::vector<LabeledPair> one_class = {f.batch[0], f.batch[2]};
  Tape t2;
  CHECK_THROWS_AS(r.logistic_loss(t2, one_class), ReinforcerError);
}

TEST_CASE("pretraining separates a toy set") {
  Separable f;
  Reinforcer r(config(8, 10, 7));
  grad::OptimizerConfig oc;
  oc.learning_rate = 1e-2;
  grad::Optimizer opt(oc);
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 200; ++step) {
    const double l = r.pretrain_step(f.batch, opt);
    if (step == 0) first = l;
    if (step == 99) CHECK(l < first);
    last = l;
  }
  CHECK(last < first);
  double pos = 0.0, negp = 0.0;
  for (const LabeledPair& s : f.batch) (s.paired ? pos : negp) += r.score(*s.target, s.ids).probability;
  const double half = static_cast<double>(f.batch.size()) / 2.0;
  INFO("pos " << pos / half << " neg " << negp / half);
  CHECK(pos / half - negp / half > 0.3);
}

TEST_CASE("rank hinge boundary, tie and flat region") {
  Separable f;
  Reinforcer r(config(8, 10, 8));
  const double zb = r.score(f.a, {4, 6}).logit;
  const double zw = r.score(f.a, {5, 6}).logit;
  const std::vector<RankedPair> pair = {{&f.a, {4, 6}, {5, 6}}};
  const double lambda = 0.7;
  {
    Tape t;
    CHECK(r.rank_loss(t, pair, zb - zw, lambda).item() == doctest::Approx(0.0).epsilon(1e-12));
  }
  {
    // Same sentence on both sides is a tie.
    Tape t;
    const std::vector<RankedPair> tie = {{&f.a, {4, 6}, {4, 6}}};
    CHECK(r.rank_loss(t, tie, 1.0, lambda).item() == doctest::Approx(lambda));
  }
  {
    Tape t;
    const Var l = r.rank_loss(t, pair, (zb - zw) - 0.5, lambda);  // inactive
    CHECK(l.item() == 0.0);
    const grad::Gradients g = t.backward(l);
    CHECK(g.norm() == 0.0);
  }
  {
    Tape t;
    const Var l = r.rank_loss(t, pair, (zb - zw) + 2.0, lambda);  // active
    CHECK(l.item() == doctest::Approx(lambda * 2.0).epsilon(1e-9));
  }
}

TEST_CASE("combined loss is additive with retrievable components") {
  Separable f;
  Reinforcer r(config(8, 10, 9));
  const std::vector<RankedPair> pairs = {{&f.a, {4, 6}, {5, 6}}, {&f.b, {5, 6}, {4, 6}}};
  Tape t;
  const ReinforcerLoss l = r.loss(t, f.batch, pairs, 1.0, 0.5);
  CHECK(l.total.item() == doctest::Approx(l.logistic.item() + l.rank.item()).epsilon(1e-14));
  Tape t1, t2;
  CHECK(l.logistic.item() == r.logistic_loss(t1, f.batch).item());
  CHECK(l.rank.item() == r.rank_loss(t2, pairs, 1.0, 0.5).item());
  Tape t3;
  const ReinforcerLoss only_rank = r.loss(t3, {}, pairs, 1.0, 0.5);
  CHECK(only_rank.logistic.item() == 0.0);
  Tape t4;
  CHECK_THROWS_AS(r.loss(t4, {}, {}, 1.0, 0.5), ReinforcerError);
}

TEST_CASE("reinforcer gradients match finite differences") {
  Separable f;
  Reinforcer r(config(8, 10, 10));
  const std::vector<RankedPair> pairs = {{&f.a, {4, 6}, {5, 6, 7}}, {&f.b, {5}, {4, 6}}};
  auto loss = [&](Tape& t) { return r.loss(t, f.batch, pairs, 5.0, 0.5).total; };
  const auto report = rxl::testing::check_gradients(r.params(), loss);
  REQUIRE(report.entries.size() == r.params().size());
  for (const auto& e : report.entries) {
    INFO(e.name << " rel " << e.relative_error);
    CHECK(e.relative_error < 1e-4);
  }
}
