#include "rxl/training/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

namespace rxl::training {

using namespace grad;

std::vector<std::size_t> Corpus::described() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!items[i].sentences.empty()) out.push_back(i);
  }
  return out;
}

Vocabulary build_vocabulary(const data::Dataset& ds, const std::string& split, std::size_t min_count) {
  std::vector<std::vector<std::string>> corpus;
  for (const data::SentenceRecord* s : ds.sentences_in_split(split)) corpus.push_back(s->tokens);
  return Vocabulary::build(corpus, min_count);
}

Corpus build_corpus(const data::Dataset& ds, const std::string& split, const Vocabulary& vocab, std::size_t K) {
  Corpus c;
  c.split = split;
  rank::RankOptions accuracy_only;
  accuracy_only.use_time = false;
  for (const std::string& scene_id : ds.splits().scenes(split)) {
    const data::Scene& scene = ds.scene(scene_id);
    const std::size_t first = c.items.size();
    for (const data::ObjectRef& obj : scene.objects) {
      CorpusItem item;
      item.object_id = obj.object_id;
      item.scene_id = scene.scene_id;
      item.instance = speaker::make_instance(scene, obj, K);
      std::vector<const data::SentenceRecord*> kept;
      for (const data::SentenceRecord* s : ds.sentences_for(obj.object_id)) {
        if (rank::validate_sentence(s->responses)) kept.push_back(s);
      }
      if (!kept.empty()) {
        const rank::RankedSentenceSet full = rank::build_ranks(kept);
        const rank::RankedSentenceSet acc = rank::build_ranks(kept, accuracy_only);
        std::map<std::string, std::size_t> pos;
        for (std::size_t j = 0; j < kept.size(); ++j) {
          CorpusSentence cs;
          cs.sentence_id = kept[j]->sentence_id;
          cs.tokens = kept[j]->tokens;
          cs.ids = vocab.encode(cs.tokens);
          cs.rank = full.entries[j].rank;
          cs.accuracy_rank = acc.entries[j].rank;
          pos[cs.sentence_id] = j;
          item.sentences.push_back(std::move(cs));
        }
        item.pairs = rank::extract_pairs(full);
        for (const auto& [p, q] : item.pairs) {
          item.omega.push_back({item.sentences[pos[p]].ids, item.sentences[pos[q]].ids});
        }
      }
      c.sentence_count += item.sentences.size();
      c.pair_count += item.pairs.size();
      c.items.push_back(std::move(item));
    }
    for (std::size_t i = first; i < c.items.size(); ++i) {
      for (std::size_t j = first; j < c.items.size(); ++j) {
        if (i != j) c.items[i].peers.push_back(j);
      }
    }
  }
  return c;
}

std::vector<std::string> TrainConfig::violations() const {
  std::vector<std::string> v;
  if (batch_size == 0) v.push_back("batch_size must be >= 1");
  if (steps == 0 && epochs == 0) v.push_back("one of steps or epochs must be positive");
  if (!(optim.learning_rate > 0.0) || !std::isfinite(optim.learning_rate)) v.push_back("learning_rate must be positive");
  if (!(optim.clip_norm >= 0.0)) v.push_back("clip_norm must be >= 0");
  return v;
}

void TrainConfig::validate() const {
  const auto v = violations();
  if (v.empty()) return;
  std::string msg = "invalid training config:";
  for (const auto& s : v) msg += "\n  " + s;
  throw std::invalid_argument(msg);
}

std::size_t TrainConfig::total_steps(std::size_t examples) const {
  if (steps > 0) return steps;
  return epochs * ((examples + batch_size - 1) / batch_size);
}

SpeakerTrainer::SpeakerTrainer(const Corpus& corpus, Speaker& speaker, HyperParams hp, TrainConfig cfg)
    : corpus_(corpus), speaker_(speaker), hp_(hp), cfg_(cfg), opt_(cfg.optim), rng_(cfg.seed) {
  hp_.validate();
  cfg_.validate();
  for (std::size_t i = 0; i < corpus.items.size(); ++i) {
    for (std::size_t j = 0; j < corpus.items[i].sentences.size(); ++j) order_.emplace_back(i, j);
  }
  if (order_.empty()) throw std::invalid_argument("trainer: corpus has no validated sentences");
  cursor_ = order_.size();
}

std::vector<SpeakerExample> SpeakerTrainer::next_batch() {
  const std::vector<std::size_t> described = corpus_.described();
  std::vector<SpeakerExample> batch;
  for (std::size_t b = 0; b < cfg_.batch_size; ++b) {
    if (cursor_ == order_.size()) {
      rng_.shuffle(order_);
      cursor_ = 0;
    }
    const auto [i, j] = order_[cursor_++];
    const CorpusItem& item = corpus_.items[i];
    SpeakerExample ex;
    ex.target = &item.instance;
    ex.ids = item.sentences[j].ids;
    if (!item.peers.empty()) ex.wrong_object = &corpus_.items[item.peers[rng_.index(item.peers.size())]].instance;
    if (described.size() > 1) {
      std::size_t other = i;
      while (other == i) other = described[rng_.index(described.size())];
      const auto& s = corpus_.items[other].sentences;
      ex.wrong_sentence = s[rng_.index(s.size())].ids;
    }
    ex.omega = &item.omega;
    batch.push_back(std::move(ex));
  }
  return batch;
}

LossReport SpeakerTrainer::step() {
  const std::vector<SpeakerExample> batch = next_batch();
  return compound_step(speaker_, batch, reward_ ? &reward_ : nullptr, hp_, cfg_.toggles, opt_, rng_, &baseline_);
}

std::vector<LossReport> SpeakerTrainer::run(std::size_t steps, std::ostream* log,
                                            const std::function<void(std::size_t)>& on_checkpoint) {
  std::vector<LossReport> out;
  out.reserve(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    out.push_back(step());
    if (log) *log << out.back().to_json() << '\n';
    if (on_checkpoint && cfg_.checkpoint_every > 0 && opt_.steps() % cfg_.checkpoint_every == 0) {
      on_checkpoint(opt_.steps());
    }
  }
  return out;
}

std::vector<ReinforcerReport> train_reinforcer(const Corpus& corpus, Reinforcer& r, const ReinforcerTrainConfig& cfg,
                                               std::ostream* log) {
  if (cfg.batch_size == 0) throw std::invalid_argument("reinforcer training: batch_size must be >= 1");
  const std::vector<std::size_t> described = corpus.described();
  if (described.size() < 2) throw std::invalid_argument("reinforcer training: need at least two described objects");
  Rng rng(cfg.seed);
  Optimizer opt(cfg.optim);
  std::vector<ReinforcerReport> reports;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::vector<reinforcer::LabeledPair> batch;
    std::vector<reinforcer::RankedPair> pairs;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const std::size_t i = described[rng.index(described.size())];
      const CorpusItem& item = corpus.items[i];
      const CorpusSentence& s = item.sentences[rng.index(item.sentences.size())];
      batch.push_back({&item.instance, s.ids, true});
      if (!item.peers.empty() && rng.chance(0.5)) {
        batch.push_back({&corpus.items[item.peers[rng.index(item.peers.size())]].instance, s.ids, false});
      } else {
        std::size_t other = i;
        while (other == i) other = described[rng.index(described.size())];
        const auto& os = corpus.items[other].sentences;
        batch.push_back({&item.instance, os[rng.index(os.size())].ids, false});
      }
      if (cfg.rank && step >= cfg.pretrain_steps && !item.omega.empty()) {
        const RankedIds& p = item.omega[rng.index(item.omega.size())];
        pairs.push_back({&item.instance, p.better, p.worse});
      }
    }
    Tape t;
    const reinforcer::ReinforcerLoss l = r.loss(t, batch, pairs, cfg.margin, cfg.lambda);
    ReinforcerReport rep{step + 1, l.logistic.item(), l.rank.item(), l.total.item()};
    if (!std::isfinite(rep.total)) throw NonFiniteError("reinforcer training: loss is not finite");
    opt.step(r.params(), t.backward(l.total));
    if (log) {
      nlohmann::ordered_json j{{"step", rep.step}, {"logistic", rep.logistic}, {"rank", rep.rank}, {"total", rep.total}};
      *log << j.dump() << '\n';
    }
    reports.push_back(rep);
  }
  return reports;
}

RewardFn reinforcer_reward(Reinforcer& r) {
  return [&r](const Instance& inst, const std::vector<std::size_t>& ids) {
    if (ids.empty() || (ids.size() == 1 && ids[0] == speaker::kEos)) return 0.0;
    return r.score(inst, ids).probability;
  };
}

namespace {

template <class Score>
ComprehensionResult comprehension(const Corpus& corpus, Score&& score) {
  ComprehensionResult res;
  std::map<std::string, std::string> truth;
  for (std::size_t i : corpus.described()) {
    const CorpusItem& item = corpus.items[i];
    std::vector<std::size_t> cands = item.peers;
    cands.push_back(i);
    for (const CorpusSentence& s : item.sentences) {
      std::vector<metrics::Candidate> c;
      for (std::size_t k : cands) c.push_back({corpus.items[k].object_id, score(corpus.items[k].instance, s.ids)});
      res.predictions[s.sentence_id] = metrics::argmax_object(c);
      truth[s.sentence_id] = item.object_id;
    }
  }
  res.count = truth.size();
  res.accuracy = truth.empty() ? 0.0 : metrics::comprehension_accuracy(res.predictions, truth);
  return res;
}

template <class Score>
double pair_accuracy(const Corpus& corpus, Score&& score) {
  rank::RankedPairSet pooled;
  std::map<std::string, double> value;
  for (const CorpusItem& item : corpus.items) {
    if (item.pairs.empty()) continue;
    for (const CorpusSentence& s : item.sentences) value[s.sentence_id] = score(item.instance, s.ids);
    pooled.insert(pooled.end(), item.pairs.begin(), item.pairs.end());
  }
  return rank::rank_pair_accuracy(pooled, [&](const std::string& id) { return value.at(id); });
}

}  // namespace

ComprehensionResult speaker_comprehension(const Corpus& corpus, Speaker& sp) {
  return comprehension(corpus, [&](const Instance& inst, const std::vector<std::size_t>& ids) {
    return sp.logprob(inst, ids);
  });
}

ComprehensionResult reinforcer_comprehension(const Corpus& corpus, Reinforcer& r) {
  return comprehension(corpus, [&](const Instance& inst, const std::vector<std::size_t>& ids) {
    return r.score(inst, ids).logit;
  });
}

double speaker_rank_pair_accuracy(const Corpus& corpus, Speaker& sp) {
  return pair_accuracy(corpus, [&](const Instance& inst, const std::vector<std::size_t>& ids) {
    return sp.logprob(inst, ids);
  });
}

double reinforcer_rank_pair_accuracy(const Corpus& corpus, Reinforcer& r) {
  return pair_accuracy(corpus, [&](const Instance& inst, const std::vector<std::size_t>& ids) {
    return r.score(inst, ids).logit;
  });
}

std::vector<Generation> generate(const Corpus& corpus, Speaker& sp, const Vocabulary& vocab,
                                 const speaker::DecodeOptions& opts) {
  std::vector<Generation> out;
  for (std::size_t i : corpus.described()) {
    const CorpusItem& item = corpus.items[i];
    const speaker::DecodeResult d = sp.decode(item.instance, opts);
    out.push_back({item.object_id, vocab.decode(d.ids)});
  }
  return out;
}

metrics::ScoreReport score_generations(const Corpus& corpus, const std::vector<Generation>& gens,
                                       metrics::Metric metric, metrics::CiderVariant variant) {
  std::map<std::string, const CorpusItem*> by_object;
  std::vector<std::vector<metrics::Tokens>> refsets;
  for (std::size_t i : corpus.described()) {
    const CorpusItem& item = corpus.items[i];
    by_object[item.object_id] = &item;
    std::vector<metrics::Tokens> refs;
    for (const auto& s : item.sentences) refs.push_back(s.tokens);
    refsets.push_back(std::move(refs));
  }
  const metrics::NGramIndex index(refsets);
  std::vector<std::pair<std::string, double>> scores;
  for (const Generation& g : gens) {
    auto it = by_object.find(g.object_id);
    if (it == by_object.end()) throw std::invalid_argument("score_generations: no references for " + g.object_id);
    std::vector<metrics::Tokens> refs;
    std::vector<std::size_t> ranks;
    for (const auto& s : it->second->sentences) {
      refs.push_back(s.tokens);
      ranks.push_back(metric == metrics::Metric::kR2Cider ? s.accuracy_rank : s.rank);
    }
    double v = 0.0;
    switch (metric) {
      case metrics::Metric::kCider: v = metrics::cider(g.tokens, refs, index, variant); break;
      case metrics::Metric::kCiderD: v = metrics::cider(g.tokens, refs, index, metrics::CiderVariant::kD); break;
      case metrics::Metric::kR1Cider:
      case metrics::Metric::kR2Cider: v = metrics::r_cider(g.tokens, refs, ranks, index, variant); break;
    }
    scores.emplace_back(g.object_id, v);
  }
  return metrics::make_report(metric, std::move(scores));
}

}  // namespace rxl::training
