#pragma once

// Width-8, vocab-12, two-scene model shared by the training tests and the acceptance run.

#include <deque>
#include <vector>

#include "rxl/data/synth.hpp"
#include "rxl/reinforcer/reinforcer.hpp"
#include "rxl/training/losses.hpp"

namespace rxl::testing {

inline data::Dataset micro_dataset(std::uint64_t seed, std::size_t d = 8, std::size_t scenes = 2) {
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

inline speaker::SpeakerConfig micro_speaker_config(std::size_t d, std::size_t vocab_size, std::uint64_t seed) {
  speaker::SpeakerConfig c;
  c.d = d;
  c.embed = d;
  c.attn = d;
  c.vocab_size = vocab_size;
  c.seed = seed;
  return c;
}

struct MicroFixture {
  static constexpr std::size_t kWidth = 8;
  static constexpr std::size_t kVocab = 12;

  data::Dataset ds;
  std::vector<speaker::Instance> instances;
  std::deque<std::vector<training::RankedIds>> omegas;
  std::vector<training::SpeakerExample> batch;

  MicroFixture(const MicroFixture&) = delete;
  MicroFixture& operator=(const MicroFixture&) = delete;

  explicit MicroFixture(std::uint64_t seed) : ds(micro_dataset(seed, kWidth, 2)) {
    Rng rng(seed * 7 + 1);
    for (const auto& sc : ds.scenes()) {
      for (const auto& o : sc.objects) instances.push_back(speaker::make_instance(sc, o));
    }
    auto sentence = [&]() {
      std::vector<std::size_t> ids(1 + rng.index(3));
      for (auto& id : ids) id = speaker::kUnk + rng.index(kVocab - speaker::kUnk);
      return ids;
    };
    std::size_t base = 0;
    for (const auto& sc : ds.scenes()) {
      for (std::size_t k = 0; k < sc.objects.size(); ++k) {
        training::SpeakerExample ex;
        ex.target = &instances[base + k];
        ex.ids = sentence();
        ex.wrong_object = &instances[base + (k + 1) % sc.objects.size()];
        ex.wrong_sentence = sentence();
        omegas.push_back({{sentence(), sentence()}, {sentence(), sentence()}});
        ex.omega = &omegas.back();
        batch.push_back(std::move(ex));
      }
      base += sc.objects.size();
    }
  }

  reinforcer::Reinforcer make_reinforcer(std::uint64_t seed) const {
    reinforcer::ReinforcerConfig rc;
    rc.d = kWidth;
    rc.embed = kWidth;
    rc.hidden = kWidth;
    rc.attn = kWidth;
    rc.mlp_hidden = 2 * kWidth;
    rc.vocab_size = kVocab;
    rc.seed = seed;
    return reinforcer::Reinforcer(rc);
  }
};

// Frozen reinforcer probability as a plain function of the sequence; empty samples earn 0.
inline auto frozen_reward(reinforcer::Reinforcer& r, const speaker::Instance& inst) {
  return [&r, &inst](const std::vector<std::size_t>& ids) {
    if (ids.empty() || (ids.size() == 1 && ids[0] == speaker::kEos)) return 0.0;
    return r.score(inst, ids).probability;
  };
}

// -(1/B) lambda_r sum_i E[F | v_i], enumerated exactly over sequences of length <= max_len.
inline grad::Var exact_pg_term(training::TapeCache& c, std::span<const training::SpeakerExample> batch,
                               reinforcer::Reinforcer& r, double lambda_r, std::size_t max_len) {
  std::vector<grad::Var> terms;
  for (const auto& ex : batch) {
    terms.push_back(training::expected_reward_exact(c.tape(), c.speaker(), c.context(*ex.target),
                                                    frozen_reward(r, *ex.target), max_len));
  }
  return grad::scale(grad::add_n(terms), -lambda_r / static_cast<double>(batch.size()));
}

}  // namespace rxl::testing
