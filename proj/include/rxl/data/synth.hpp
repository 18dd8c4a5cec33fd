#pragma once

#include <cstdint>

#include "rxl/data/scene.hpp"

namespace rxl::data {

struct SynthConfig {
  std::size_t num_scenes = 500;
  std::size_t grid_rows = 8;
  std::size_t grid_cols = 8;
  std::size_t local_rows = 4;
  std::size_t local_cols = 4;
  std::size_t d = 32;
  std::size_t min_objects = 2;
  std::size_t max_objects = 6;
  std::size_t min_landmarks = 2;
  std::size_t max_landmarks = 4;
  // Probability that a new object copies the color of an object already in the scene.
  double distractor_similarity = 0.3;
  std::size_t sentences_per_object = 5;
  std::size_t workers_per_sentence = 5;
  std::size_t worker_pool = 20;
  double width = 320.0;
  double height = 320.0;
  std::uint64_t seed = 1;

  // Throws DataError listing the first violated constraint.
  void validate() const;
};

// Scenes of people with color/size/gender attributes on a grid with landmark cells.
// Object features encode the attributes, global cells encode landmarks and nearby people,
// and each object gets templated sentences answered by simulated workers whose times grow
// with the visual search the sentence demands.
Dataset generate_synthetic(const SynthConfig& cfg);

}  // namespace rxl::data
