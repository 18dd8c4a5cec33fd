#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rxl/grad/tensor.hpp"

namespace rxl::data {

using grad::Tensor;

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kImpossible = "IMPOSSIBLE";

// Pixel-space box with top-left corner (x, y).
struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double x_br() const { return x + w; }
  double y_br() const { return y + h; }
  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }
  double area() const { return w * h; }
  bool contains(double px, double py) const { return px >= x && px <= x + w && py >= y && py <= y + h; }
  bool operator==(const Box&) const = default;
};

// A rows x cols grid of feature cells laid over a region. Cell index s = r * cols + c.
struct GridGeometry {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t cells() const { return rows * cols; }
  // Center of cell s in coordinates normalized to the region ([0,1] x [0,1]).
  std::pair<double, double> center(std::size_t s) const {
    const double r = static_cast<double>(s / cols);
    const double c = static_cast<double>(s % cols);
    return {(c + 0.5) / static_cast<double>(cols), (r + 0.5) / static_cast<double>(rows)};
  }
  bool operator==(const GridGeometry&) const = default;
};

struct ObjectRef {
  std::string object_id;
  std::string scene_id;
  std::string category;
  Box box;
  Tensor feature;         // o_i, shape [d]
  GridGeometry local_grid;
  Tensor local_features;  // V_local, shape [d, l]
  std::optional<double> saliency;
  std::map<std::string, std::string> attributes;

  bool operator==(const ObjectRef&) const = default;
};

struct Scene {
  std::string scene_id;
  double width = 0.0;
  double height = 0.0;
  GridGeometry grid;
  Tensor global_features;  // V_global, shape [d, k]
  std::vector<std::string> cell_colors;  // optional render payload, one "#rrggbb" per cell
  std::vector<ObjectRef> objects;

  std::size_t feature_dim() const { return global_features.shape()[0]; }
  bool operator==(const Scene&) const = default;
};

struct WorkerResponse {
  std::string worker_id;
  std::string chosen;  // object id or kImpossible
  bool correct = false;
  double elapsed = 0.0;  // seconds

  bool impossible() const { return chosen == kImpossible; }
  bool operator==(const WorkerResponse&) const = default;
};

struct SentenceRecord {
  std::string sentence_id;
  std::string object_id;
  std::vector<std::string> tokens;
  std::vector<WorkerResponse> responses;
  std::optional<int> rank;

  bool operator==(const SentenceRecord&) const = default;
};

struct DatasetSplit {
  std::map<std::string, std::vector<std::string>> partitions;  // name -> scene ids

  const std::vector<std::string>& scenes(const std::string& name) const;
  bool operator==(const DatasetSplit&) const = default;
};

struct ObjectLocation {
  std::size_t scene = 0;
  std::size_t object = 0;
};

// In-memory dataset with id indexes. Immutable after construction by convention.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<Scene> scenes, std::vector<SentenceRecord> sentences, DatasetSplit splits);

  const std::vector<Scene>& scenes() const { return scenes_; }
  const std::vector<SentenceRecord>& sentences() const { return sentences_; }
  const DatasetSplit& splits() const { return splits_; }

  const Scene& scene(const std::string& scene_id) const;
  const Scene& scene_of(const std::string& object_id) const;
  const ObjectRef& object(const std::string& object_id) const;
  bool has_object(const std::string& object_id) const { return objects_.count(object_id) != 0; }
  bool has_scene(const std::string& scene_id) const { return scene_index_.count(scene_id) != 0; }
  const SentenceRecord& sentence(const std::string& sentence_id) const;

  // Sentences referring to the object, in dataset order.
  std::vector<const SentenceRecord*> sentences_for(const std::string& object_id) const;
  // Sentences whose target lies in one of the split's scenes, in dataset order.
  std::vector<const SentenceRecord*> sentences_in_split(const std::string& split) const;
  // Objects in the split's scenes, in dataset order.
  std::vector<const ObjectRef*> objects_in_split(const std::string& split) const;

  // Throws DataError on the first violated invariant.
  void validate() const;

  bool operator==(const Dataset& other) const {
    return scenes_ == other.scenes_ && sentences_ == other.sentences_ && splits_ == other.splits_;
  }

 private:
  void build_index();

  std::vector<Scene> scenes_;
  std::vector<SentenceRecord> sentences_;
  DatasetSplit splits_;
  std::unordered_map<std::string, std::size_t> scene_index_;
  std::unordered_map<std::string, ObjectLocation> objects_;
  std::unordered_map<std::string, std::size_t> sentence_index_;
  std::unordered_map<std::string, std::vector<std::size_t>> by_object_;
};

}  // namespace rxl::data
