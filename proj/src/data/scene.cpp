#include "rxl/data/scene.hpp"

#include <set>

namespace rxl::data {

const std::vector<std::string>& DatasetSplit::scenes(const std::string& name) const {
  auto it = partitions.find(name);
  if (it == partitions.end()) throw DataError("unknown split '" + name + "'");
  return it->second;
}

Dataset::Dataset(std::vector<Scene> scenes, std::vector<SentenceRecord> sentences,
                 DatasetSplit splits)
    : scenes_(std::move(scenes)), sentences_(std::move(sentences)), splits_(std::move(splits)) {
  build_index();
}

void Dataset::build_index() {
  for (std::size_t i = 0; i < scenes_.size(); ++i) {
    if (!scene_index_.emplace(scenes_[i].scene_id, i).second) {
      throw DataError("duplicate scene id '" + scenes_[i].scene_id + "'");
    }
    for (std::size_t j = 0; j < scenes_[i].objects.size(); ++j) {
      const std::string& oid = scenes_[i].objects[j].object_id;
      if (!objects_.emplace(oid, ObjectLocation{i, j}).second) {
        throw DataError("duplicate object id '" + oid + "'");
      }
    }
  }
  for (std::size_t i = 0; i < sentences_.size(); ++i) {
    if (!sentence_index_.emplace(sentences_[i].sentence_id, i).second) {
      throw DataError("duplicate sentence id '" + sentences_[i].sentence_id + "'");
    }
    by_object_[sentences_[i].object_id].push_back(i);
  }
}

const Scene& Dataset::scene(const std::string& scene_id) const {
  auto it = scene_index_.find(scene_id);
  if (it == scene_index_.end()) throw DataError("unknown scene '" + scene_id + "'");
  return scenes_[it->second];
}

const Scene& Dataset::scene_of(const std::string& object_id) const {
  auto it = objects_.find(object_id);
  if (it == objects_.end()) throw DataError("unknown object '" + object_id + "'");
  return scenes_[it->second.scene];
}

const ObjectRef& Dataset::object(const std::string& object_id) const {
  auto it = objects_.find(object_id);
  if (it == objects_.end()) throw DataError("unknown object '" + object_id + "'");
  return scenes_[it->second.scene].objects[it->second.object];
}

const SentenceRecord& Dataset::sentence(const std::string& sentence_id) const {
  auto it = sentence_index_.find(sentence_id);
  if (it == sentence_index_.end()) throw DataError("unknown sentence '" + sentence_id + "'");
  return sentences_[it->second];
}

std::vector<const SentenceRecord*> Dataset::sentences_for(const std::string& object_id) const {
  std::vector<const SentenceRecord*> out;
  auto it = by_object_.find(object_id);
  if (it == by_object_.end()) return out;
  for (std::size_t i : it->second) out.push_back(&sentences_[i]);
  return out;
}

std::vector<const SentenceRecord*> Dataset::sentences_in_split(const std::string& split) const {
  const auto& ids = splits_.scenes(split);
  std::set<std::string> wanted(ids.begin(), ids.end());
  std::vector<const SentenceRecord*> out;
  for (const SentenceRecord& s : sentences_) {
    if (wanted.count(scene_of(s.object_id).scene_id)) out.push_back(&s);
  }
  return out;
}

std::vector<const ObjectRef*> Dataset::objects_in_split(const std::string& split) const {
  const auto& ids = splits_.scenes(split);
  std::set<std::string> wanted(ids.begin(), ids.end());
  std::vector<const ObjectRef*> out;
  for (const Scene& sc : scenes_) {
    if (!wanted.count(sc.scene_id)) continue;
    for (const ObjectRef& o : sc.objects) out.push_back(&o);
  }
  return out;
}

void Dataset::validate() const {
  std::size_t d = 0;
  for (const Scene& sc : scenes_) {
    const std::string where = "scene '" + sc.scene_id + "'";
    if (!(sc.width > 0.0) || !(sc.height > 0.0)) throw DataError(where + ": non-positive size");
    if (sc.grid.cells() == 0) throw DataError(where + ": empty grid");
    const auto& gs = sc.global_features.shape();
    if (gs.rank() != 2 || gs[1] != sc.grid.cells()) {
      throw DataError(where + ": global features " + gs.str() + " do not match grid of " +
                      std::to_string(sc.grid.cells()) + " cells");
    }
    if (!sc.global_features.all_finite()) throw DataError(where + ": non-finite global feature");
    if (d == 0) d = gs[0];
    if (gs[0] != d) throw DataError(where + ": feature width differs from dataset width");
    if (!sc.cell_colors.empty() && sc.cell_colors.size() != sc.grid.cells()) {
      throw DataError(where + ": cell color map does not cover the grid");
    }
    for (const ObjectRef& o : sc.objects) {
      const std::string ow = "object '" + o.object_id + "'";
      if (o.scene_id != sc.scene_id) throw DataError(ow + ": scene id mismatch");
      if (!(o.box.w > 0.0) || !(o.box.h > 0.0)) throw DataError(ow + ": degenerate box");
      if (o.box.x < 0.0 || o.box.y < 0.0 || o.box.x_br() > sc.width || o.box.y_br() > sc.height) {
        throw DataError(ow + ": box outside image");
      }
      if (o.feature.shape() != grad::Shape{d} || !o.feature.all_finite()) {
        throw DataError(ow + ": object feature must be finite with width " + std::to_string(d));
      }
      const auto& ls = o.local_features.shape();
      if (ls.rank() != 2 || ls[0] != d || ls[1] != o.local_grid.cells() || !o.local_features.all_finite()) {
        throw DataError(ow + ": local features " + ls.str() + " inconsistent with its grid");
      }
      if (o.saliency && !(*o.saliency >= 0.0)) throw DataError(ow + ": negative saliency");
    }
  }
  for (const SentenceRecord& s : sentences_) {
    const std::string sw = "sentence '" + s.sentence_id + "'";
    if (!has_object(s.object_id)) throw DataError(sw + ": unknown object '" + s.object_id + "'");
    if (s.tokens.empty()) throw DataError(sw + ": empty token sequence");
    std::set<std::string> workers;
    for (const WorkerResponse& r : s.responses) {
      if (r.worker_id.empty()) throw DataError(sw + ": response without worker id");
      if (!workers.insert(r.worker_id).second) {
        throw DataError(sw + ": worker '" + r.worker_id + "' answered twice");
      }
      if (!(r.elapsed > 0.0)) throw DataError(sw + ": non-positive elapsed time");
      if (!r.impossible() && !has_object(r.chosen)) {
        throw DataError(sw + ": response chooses unknown object '" + r.chosen + "'");
      }
      const bool expect = !r.impossible() && r.chosen == s.object_id;
      if (r.correct != expect) throw DataError(sw + ": correctness flag inconsistent with choice");
    }
    if (s.rank && *s.rank < 1) throw DataError(sw + ": rank must be >= 1");
  }
  std::set<std::string> seen;
  for (const auto& [name, ids] : splits_.partitions) {
    for (const std::string& id : ids) {
      if (!has_scene(id)) throw DataError("split '" + name + "': unknown scene '" + id + "'");
      if (!seen.insert(id).second) throw DataError("split '" + name + "': scene '" + id + "' in two partitions");
    }
  }
}

}  // namespace rxl::data
