#include "rxl/data/dataset_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "json.hpp"
#include "rxl/data/jsonl.hpp"

namespace rxl::data {

namespace {

using nlohmann::json;

std::string grid_json(const GridGeometry& g) {
  return "[" + std::to_string(g.rows) + "," + std::to_string(g.cols) + "]";
}

std::string attributes_json(const std::map<std::string, std::string>& attrs) {
  std::string s = "{";
  bool first = true;
  for (const auto& [k, v] : attrs) {
    if (!first) s += ',';
    first = false;
    s += quote(k) + ":" + quote(v);
  }
  return s + "}";
}

std::string responses_json(const std::vector<WorkerResponse>& rs) {
  std::string s = "[";
  for (std::size_t i = 0; i < rs.size(); ++i) {
    if (i) s += ',';
    s += JsonLine()
             .field("worker_id", rs[i].worker_id)
             .field("chosen", rs[i].chosen)
             .field("correct", rs[i].correct)
             .field("elapsed", rs[i].elapsed)
             .str();
  }
  return s + "]";
}

JsonLine record(const char* kind) {
  JsonLine line;
  line.field("schema_version", kSchemaVersion).field("kind", kind);
  return line;
}

const json& need(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw DataError(std::string("missing field '") + key + "'");
  return *it;
}

std::string get_string(const json& j, const char* key) {
  const json& v = need(j, key);
  if (!v.is_string()) throw DataError(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

double get_number(const json& j, const char* key) {
  const json& v = need(j, key);
  if (!v.is_number()) throw DataError(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

std::size_t get_count(const json& j, const char* key) {
  const json& v = need(j, key);
  if (!v.is_number_unsigned()) throw DataError(std::string("field '") + key + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

std::vector<double> get_numbers(const json& j, const char* key) {
  const json& v = need(j, key);
  if (!v.is_array()) throw DataError(std::string("field '") + key + "' must be an array");
  std::vector<double> out;
  out.reserve(v.size());
  for (const json& x : v) {
    if (!x.is_number()) throw DataError(std::string("field '") + key + "' must hold numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

std::vector<std::string> get_strings(const json& j, const char* key) {
  const json& v = need(j, key);
  if (!v.is_array()) throw DataError(std::string("field '") + key + "' must be an array");
  std::vector<std::string> out;
  for (const json& x : v) {
    if (!x.is_string()) throw DataError(std::string("field '") + key + "' must hold strings");
    out.push_back(x.get<std::string>());
  }
  return out;
}

GridGeometry get_grid(const json& j, const char* key) {
  const json& v = need(j, key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number_unsigned() || !v[1].is_number_unsigned()) {
    throw DataError(std::string("field '") + key + "' must be [rows, cols]");
  }
  GridGeometry g{v[0].get<std::size_t>(), v[1].get<std::size_t>()};
  if (g.cells() == 0) throw DataError(std::string("field '") + key + "' has an empty grid");
  return g;
}

Tensor matrix_from(std::vector<double> flat, std::size_t rows, std::size_t cols, const char* key) {
  if (rows == 0 || cols == 0 || flat.size() != rows * cols) {
    throw DataError(std::string("field '") + key + "' has " + std::to_string(flat.size()) +
                    " values, expected " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  return Tensor::matrix(rows, cols, std::move(flat));
}

}  // namespace

void write_dataset(std::ostream& out, const Dataset& ds) {
  for (const Scene& sc : ds.scenes()) {
    out << record("scene")
               .field("scene_id", sc.scene_id)
               .field("width", sc.width)
               .field("height", sc.height)
               .raw("grid", grid_json(sc.grid))
               .field("d", sc.global_features.rows())
               .field("global_features", sc.global_features.values())
               .field("cell_colors", sc.cell_colors)
               .str()
        << '\n';
    for (const ObjectRef& o : sc.objects) {
      JsonLine line = record("object");
      line.field("object_id", o.object_id)
          .field("scene_id", o.scene_id)
          .field("category", o.category)
          .field("box", std::vector<double>{o.box.x, o.box.y, o.box.w, o.box.h})
          .field("feature", o.feature.values())
          .raw("local_grid", grid_json(o.local_grid))
          .field("local_features", o.local_features.values())
          .raw("attributes", attributes_json(o.attributes));
      if (o.saliency) line.field("saliency", *o.saliency);
      out << line.str() << '\n';
    }
  }
  for (const SentenceRecord& s : ds.sentences()) {
    JsonLine line = record("sentence");
    line.field("sentence_id", s.sentence_id)
        .field("object_id", s.object_id)
        .field("tokens", s.tokens)
        .raw("responses", responses_json(s.responses));
    if (s.rank) line.field("rank", *s.rank);
    out << line.str() << '\n';
  }
  for (const auto& [name, ids] : ds.splits().partitions) {
    out << record("split").field("name", name).field("scene_ids", ids).str() << '\n';
  }
}

void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  write_dataset(out, ds);
  out.flush();
  if (!out) throw DataError("write to '" + path.string() + "' failed");
}

Dataset read_dataset(std::istream& in) {
  std::vector<Scene> scenes;
  std::vector<SentenceRecord> sentences;
  DatasetSplit splits;
  std::map<std::string, std::size_t> scene_pos;
  std::set<std::string> known_objects;
  std::set<std::string> known_sentences;

  std::string text;
  std::size_t lineno = 0;
  while (std::getline(in, text)) {
    ++lineno;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string at = "line " + std::to_string(lineno) + ": ";
    try {
      json j;
      try {
        j = json::parse(text);
      } catch (const json::parse_error& e) {
        throw DataError(std::string("malformed JSON (") + e.what() + ")");
      }
      if (!j.is_object()) throw DataError("record is not an object");
      const json& ver = need(j, "schema_version");
      if (!ver.is_number_integer() || ver.get<int>() != kSchemaVersion) {
        throw DataError("unsupported schema_version " + ver.dump());
      }
      const std::string kind = get_string(j, "kind");
      if (kind == "scene") {
        Scene sc;
        sc.scene_id = get_string(j, "scene_id");
        sc.width = get_number(j, "width");
        sc.height = get_number(j, "height");
        sc.grid = get_grid(j, "grid");
        const std::size_t d = get_count(j, "d");
        sc.global_features = matrix_from(get_numbers(j, "global_features"), d, sc.grid.cells(), "global_features");
        sc.cell_colors = get_strings(j, "cell_colors");
        if (!scene_pos.emplace(sc.scene_id, scenes.size()).second) {
          throw DataError("duplicate scene '" + sc.scene_id + "'");
        }
        scenes.push_back(std::move(sc));
      } else if (kind == "object") {
        ObjectRef o;
        o.object_id = get_string(j, "object_id");
        o.scene_id = get_string(j, "scene_id");
        auto sp = scene_pos.find(o.scene_id);
        if (sp == scene_pos.end()) {
          throw DataError("object '" + o.object_id + "' references unknown scene '" + o.scene_id + "'");
        }
        o.category = get_string(j, "category");
        const auto box = get_numbers(j, "box");
        if (box.size() != 4) throw DataError("object '" + o.object_id + "': box must have 4 numbers");
        o.box = Box{box[0], box[1], box[2], box[3]};
        auto feat = get_numbers(j, "feature");
        if (feat.empty()) throw DataError("object '" + o.object_id + "': empty feature");
        const std::size_t d = feat.size();
        o.feature = Tensor::vector(std::move(feat));
        o.local_grid = get_grid(j, "local_grid");
        o.local_features = matrix_from(get_numbers(j, "local_features"), d, o.local_grid.cells(), "local_features");
        const json& attrs = need(j, "attributes");
        if (!attrs.is_object()) throw DataError("field 'attributes' must be an object");
        for (const auto& [k, v] : attrs.items()) {
          if (!v.is_string()) throw DataError("attribute '" + k + "' must be a string");
          o.attributes.emplace(k, v.get<std::string>());
        }
        if (j.contains("saliency")) o.saliency = get_number(j, "saliency");
        if (!known_objects.insert(o.object_id).second) throw DataError("duplicate object '" + o.object_id + "'");
        scenes[sp->second].objects.push_back(std::move(o));
      } else if (kind == "sentence") {
        SentenceRecord s;
        s.sentence_id = get_string(j, "sentence_id");
        s.object_id = get_string(j, "object_id");
        if (!known_objects.count(s.object_id)) {
          throw DataError("sentence '" + s.sentence_id + "' references unknown object '" + s.object_id + "'");
        }
        s.tokens = get_strings(j, "tokens");
        const json& rs = need(j, "responses");
        if (!rs.is_array()) throw DataError("field 'responses' must be an array");
        for (const json& r : rs) {
          if (!r.is_object()) throw DataError("response must be an object");
          WorkerResponse w;
          w.worker_id = get_string(r, "worker_id");
          w.chosen = get_string(r, "chosen");
          const json& c = need(r, "correct");
          if (!c.is_boolean()) throw DataError("field 'correct' must be a boolean");
          w.correct = c.get<bool>();
          w.elapsed = get_number(r, "elapsed");
          s.responses.push_back(std::move(w));
        }
        if (j.contains("rank")) {
          const json& rk = j["rank"];
          if (!rk.is_number_integer()) throw DataError("field 'rank' must be an integer");
          s.rank = rk.get<int>();
        }
        if (!known_sentences.insert(s.sentence_id).second) {
          throw DataError("duplicate sentence '" + s.sentence_id + "'");
        }
        sentences.push_back(std::move(s));
      } else if (kind == "split") {
        const std::string name = get_string(j, "name");
        if (splits.partitions.count(name)) throw DataError("duplicate split '" + name + "'");
        splits.partitions[name] = get_strings(j, "scene_ids");
      } else {
        throw DataError("unknown record kind '" + kind + "'");
      }
    } catch (const DataError& e) {
      throw DataError(at + e.what());
    } catch (const grad::GradError& e) {
      throw DataError(at + e.what());
    } catch (const json::exception& e) {
      throw DataError(at + e.what());
    }
  }
  Dataset ds(std::move(scenes), std::move(sentences), std::move(splits));
  ds.validate();
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset '" + path.string() + "'");
  try {
    return read_dataset(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace rxl::data
