#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "rxl/data/scene.hpp"

namespace rxl::data {

// JSON-lines layout, one record per line, every record carrying "schema_version" and "kind":
//   scene    -> scene_id, width, height, grid [rows, cols], global_features (d*k, row-major), d, cell_colors
//   object   -> object_id, scene_id, category, box [x, y, w, h], feature, local_grid, local_features,
//               attributes, saliency (optional)
//   sentence -> sentence_id, object_id, tokens, responses [{worker_id, chosen, correct, elapsed}], rank (optional)
//   split    -> name, scene_ids
// Objects follow their scene; sentences follow the objects they reference.
void write_dataset(std::ostream& out, const Dataset& ds);
void save_dataset(const std::filesystem::path& path, const Dataset& ds);

// Errors name the 1-based line number of the offending record.
Dataset read_dataset(std::istream& in);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace rxl::data
