#include "rxl/data/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "rxl/util/rng.hpp"

namespace rxl::data {

namespace {

constexpr std::array<const char*, 6> kColors = {"red", "blue", "green", "yellow", "white", "black"};
constexpr std::array<double, 6> kSalience = {0.9, 0.55, 0.6, 0.85, 0.5, 0.25};
constexpr std::array<const char*, 6> kColorHex = {"#d63a3a", "#3a5ad6", "#3ab04a", "#e0d040", "#f2f2f2", "#202020"};
constexpr std::array<const char*, 2> kSizes = {"small", "big"};
constexpr std::array<const char*, 2> kGenders = {"man", "woman"};
constexpr std::array<const char*, 5> kLandmarks = {"car", "tree", "building", "bench", "sign"};
constexpr std::array<const char*, 5> kLandmarkHex = {"#8a1f1f", "#1f6b2a", "#7d7d86", "#8b5a2b", "#c9a227"};

// Feature slots; folded modulo d for narrow features.
constexpr std::size_t kColorSlot = 0;
constexpr std::size_t kSizeSlot = 6;
constexpr std::size_t kGenderSlot = 8;
constexpr std::size_t kLandmarkSlot = 10;

enum Cue : unsigned { kColorCue = 1, kSizeCue = 2, kLandmarkCue = 4 };
constexpr std::array<unsigned, 6> kTemplates = {
    kColorCue,                             // the N in C
    kSizeCue | kColorCue,                  // the S N in C
    kColorCue | kLandmarkCue,              // the N in C near the L
    kLandmarkCue,                          // the N near the L
    kSizeCue | kColorCue | kLandmarkCue,   // the S N in C near the L
    kSizeCue,                              // the S N
};

struct Person {
  std::size_t color = 0;
  std::size_t size = 0;
  std::size_t gender = 0;
  std::size_t cell = 0;
  std::size_t nearest = 0;  // index into the scene's landmarks
};

struct Landmark {
  std::size_t type = 0;
  std::size_t cell = 0;
};

std::string id_num(const char* prefix, std::size_t n, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*zu", prefix, width, n);
  return buf;
}

const char* pick(Rng& rng, std::initializer_list<const char*> options) {
  return options.begin()[rng.index(options.size())];
}

std::vector<std::string> render(Rng& rng, unsigned cues, const Person& p, const Landmark& lm) {
  std::vector<std::string> t = {"the"};
  if (cues & kSizeCue) t.push_back(p.size == 1 ? pick(rng, {"big", "tall"}) : pick(rng, {"small", "short"}));
  t.push_back(p.gender == 0 ? pick(rng, {"man", "guy"}) : pick(rng, {"woman", "lady"}));
  if (cues & kColorCue) {
    t.push_back(pick(rng, {"in", "wearing"}));
    t.push_back(kColors[p.color]);
  }
  if (cues & kLandmarkCue) {
    const char* rel = pick(rng, {"near", "by", "next to"});
    if (std::string(rel) == "next to") {
      t.push_back("next");
      t.push_back("to");
    } else {
      t.push_back(rel);
    }
    t.push_back("the");
    t.push_back(kLandmarks[lm.type]);
  }
  return t;
}

bool matches(unsigned cues, const Person& a, const Person& b, const std::vector<Landmark>& lms) {
  if (a.gender != b.gender) return false;
  if ((cues & kColorCue) && a.color != b.color) return false;
  if ((cues & kSizeCue) && a.size != b.size) return false;
  if ((cues & kLandmarkCue) && lms[a.nearest].type != lms[b.nearest].type) return false;
  return true;
}

double search_cost(unsigned cues, std::size_t target, const std::vector<Person>& people) {
  const Person& p = people[target];
  std::size_t same_color = 0, same_size = 0, same_nearest = 0;
  for (std::size_t j = 0; j < people.size(); ++j) {
    if (j == target) continue;
    same_color += people[j].color == p.color;
    same_size += people[j].size == p.size && people[j].gender == p.gender;
    same_nearest += people[j].nearest == p.nearest;
  }
  double best = 1e9;
  if (cues & kColorCue) {
    best = std::min(best, 0.6 + 2.2 * (1.0 - kSalience[p.color]) + 0.5 * static_cast<double>(same_color));
  }
  if (cues & kLandmarkCue) best = std::min(best, 0.9 + 0.3 * static_cast<double>(same_nearest));
  if (cues == kSizeCue) best = 1.2 + 0.4 * static_cast<double>(same_size);
  return best;
}

}  // namespace

void SynthConfig::validate() const {
  if (num_scenes == 0) throw DataError("synthetic config: num_scenes must be >= 1");
  if (d < 8) throw DataError("synthetic config: d must be >= 8");
  if (grid_rows == 0 || grid_cols == 0) throw DataError("synthetic config: empty global grid");
  if (local_rows == 0 || local_cols == 0) throw DataError("synthetic config: empty local grid");
  if (min_objects < 2) throw DataError("synthetic config: scenes need at least 2 objects");
  if (max_objects < min_objects) throw DataError("synthetic config: max_objects < min_objects");
  if (max_landmarks < min_landmarks || min_landmarks == 0) {
    throw DataError("synthetic config: landmark range must be non-empty and start at >= 1");
  }
  if (max_objects + max_landmarks > grid_rows * grid_cols) {
    throw DataError("synthetic config: grid too small for objects and landmarks");
  }
  if (!(distractor_similarity >= 0.0 && distractor_similarity <= 1.0)) {
    throw DataError("synthetic config: distractor_similarity must lie in [0, 1]");
  }
  if (distractor_similarity == 0.0 && max_objects > kColors.size() * kSizes.size()) {
    throw DataError("synthetic config: too many objects for unique attribute codes");
  }
  if (sentences_per_object == 0 || sentences_per_object > kTemplates.size()) {
    throw DataError("synthetic config: sentences_per_object must be in [1, 6]");
  }
  if (workers_per_sentence == 0 || workers_per_sentence > worker_pool) {
    throw DataError("synthetic config: workers_per_sentence must be in [1, worker_pool]");
  }
  if (!(width > 0.0) || !(height > 0.0)) throw DataError("synthetic config: image size must be positive");
}

Dataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const GridGeometry grid{cfg.grid_rows, cfg.grid_cols};
  const GridGeometry local{cfg.local_rows, cfg.local_cols};
  const std::size_t k = grid.cells();
  const std::size_t l = local.cells();
  const std::size_t d = cfg.d;
  const double cell_w = cfg.width / static_cast<double>(cfg.grid_cols);
  const double cell_h = cfg.height / static_cast<double>(cfg.grid_rows);
  auto slot = [d](std::size_t s) { return s % d; };

  std::vector<double> worker_speed(cfg.worker_pool);
  std::vector<std::string> worker_ids(cfg.worker_pool);
  for (std::size_t w = 0; w < cfg.worker_pool; ++w) {
    worker_speed[w] = std::exp(0.15 * rng.normal());
    worker_ids[w] = id_num("w", w, 2);
  }

  std::vector<Scene> scenes;
  std::vector<SentenceRecord> sentences;
  scenes.reserve(cfg.num_scenes);

  for (std::size_t si = 0; si < cfg.num_scenes; ++si) {
    Scene sc;
    sc.scene_id = id_num("s", si + 1, 4);
    sc.width = cfg.width;
    sc.height = cfg.height;
    sc.grid = grid;

    std::vector<std::size_t> cells(k);
    std::iota(cells.begin(), cells.end(), 0);
    rng.shuffle(cells);
    const std::size_t n_obj = cfg.min_objects + rng.index(cfg.max_objects - cfg.min_objects + 1);
    const std::size_t n_lm = cfg.min_landmarks + rng.index(cfg.max_landmarks - cfg.min_landmarks + 1);

    std::vector<Landmark> lms(n_lm);
    for (std::size_t j = 0; j < n_lm; ++j) lms[j] = Landmark{rng.index(kLandmarks.size()), cells[n_obj + j]};

    std::vector<Person> people(n_obj);
    std::set<std::pair<std::size_t, std::size_t>> codes;
    for (std::size_t j = 0; j < n_obj; ++j) {
      Person& p = people[j];
      p.cell = cells[j];
      p.gender = rng.index(2);
      if (j > 0 && rng.chance(cfg.distractor_similarity)) {
        const Person& src = people[rng.index(j)];
        p.color = src.color;
        p.size = rng.chance(0.5) ? src.size : rng.index(2);
      } else {
        p.color = rng.index(kColors.size());
        p.size = rng.index(2);
      }
      if (cfg.distractor_similarity == 0.0) {
        while (codes.count({p.color, p.size})) {
          p.color = rng.index(kColors.size());
          p.size = rng.index(2);
        }
      }
      codes.insert({p.color, p.size});
    }

    // Render map and global feature grid.
    sc.global_features = Tensor(grad::Shape{d, k});
    sc.cell_colors.assign(k, "");
    for (std::size_t s = 0; s < k; ++s) {
      const int shade = 0x70 + static_cast<int>(rng.index(0x20));
      char hex[8];
      std::snprintf(hex, sizeof(hex), "#%02x%02x%02x", shade - 0x10, shade + 0x10, shade - 0x20);
      sc.cell_colors[s] = hex;
      for (std::size_t f = 0; f < d; ++f) sc.global_features.at(f, s) = 0.05 * rng.normal();
    }
    for (const Landmark& lm : lms) {
      sc.global_features.at(slot(kLandmarkSlot + lm.type), lm.cell) += 1.0;
      sc.cell_colors[lm.cell] = kLandmarkHex[lm.type];
    }

    for (std::size_t j = 0; j < n_obj; ++j) {
      Person& p = people[j];
      const auto [cx, cy] = grid.center(p.cell);
      double best = 1e18;
      for (std::size_t m = 0; m < n_lm; ++m) {
        const auto [lx, ly] = grid.center(lms[m].cell);
        const double dist = (lx - cx) * (lx - cx) + (ly - cy) * (ly - cy);
        if (dist < best) {
          best = dist;
          p.nearest = m;
        }
      }
      sc.global_features.at(slot(kColorSlot + p.color), p.cell) += 0.5;
      sc.global_features.at(slot(kGenderSlot + p.gender), p.cell) += 0.3;

      ObjectRef o;
      o.object_id = sc.scene_id + "_o" + std::to_string(j + 1);
      o.scene_id = sc.scene_id;
      o.category = "person";
      const double bw = p.size == 1 ? rng.uniform(30.0, 38.0) : rng.uniform(18.0, 26.0);
      const double bh = p.size == 1 ? rng.uniform(62.0, 76.0) : rng.uniform(38.0, 50.0);
      const double px = cx * cfg.width + rng.uniform(-0.2, 0.2) * cell_w;
      const double py = cy * cfg.height + rng.uniform(-0.2, 0.2) * cell_h;
      o.box.w = std::min(bw, cfg.width);
      o.box.h = std::min(bh, cfg.height);
      o.box.x = std::clamp(px - 0.5 * o.box.w, 0.0, cfg.width - o.box.w);
      o.box.y = std::clamp(py - 0.5 * o.box.h, 0.0, cfg.height - o.box.h);

      o.feature = Tensor(grad::Shape{d});
      for (std::size_t f = 0; f < d; ++f) o.feature[f] = 0.05 * rng.normal();
      o.feature[slot(kColorSlot + p.color)] += 1.0;
      o.feature[slot(kSizeSlot + p.size)] += 1.0;
      o.feature[slot(kGenderSlot + p.gender)] += 1.0;

      o.local_grid = local;
      o.local_features = Tensor(grad::Shape{d, l});
      for (std::size_t s = 0; s < l; ++s) {
        const bool upper = s / cfg.local_cols < (cfg.local_rows + 1) / 2;
        for (std::size_t f = 0; f < d; ++f) o.local_features.at(f, s) = 0.05 * rng.normal();
        o.local_features.at(slot(kColorSlot + p.color), s) += upper ? 0.4 : 1.0;
        o.local_features.at(slot(kGenderSlot + p.gender), s) += upper ? 1.0 : 0.3;
        o.local_features.at(slot(kSizeSlot + p.size), s) += 0.5;
      }
      o.saliency = kSalience[p.color] * o.box.w * o.box.h;
      o.attributes = {{"color", kColors[p.color]},
                      {"size", kSizes[p.size]},
                      {"gender", kGenders[p.gender]},
                      {"nearest_landmark", kLandmarks[lms[p.nearest].type]}};
      sc.objects.push_back(std::move(o));
    }
    for (std::size_t j = 0; j < n_obj; ++j) {
      const Person& p = people[j];
      sc.cell_colors[p.cell] = kColorHex[p.color];
    }

    // Sentences and simulated worker responses.
    for (std::size_t j = 0; j < n_obj; ++j) {
      std::vector<std::size_t> tids(kTemplates.size());
      std::iota(tids.begin(), tids.end(), 0);
      rng.shuffle(tids);
      tids.resize(cfg.sentences_per_object);
      std::sort(tids.begin(), tids.end());
      for (std::size_t r = 0; r < tids.size(); ++r) {
        const unsigned cues = kTemplates[tids[r]];
        SentenceRecord rec;
        rec.object_id = sc.objects[j].object_id;
        rec.sentence_id = rec.object_id + "_r" + std::to_string(r + 1);
        rec.tokens = render(rng, cues, people[j], lms[people[j].nearest]);

        std::vector<std::size_t> match;
        for (std::size_t m = 0; m < n_obj; ++m) {
          if (matches(cues, people[m], people[j], lms)) match.push_back(m);
        }
        const double base = 1.0 + 0.12 * static_cast<double>(rec.tokens.size()) + search_cost(cues, j, people) +
                            (match.size() > 1 ? 1.5 : 0.0);

        std::vector<std::size_t> pool(cfg.worker_pool);
        std::iota(pool.begin(), pool.end(), 0);
        rng.shuffle(pool);
        pool.resize(cfg.workers_per_sentence);
        std::sort(pool.begin(), pool.end());
        for (std::size_t w : pool) {
          WorkerResponse resp;
          resp.worker_id = worker_ids[w];
          std::size_t choice = j;
          bool impossible = false;
          if (match.size() == 1) {
            const double u = rng.uniform();
            if (u >= 0.96) {
              if (u < 0.98) {
                impossible = true;
              } else {
                choice = (j + 1 + rng.index(n_obj - 1)) % n_obj;
              }
            }
          } else if (rng.chance(0.1)) {
            impossible = true;
          } else {
            choice = match[rng.index(match.size())];
          }
          resp.chosen = impossible ? std::string(kImpossible) : sc.objects[choice].object_id;
          resp.correct = !impossible && choice == j;
          resp.elapsed = base * worker_speed[w] * std::exp(0.12 * rng.normal());
          rec.responses.push_back(std::move(resp));
        }
        sentences.push_back(std::move(rec));
      }
    }
    scenes.push_back(std::move(sc));
  }

  std::vector<std::string> order;
  for (const Scene& sc : scenes) order.push_back(sc.scene_id);
  rng.shuffle(order);
  const std::size_t n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(order.size())));
  const std::size_t n_val = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(order.size())));
  DatasetSplit split;
  auto& tr = split.partitions["train"];
  auto& va = split.partitions["val"];
  auto& te = split.partitions["test"];
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i < n_train) tr.push_back(order[i]);
    else if (i < n_train + n_val) va.push_back(order[i]);
    else te.push_back(order[i]);
  }
  for (auto* part : {&tr, &va, &te}) std::sort(part->begin(), part->end());

  Dataset ds(std::move(scenes), std::move(sentences), std::move(split));
  ds.validate();
  return ds;
}

}  // namespace rxl::data
