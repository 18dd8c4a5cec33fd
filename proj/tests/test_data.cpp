#include <chrono>
#include <filesystem>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "rxl/data/dataset_io.hpp"
#include "rxl/data/jsonl.hpp"
#include "rxl/data/synth.hpp"

using namespace rxl::data;

namespace {

Dataset round_trip(const Dataset& ds) {
  std::stringstream buf;
  write_dataset(buf, ds);
  return read_dataset(buf);
}

std::string error_of(const std::string& text) {
  std::istringstream in(text);
  try {
    read_dataset(in);
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

const char* kSceneA =
    R"({"schema_version":1,"kind":"scene","scene_id":"a","width":100.0,"height":50.0,"grid":[1,2],"d":2,)"
    R"("global_features":[0.0,1.0,2.0,3.0],"cell_colors":[]})";
const char* kSceneB =
    R"({"schema_version":1,"kind":"scene","scene_id":"b","width":10.0,"height":10.0,"grid":[1,1],"d":2,)"
    R"("global_features":[0.5,0.25],"cell_colors":["#000000"]})";

std::string object_line(const std::string& id, const std::string& scene) {
  return R"({"schema_version":1,"kind":"object","object_id":")" + id + R"(","scene_id":")" + scene +
         R"(","category":"person","box":[1.0,1.0,4.0,4.0],"feature":[1.0,0.0],"local_grid":[1,1],)"
         R"("local_features":[0.0,1.0],"attributes":{"color":"red"}})";
}

std::string sentence_line(const std::string& id, const std::string& object, const std::string& chosen,
                          bool correct) {
  return R"({"schema_version":1,"kind":"sentence","sentence_id":")" + id + R"(","object_id":")" + object +
         R"(","tokens":["the","man"],"responses":[{"worker_id":"w1","chosen":")" + chosen +
         R"(","correct":)" + (correct ? "true" : "false") + R"(,"elapsed":2.5}]})";
}

std::string hand_fixture() {
  std::string s;
  s += std::string(kSceneA) + "\n";
  s += object_line("a1", "a") + "\n";
  s += object_line("a2", "a") + "\n";
  s += std::string(kSceneB) + "\n";
  s += object_line("b1", "b") + "\n";
  s += sentence_line("r1", "a1", "a1", true) + "\n";
  s += sentence_line("r2", "a1", "a2", false) + "\n";
  s += sentence_line("r3", "a2", "IMPOSSIBLE", false) + "\n";
  s += sentence_line("r4", "b1", "b1", true) + "\n";
  s += sentence_line("r5", "b1", "b1", true) + "\n";
  s += R"({"schema_version":1,"kind":"split","name":"train","scene_ids":["a"]})" "\n";
  s += R"({"schema_version":1,"kind":"split","name":"test","scene_ids":["b"]})" "\n";
  return s;
}

SynthConfig small_config(std::uint64_t seed) {
  SynthConfig c;
  c.num_scenes = 6;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("doubles are written with 17 significant digits and reload exactly") {
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(1.0) == "1.0");
  CHECK(format_double(-1.0 / 3.0) == "-0.33333333333333331");
  CHECK(format_double(2.5e-300) == "2.5e-300");
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<double>(i % 40) - 20.0);
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK_THROWS_AS(format_double(std::nan("")), std::invalid_argument);
}

TEST_CASE("hand-built fixture loads with exact counts") {
  std::istringstream in(hand_fixture());
  const Dataset ds = read_dataset(in);
  CHECK(ds.scenes().size() == 2);
  std::size_t objects = 0;
  for (const Scene& sc : ds.scenes()) objects += sc.objects.size();
  CHECK(objects == 3);
  CHECK(ds.sentences().size() == 5);
  CHECK(ds.sentences_for("a1").size() == 2);
  CHECK(ds.sentences_in_split("test").size() == 2);
  CHECK(ds.objects_in_split("train").size() == 2);
  CHECK(ds.scene_of("b1").scene_id == "b");
  CHECK(ds.scene("a").global_features.at(1, 0) == 2.0);
  CHECK(ds.sentence("r3").responses[0].impossible());
}

TEST_CASE("sentence referencing a missing object is rejected with its id and line") {
  std::string text = std::string(kSceneA) + "\n" + object_line("a1", "a") + "\n" +
                     sentence_line("lost_sentence", "ghost", "a1", false) + "\n";
  const std::string err = error_of(text);
  CHECK(err.find("lost_sentence") != std::string::npos);
  CHECK(err.find("line 3") != std::string::npos);
}

TEST_CASE("malformed records are rejected") {
  CHECK(error_of("{not json\n").find("line 1") != std::string::npos);
  CHECK(error_of(R"({"schema_version":2,"kind":"scene"})" "\n").find("schema_version") != std::string::npos);
  CHECK(error_of(R"({"schema_version":1,"kind":"frame"})" "\n").find("frame") != std::string::npos);
  // feature grid with the wrong number of values
  std::string bad = kSceneA;
  bad.replace(bad.find("[0.0,1.0,2.0,3.0]"), 17, "[0.0,1.0,2.0]");
  CHECK(error_of(bad + "\n").find("global_features") != std::string::npos);
  // correctness flag contradicting the choice
  std::string text = std::string(kSceneA) + "\n" + object_line("a1", "a") + "\n" +
                     sentence_line("liar", "a1", "a1", false) + "\n";
  CHECK(error_of(text).find("liar") != std::string::npos);
  // box outside the image
  std::string outside = object_line("a1", "a");
  outside.replace(outside.find("[1.0,1.0,4.0,4.0]"), 17, "[98.0,1.0,4.0,4.0]");
  CHECK(error_of(std::string(kSceneA) + "\n" + outside + "\n").find("outside") != std::string::npos);
  // non-positive elapsed time
  std::string slow = sentence_line("zero", "a1", "a1", true);
  slow.replace(slow.find("2.5"), 3, "0.0");
  CHECK(error_of(std::string(kSceneA) + "\n" + object_line("a1", "a") + "\n" + slow + "\n").find("elapsed") !=
        std::string::npos);
}

TEST_CASE("splits must be disjoint") {
  std::string text = hand_fixture();
  text += R"({"schema_version":1,"kind":"split","name":"val","scene_ids":["a"]})" "\n";
  CHECK(error_of(text).find("two partitions") != std::string::npos);
}

TEST_CASE("save and load through a file") {
  const Dataset ds = generate_synthetic(small_config(5));
  const auto path = std::filesystem::temp_directory_path() / "rxl_test_data_roundtrip.jsonl";
  save_dataset(path, ds);
  CHECK(load_dataset(path) == ds);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_dataset(path), DataError);
}

TEST_CASE("round trip reproduces the dataset over random configs") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    SynthConfig c;
    c.num_scenes = 1 + rng() % 4;
    c.grid_rows = 3 + rng() % 4;
    c.grid_cols = 3 + rng() % 4;
    c.local_rows = 1 + rng() % 4;
    c.local_cols = 1 + rng() % 4;
    c.d = 8 + rng() % 20;
    c.min_objects = 2 + rng() % 2;
    c.max_objects = c.min_objects + rng() % 3;
    c.min_landmarks = 1;
    c.max_landmarks = 1 + rng() % 3;
    c.distractor_similarity = static_cast<double>(rng() % 11) / 10.0;
    c.sentences_per_object = 1 + rng() % 6;
    c.workers_per_sentence = 1 + rng() % 5;
    c.worker_pool = 5 + rng() % 10;
    c.width = 50.0 + static_cast<double>(rng() % 500);
    c.height = 50.0 + static_cast<double>(rng() % 500);
    c.seed = rng();
    const Dataset ds = generate_synthetic(c);
    INFO("trial " << trial);
    REQUIRE(round_trip(ds) == ds);
  }
}

TEST_CASE("generator is deterministic per seed") {
  const Dataset a = generate_synthetic(small_config(42));
  const Dataset b = generate_synthetic(small_config(42));
  const Dataset c = generate_synthetic(small_config(43));
  CHECK(a == b);
  CHECK_FALSE(a == c);
  std::stringstream sa, sb;
  write_dataset(sa, a);
  write_dataset(sb, b);
  CHECK(sa.str() == sb.str());
}

TEST_CASE("zero distractor similarity gives unique attribute codes") {
  SynthConfig c;
  c.num_scenes = 200;
  c.distractor_similarity = 0.0;
  const Dataset ds = generate_synthetic(c);
  for (const Scene& sc : ds.scenes()) {
    std::set<std::pair<std::string, std::string>> codes;
    for (const ObjectRef& o : sc.objects) {
      CHECK(codes.insert({o.attributes.at("color"), o.attributes.at("size")}).second);
    }
  }
}

TEST_CASE("generated annotations satisfy the response invariants") {
  const Dataset ds = generate_synthetic(small_config(9));
  std::size_t correct = 0, total = 0;
  for (const SentenceRecord& s : ds.sentences()) {
    CHECK_FALSE(s.tokens.empty());
    CHECK(s.responses.size() == 5);
    for (const WorkerResponse& r : s.responses) {
      CHECK(r.elapsed > 0.0);
      CHECK(r.correct == (!r.impossible() && r.chosen == s.object_id));
      correct += r.correct;
      ++total;
    }
  }
  CHECK(correct > total / 2);
  for (const Scene& sc : ds.scenes()) {
    CHECK(sc.objects.size() >= 2);
    CHECK(sc.objects.size() <= 6);
    for (const ObjectRef& o : sc.objects) CHECK(o.saliency.has_value());
  }
}

TEST_CASE("splits cover every scene once") {
  SynthConfig c;
  c.num_scenes = 50;
  const Dataset ds = generate_synthetic(c);
  std::size_t total = 0;
  for (const auto& [name, ids] : ds.splits().partitions) total += ids.size();
  CHECK(total == 50);
  CHECK(ds.splits().scenes("train").size() == 40);
  CHECK(ds.splits().scenes("test").size() == 5);
}

TEST_CASE("impossible configs are rejected") {
  SynthConfig c;
  c.min_objects = 0;
  CHECK_THROWS_AS(generate_synthetic(c), DataError);
  c = SynthConfig{};
  c.d = 4;
  CHECK_THROWS_AS(generate_synthetic(c), DataError);
  c = SynthConfig{};
  c.max_objects = 1;
  c.min_objects = 1;
  CHECK_THROWS_AS(generate_synthetic(c), DataError);
  c = SynthConfig{};
  c.num_scenes = 0;
  CHECK_THROWS_AS(generate_synthetic(c), DataError);
}

TEST_CASE("500 scenes generate within the time budget") {
  SynthConfig c;
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset ds = generate_synthetic(c);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(ds.scenes().size() == 500);
  CHECK(secs < 10.0);
}
