#include <unistd.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "rxl/data/dataset_io.hpp"
#include "rxl/data/synth.hpp"
#include "rxl/service/annotation.hpp"
#include "rxl/service/checkpoint.hpp"
#include "rxl/service/cli.hpp"
#include "rxl/service/config.hpp"

using namespace rxl;
using namespace rxl::service;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path = fs::temp_directory_path() / ("rxl_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CliRun {
  int code;
  std::string out, err;
};

CliRun cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

data::Dataset small_dataset(std::uint64_t seed, std::size_t scenes = 12) {
  data::SynthConfig c;
  c.num_scenes = scenes;
  c.d = 8;
  c.seed = seed;
  return data::generate_synthetic(c);
}

// Elapsed times rounded to whole milliseconds so the ms round trip through the API is exact.
data::Dataset quantized(const data::Dataset& ds) {
  std::vector<data::SentenceRecord> sentences = ds.sentences();
  for (auto& s : sentences) {
    for (auto& r : s.responses) r.elapsed = std::round(r.elapsed * 1000.0) / 1000.0;
  }
  return data::Dataset(ds.scenes(), std::move(sentences), ds.splits());
}

speaker::Speaker trained_speaker(const data::Dataset& ds, const speaker::Vocabulary& vocab, std::size_t steps) {
  speaker::SpeakerConfig sc;
  sc.d = 8;
  sc.embed = 8;
  sc.attn = 8;
  sc.vocab_size = vocab.size();
  sc.seed = 5;
  speaker::Speaker sp(sc);
  const training::Corpus corpus = training::build_corpus(ds, "train", vocab);
  training::TrainConfig tc;
  tc.toggles = {false, false, false};
  training::SpeakerTrainer tr(corpus, sp, {}, tc);
  tr.run(steps);
  return sp;
}

json post_body(const std::string& task, const std::string& worker, const std::string& chosen, double ms) {
  return {{"task_id", task}, {"worker_id", worker}, {"chosen", chosen}, {"elapsed_ms", ms}};
}

}  // namespace

TEST_CASE("config defaults are valid and print in a form that parses back") {
  const Config c;
  CHECK(c.violations().empty());
  const std::string text = to_text(c);
  CHECK(to_text(parse_config(text)) == text);
  for (const auto& key : config_keys()) CHECK(text.find(key + " = ") != std::string::npos);
}

TEST_CASE("config rejects unknown keys and lists every problem") {
  const std::string text = "model.d = 16\nbogus = 1\n# comment\ntrain.batch_size = many\nnot a pair\n";
  try {
    parse_config(text);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    REQUIRE(e.violations().size() == 3);
    CHECK(e.violations()[0].find("line 2") != std::string::npos);
    CHECK(e.violations()[0].find("bogus") != std::string::npos);
    CHECK(e.violations()[1].find("train.batch_size") != std::string::npos);
    CHECK(e.violations()[2].find("line 5") != std::string::npos);
  }
  Config c = parse_config("model.d = 16 # trailing\nhp.lambda_s1=0.5\ndecode.mode = greedy\ntrain.pg = false");
  CHECK(c.model.d == 16);
  CHECK(c.hp.lambda_s1 == 0.5);
  CHECK(c.decode.mode == speaker::DecodeMode::kGreedy);
  CHECK_FALSE(c.train.toggles.pg);

  c.hp.lambda_s1 = -1.0;
  c.train.batch_size = 0;
  c.serve.port = 70000;
  CHECK(c.violations().size() >= 3);
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(set_key(c, "model.width", "3"), ConfigError);
  CHECK_THROWS_AS(set_key(c, "decode.mode", "nucleus"), ConfigError);
}

TEST_CASE("checkpoint round trip is bitwise and carries dims, vocab, seed and step") {
  TempDir tmp("ckpt");
  const data::Dataset ds = small_dataset(3);
  const speaker::Vocabulary vocab = training::build_vocabulary(ds, "train");
  const speaker::Speaker sp = trained_speaker(ds, vocab, 5);
  save_speaker(tmp / "s.rxl", sp, vocab, 5);

  const std::string bytes = slurp(tmp / "s.rxl");
  REQUIRE(bytes.size() > 12);
  CHECK(bytes.substr(0, 4) == "RXL1");
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[4 + i])) << (8 * i);
  const json header = json::parse(bytes.substr(12, len));
  CHECK(header["kind"] == "speaker");
  CHECK(header["step"] == 5);
  CHECK(header["seed"] == 5);
  CHECK(header["model"]["d"] == 8);
  CHECK(header["vocab"].size() == vocab.words().size());
  CHECK(bytes.size() == 12 + len + 8 * sp.params().total_elements());

  const LoadedSpeaker back = load_speaker(tmp / "s.rxl");
  CHECK(back.step == 5);
  CHECK(back.vocab == vocab);
  CHECK(back.speaker.params() == sp.params());
  save_speaker(tmp / "t.rxl", back.speaker, back.vocab, back.step);
  CHECK(slurp(tmp / "t.rxl") == bytes);
}

TEST_CASE("loading into a model of another width names both shapes") {
  TempDir tmp("ckpt_mismatch");
  speaker::SpeakerConfig sc;
  sc.d = 8;
  sc.embed = 8;
  sc.attn = 8;
  sc.vocab_size = 12;
  save_speaker(tmp / "s.rxl", speaker::Speaker(sc), speaker::Vocabulary::from_words({"a", "b", "c", "d", "e", "f", "g", "h"}), 0);
  speaker::SpeakerConfig wide = sc;
  wide.d = 16;
  speaker::Speaker other(wide);
  try {
    load_speaker_into(tmp / "s.rxl", other);
    FAIL("expected a shape error");
  } catch (const CheckpointError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("in the file") != std::string::npos);
    CHECK(msg.find("8") != std::string::npos);
    CHECK(msg.find("16") != std::string::npos);
  }
}

TEST_CASE("corrupt checkpoints are rejected") {
  std::istringstream bad_magic(std::string("RXL2") + std::string(8, '\0'));
  CHECK_THROWS_AS(read_checkpoint(bad_magic), CheckpointError);

  speaker::SpeakerConfig sc;
  sc.d = 8;
  sc.embed = 8;
  sc.attn = 8;
  sc.vocab_size = 6;
  const speaker::Speaker sp(sc);
  std::ostringstream os;
  write_checkpoint(os, {"speaker", to_json(sc), {"x", "y"}, 1, 0}, sp.params());
  const std::string full = os.str();
  std::istringstream truncated(full.substr(0, full.size() - 3));
  CHECK_THROWS_AS(read_checkpoint(truncated), CheckpointError);
  std::istringstream trailing(full + "x");
  CHECK_THROWS_AS(read_checkpoint(trailing), CheckpointError);
  std::istringstream ok(full);
  CHECK(read_checkpoint(ok).params.size() == sp.params().size());
}

TEST_CASE("reinforcer checkpoints round trip") {
  TempDir tmp("rf");
  reinforcer::ReinforcerConfig rc;
  rc.d = 8;
  rc.embed = 8;
  rc.hidden = 8;
  rc.attn = 8;
  rc.mlp_hidden = 16;
  rc.vocab_size = 10;
  rc.seed = 9;
  const reinforcer::Reinforcer r(rc);
  save_reinforcer(tmp / "r.rxl", r, speaker::Vocabulary::from_words({"a", "b", "c", "d", "e", "f"}), 3);
  CHECK(load_reinforcer(tmp / "r.rxl").params() == r.params());
  CHECK_THROWS_AS(load_speaker(tmp / "r.rxl"), CheckpointError);
}

TEST_CASE("decodes from a reloaded checkpoint equal the live model on 50 instances") {
  TempDir tmp("decode");
  const data::Dataset ds = small_dataset(4, 16);
  const speaker::Vocabulary vocab = training::build_vocabulary(ds, "train");
  speaker::Speaker live = trained_speaker(ds, vocab, 30);
  save_speaker(tmp / "s.rxl", live, vocab, 30);
  LoadedSpeaker back = load_speaker(tmp / "s.rxl");

  std::size_t n = 0;
  for (const auto& sc : ds.scenes()) {
    for (const auto& o : sc.objects) {
      if (n == 50) break;
      const speaker::Instance inst = speaker::make_instance(sc, o);
      for (auto mode : {speaker::DecodeMode::kGreedy, speaker::DecodeMode::kBeam, speaker::DecodeMode::kSample}) {
        speaker::DecodeOptions opts{mode, 3, 11 + n, 20};
        const auto a = live.decode(inst, opts);
        const auto b = back.speaker.decode(inst, opts);
        CHECK(a.ids == b.ids);
        CHECK(a.logprob == b.logprob);
      }
      ++n;
    }
  }
  CHECK(n == 50);
}

TEST_CASE("annotation service validates, scores and logs responses") {
  TempDir tmp("annot");
  const data::Dataset ds = small_dataset(6);
  ServeConfig cfg;
  cfg.split = "train";
  cfg.record_log = tmp / "records.jsonl";
  cfg.workers_per_task = 2;
  AnnotationService svc(ds, cfg);
  const auto tasks = make_tasks(ds, "train");
  REQUIRE(!tasks.empty());
  const AnnotationTask& t0 = tasks[0];
  const data::Scene& scene = ds.scene(t0.scene_id);
  std::string wrong;
  for (const auto& o : scene.objects) {
    if (o.object_id != t0.target_id) wrong = o.object_id;
  }

  SUBCASE("task payload withholds the target") {
    const Reply r = svc.next_task("w1");
    CHECK(r.status == 200);
    CHECK(r.body["task_id"] == t0.task_id);
    CHECK(r.body["sentence"] == t0.text);
    CHECK(r.body["scene"]["boxes"].size() == scene.objects.size());
    CHECK(r.body.dump().find("target") == std::string::npos);
    CHECK(svc.next_task("").status == 400);
  }

  SUBCASE("elapsed_ms <= 0 and malformed bodies are rejected before the log") {
    for (double ms : {0.0, -5.0}) {
      const Reply r = svc.submit(post_body(t0.task_id, "w1", t0.target_id, ms).dump());
      CHECK(r.status == 400);
      CHECK(r.body["errors"][0]["field"] == "elapsed_ms");
    }
    const Reply missing = svc.submit(R"({"task_id": 3})");
    CHECK(missing.status == 400);
    CHECK(missing.body["errors"].size() == 4);
    CHECK(svc.submit("{not json").status == 400);
    CHECK(svc.submit(post_body("task-nope", "w1", t0.target_id, 10).dump()).status == 400);
    CHECK(svc.submit(post_body(t0.task_id, "w1", "s9999_o1", 10).dump()).status == 400);
    CHECK(svc.records().empty());
    CHECK(read_records(cfg.record_log).empty());
  }

  SUBCASE("correctness is computed by the server and duplicates conflict") {
    const Reply ok = svc.submit(post_body(t0.task_id, "w1", t0.target_id, 812).dump());
    CHECK(ok.status == 201);
    CHECK(ok.body["correct"] == true);
    CHECK(svc.submit(post_body(t0.task_id, "w1", wrong, 300).dump()).status == 409);
    const Reply miss = svc.submit(post_body(t0.task_id, "w2", wrong, 300).dump());
    CHECK(miss.body["correct"] == false);
    const Reply imp = svc.submit(post_body(tasks[1].task_id, "w2", data::kImpossible, 300).dump());
    CHECK(imp.body["correct"] == false);

    const auto logged = read_records(cfg.record_log);
    REQUIRE(logged.size() == 3);
    CHECK(logged[0].correct);
    CHECK(logged[0].elapsed_ms == 812);
    CHECK(logged[0].sentence_id == t0.sentence_id);
    CHECK(logged[2].chosen == data::kImpossible);

    // t0 has its two responses, so w3 moves on; w1 skips what it answered.
    CHECK(svc.next_task("w3").body["task_id"] == tasks[1].task_id);
    CHECK(svc.next_task("w1").body["task_id"] == tasks[1].task_id);
    const Reply p = svc.progress();
    CHECK(p.body["responses"] == 3);
    CHECK(p.body["complete_tasks"] == 1);
    CHECK(p.body["workers"] == 2);
  }

  SUBCASE("a restarted service keeps the log and its duplicate set") {
    CHECK(svc.submit(post_body(t0.task_id, "w1", t0.target_id, 500).dump()).status == 201);
    AnnotationService again(ds, cfg);
    CHECK(again.records().size() == 1);
    CHECK(again.submit(post_body(t0.task_id, "w1", t0.target_id, 500).dump()).status == 409);
    CHECK(again.submit(post_body(t0.task_id, "w4", t0.target_id, 500).dump()).status == 201);
    CHECK(read_records(cfg.record_log).size() == 2);
  }
}

TEST_CASE("ranks rebuilt from the record log equal the offline ranks of the same responses") {
  TempDir tmp("pipeline");
  const data::Dataset ds = quantized(small_dataset(8));
  ServeConfig cfg;
  cfg.split = "train";
  cfg.record_log = tmp / "records.jsonl";
  std::vector<data::SentenceRecord> in_split;
  {
    AnnotationService svc(ds, cfg);
    for (const data::SentenceRecord* s : ds.sentences_in_split("train")) {
      in_split.push_back(*s);
      for (const auto& r : s->responses) {
        const json body = post_body("task-" + s->sentence_id, r.worker_id, r.chosen, std::round(r.elapsed * 1000.0));
        REQUIRE(svc.submit(body.dump()).status == 201);
      }
    }
  }
  const data::Dataset offline(ds.scenes(), in_split, ds.splits());
  const data::Dataset replayed = with_recorded_responses(ds, read_records(cfg.record_log));
  for (bool use_time : {true, false}) {
    std::ostringstream a, b;
    rank::write_rank_file(a, rank::rank_dataset(offline, {use_time}));
    rank::write_rank_file(b, rank::rank_dataset(replayed, {use_time}));
    CHECK(a.str() == b.str());
  }
  REQUIRE(replayed.sentences().size() == in_split.size());
  for (std::size_t i = 0; i < in_split.size(); ++i) CHECK(replayed.sentences()[i].responses == in_split[i].responses);
}

TEST_CASE("HTTP API on localhost") {
  TempDir tmp("http");
  const data::Dataset ds = small_dataset(10);
  fs::create_directories(tmp.path / "static");
  { std::ofstream(tmp / "static/index.html") << "<html>annotate</html>"; }
  ServeConfig cfg;
  cfg.split = "train";
  cfg.record_log = tmp / "records.jsonl";
  AnnotationService svc(ds, cfg);
  httplib::Server server;
  bind_routes(server, svc, tmp / "static");
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  auto task = client.Get("/task?worker_id=alice");
  REQUIRE(task);
  CHECK(task->status == 200);
  const json tj = json::parse(task->body);
  const std::string task_id = tj["task_id"];
  const auto tasks = make_tasks(ds, "train");
  const std::string target = tasks[0].target_id;

  auto bad = client.Post("/response", post_body(task_id, "alice", target, 0).dump(), "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  auto good = client.Post("/response", post_body(task_id, "alice", target, 950).dump(), "application/json");
  REQUIRE(good);
  CHECK(good->status == 201);
  CHECK(json::parse(good->body)["correct"] == true);
  auto dup = client.Post("/response", post_body(task_id, "alice", target, 950).dump(), "application/json");
  REQUIRE(dup);
  CHECK(dup->status == 409);
  auto progress = client.Get("/progress");
  REQUIRE(progress);
  CHECK(json::parse(progress->body)["responses"] == 1);
  auto page = client.Get("/index.html");
  REQUIRE(page);
  CHECK(page->status == 200);
  CHECK(page->body == "<html>annotate</html>");

  server.stop();
  th.join();
  CHECK(read_records(cfg.record_log).size() == 1);
}

TEST_CASE("gen-synth with the same seed writes identical files") {
  TempDir tmp("gen");
  CHECK(cli({"gen-synth", "--seed", "7", "--scenes", "6", "--out", tmp / "a.jsonl"}).code == 0);
  CHECK(cli({"gen-synth", "--seed", "7", "--scenes", "6", "--out", tmp / "b.jsonl"}).code == 0);
  CHECK(cli({"gen-synth", "--seed", "8", "--scenes", "6", "--out", tmp / "c.jsonl"}).code == 0);
  CHECK(slurp(tmp / "a.jsonl") == slurp(tmp / "b.jsonl"));
  CHECK(slurp(tmp / "a.jsonl") != slurp(tmp / "c.jsonl"));
  CHECK(data::load_dataset(tmp / "a.jsonl").scenes().size() == 6);
}

TEST_CASE("train --steps 0 writes the initialization") {
  TempDir tmp("train0");
  const std::string ds = tmp / "ds.jsonl";
  REQUIRE(cli({"gen-synth", "--seed", "2", "--scenes", "8", "--set", "synth.d=8", "--out", ds}).code == 0);
  const std::vector<std::string> common = {"--dataset", ds, "--set", "model.d=8", "--set", "model.embed=8",
                                           "--set", "model.attn=8", "--set", "output_dir=" + (tmp / "o")};
  auto args = std::vector<std::string>{"train", "--steps", "0", "--seed", "3"};
  args.insert(args.end(), common.begin(), common.end());
  const CliRun r = cli(args);
  REQUIRE(r.code == 0);
  const LoadedSpeaker ls = load_speaker(tmp / "o/speaker.rxl");
  CHECK(ls.step == 0);
  speaker::SpeakerConfig sc = ls.speaker.config();
  CHECK(sc.d == 8);
  CHECK(sc.seed == 3);
  CHECK(speaker::Speaker(sc).params() == ls.speaker.params());
}

TEST_CASE("eval with r1-cider equals cider when every rank ties") {
  TempDir tmp("eval");
  const data::Dataset base = small_dataset(12);
  std::vector<data::SentenceRecord> sentences = base.sentences();
  for (auto& s : sentences) {
    for (auto& r : s.responses) {
      r.chosen = s.object_id;
      r.correct = true;
      r.elapsed = 2.0;
    }
  }
  const data::Dataset ds(base.scenes(), sentences, base.splits());
  data::save_dataset(tmp / "ds.jsonl", ds);
  {
    std::ofstream gens(tmp / "gens.jsonl");
    std::size_t k = 0;
    for (const data::SentenceRecord* s : ds.sentences_in_split("test")) {
      if (k++ % 5 != 0) continue;
      const auto& other = ds.sentences()[(k * 7) % ds.sentences().size()];
      gens << json{{"object_id", s->object_id}, {"tokens", k % 2 ? s->tokens : other.tokens}}.dump() << "\n";
    }
  }
  auto run = [&](const std::string& metric, const std::string& variant = "d") {
    const CliRun r = cli({"eval", "--dataset", tmp / "ds.jsonl", "--generations", tmp / "gens.jsonl", "--metric", metric,
                          "--variant", variant});
    REQUIRE(r.code == 0);
    return json::parse(r.out);
  };
  const json plain = run("cider");
  const json r1 = run("r1-cider");
  const json r2 = run("r2-cider");
  CHECK(plain["mean"].get<double>() > 0.0);
  CHECK(plain["mean"] == r1["mean"]);
  CHECK(plain["per_instance"] == r1["per_instance"]);
  CHECK(plain["per_instance"] == r2["per_instance"]);
  CHECK(r1["metric"] == "r1-cider");
  CHECK(run("cider-d")["per_instance"] == plain["per_instance"]);
  const json plain_plain = run("cider", "plain");
  CHECK(plain_plain["mean"] != plain["mean"]);
  CHECK(plain_plain["per_instance"] == run("r1-cider", "plain")["per_instance"]);
}

TEST_CASE("cli failures are machine readable") {
  const CliRun unknown = cli({"frobnicate"});
  CHECK(unknown.code == 2);
  CHECK(json::parse(unknown.err)["error"] == "usage");

  const CliRun flag = cli({"train", "--no-such-flag"});
  CHECK(flag.code == 2);
  CHECK(json::parse(flag.err)["error"] == "usage");

  const CliRun bad = cli({"train", "--set", "bogus=1", "--set", "hp.M1=-2", "--set", "train.batch_size=0"});
  CHECK(bad.code == 2);
  const json e = json::parse(bad.err);
  CHECK(e["error"] == "config");
  CHECK(e["violations"].size() == 3);

  const CliRun missing = cli({"generate", "--checkpoint", "/nonexistent/x.rxl", "--dataset", "/nonexistent/ds.jsonl"});
  CHECK(missing.code == 1);
  CHECK(json::parse(missing.err).contains("message"));

  const CliRun printed = cli({"serve", "--print-config", "--port", "9123"});
  CHECK(printed.code == 0);
  CHECK(printed.out.find("serve.port = 9123") != std::string::npos);
}
