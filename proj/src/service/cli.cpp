#include "rxl/service/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "rxl/data/dataset_io.hpp"
#include "rxl/service/annotation.hpp"
#include "rxl/service/checkpoint.hpp"
#include "rxl/service/config.hpp"

namespace rxl::service {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  bool print_config = false;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config_path, "key = value config file");
  cmd->add_option("--set", a.sets, "override one key, KEY=VALUE (repeatable)");
  cmd->add_flag("--print-config", a.print_config, "print the effective config and exit");
}

Config resolve(const CommonArgs& a, const std::function<void(Config&)>& flags) {
  Config c;
  if (!a.config_path.empty()) c = load_config(a.config_path);
  std::vector<std::string> errors;
  for (const auto& kv : a.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      errors.push_back("--set '" + kv + "': expected KEY=VALUE");
      continue;
    }
    try {
      set_key(c, kv.substr(0, eq), kv.substr(eq + 1));
    } catch (const ConfigError& e) {
      for (const auto& v : e.violations()) errors.push_back(v);
    }
  }
  flags(c);
  for (const auto& v : c.violations()) errors.push_back(v);
  if (!errors.empty()) throw ConfigError(errors);
  return c;
}

fs::path out_path(const Config& c, const std::string& given, const std::string& name) {
  return given.empty() ? fs::path(c.output_dir) / name : fs::path(given);
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::ofstream open_out(const fs::path& p) {
  ensure_parent(p);
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

void write_json_file(const fs::path& p, const std::string& text) {
  auto out = open_out(p);
  out << text << "\n";
}

reinforcer::ReinforcerConfig reinforcer_config(const Config& c, std::size_t vocab_size) {
  reinforcer::ReinforcerConfig rc;
  rc.d = c.model.d;
  rc.embed = c.model.embed;
  rc.hidden = c.model.d;
  rc.attn = c.model.attn;
  rc.mlp_hidden = c.reinforcer_mlp_hidden;
  rc.K = c.model.K;
  rc.vocab_size = vocab_size;
  rc.sigma_init = c.model.sigma_init;
  rc.seed = c.model.seed;
  return rc;
}

int cmd_gen_synth(const Config& c, const std::string& out_arg, std::ostream& out) {
  const fs::path p = out_arg.empty() ? fs::path(c.dataset) : fs::path(out_arg);
  ensure_parent(p);
  const data::Dataset ds = data::generate_synthetic(c.synth);
  data::save_dataset(p, ds);
  out << ordered_json{{"dataset", p.string()}, {"scenes", ds.scenes().size()}, {"sentences", ds.sentences().size()}}
             .dump()
      << "\n";
  return 0;
}

int cmd_train(const Config& c, std::optional<std::size_t> steps, const std::string& out_arg,
              const std::string& reinforcer_arg, std::ostream& out) {
  const data::Dataset ds = data::load_dataset(c.dataset);
  const speaker::Vocabulary vocab = training::build_vocabulary(ds, c.train_split, c.vocab_min_count);
  const training::Corpus corpus = training::build_corpus(ds, c.train_split, vocab, c.model.K);
  speaker::SpeakerConfig sc = c.model;
  sc.vocab_size = vocab.size();
  speaker::Speaker sp(sc);

  training::SpeakerTrainer trainer(corpus, sp, c.hp, c.train);
  const std::size_t total = steps ? *steps : c.train.total_steps(trainer.example_count());
  const bool pg = total > 0 && c.train.toggles.pg && c.hp.lambda_r != 0.0;
  std::optional<reinforcer::Reinforcer> rf;
  fs::create_directories(c.output_dir);
  if (pg) {
    if (!reinforcer_arg.empty()) {
      rf.emplace(load_reinforcer(reinforcer_arg));
      if (rf->config().vocab_size != vocab.size()) {
        throw CheckpointError("reinforcer vocabulary size " + std::to_string(rf->config().vocab_size) +
                              " does not match " + std::to_string(vocab.size()));
      }
    } else {
      rf.emplace(reinforcer_config(c, vocab.size()));
      std::ofstream rlog(fs::path(c.output_dir) / "reinforcer_log.jsonl");
      training::train_reinforcer(corpus, *rf, c.reinforcer, &rlog);
      save_reinforcer(fs::path(c.output_dir) / "reinforcer.rxl", *rf, vocab, c.reinforcer.steps);
    }
    trainer.set_reward(training::reinforcer_reward(*rf));
  }

  const fs::path ckpt = out_path(c, out_arg, "speaker.rxl");
  std::ofstream log(fs::path(c.output_dir) / "train_log.jsonl");
  trainer.run(total, &log, [&](std::size_t step) {
    save_speaker(fs::path(c.output_dir) / ("speaker-step" + std::to_string(step) + ".rxl"), sp, vocab, step);
  });
  save_speaker(ckpt, sp, vocab, trainer.steps_done());
  out << ordered_json{{"checkpoint", ckpt.string()}, {"steps", trainer.steps_done()}, {"vocab_size", vocab.size()},
                      {"sentences", corpus.sentence_count}}
             .dump()
      << "\n";
  return 0;
}

int cmd_generate(const Config& c, const std::string& ckpt, const std::string& out_arg, bool trace, std::ostream& out) {
  const data::Dataset ds = data::load_dataset(c.dataset);
  LoadedSpeaker ls = load_speaker(ckpt);
  const training::Corpus corpus = training::build_corpus(ds, c.eval_split, ls.vocab, ls.speaker.config().K);
  const fs::path p = out_path(c, out_arg, "generations.jsonl");
  auto f = open_out(p);
  std::size_t n = 0;
  for (std::size_t i : corpus.described()) {
    const auto& item = corpus.items[i];
    const speaker::DecodeResult d = ls.speaker.decode(item.instance, c.decode);
    ordered_json j{{"object_id", item.object_id}, {"tokens", ls.vocab.decode(d.ids)}, {"logprob", d.logprob},
                   {"finished", d.finished}};
    if (trace) j["trace"] = json::parse(speaker::trace_json(d, ls.vocab));
    f << j.dump() << "\n";
    ++n;
  }
  out << ordered_json{{"generations", p.string()}, {"count", n}}.dump() << "\n";
  return 0;
}

std::vector<training::Generation> read_generations(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::vector<training::Generation> gens;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    gens.push_back({j.at("object_id").get<std::string>(), j.at("tokens").get<std::vector<std::string>>()});
  }
  return gens;
}

int cmd_comprehend(const Config& c, const std::string& ckpt, const std::string& rf_ckpt, const std::string& out_arg,
                   std::ostream& out) {
  const data::Dataset ds = data::load_dataset(c.dataset);
  training::ComprehensionResult r;
  std::string scorer;
  if (!rf_ckpt.empty()) {
    reinforcer::Reinforcer rf = load_reinforcer(rf_ckpt);
    std::ifstream in(rf_ckpt, std::ios::binary);
    const speaker::Vocabulary vocab = speaker::Vocabulary::from_words(read_checkpoint(in).meta.vocab);
    const training::Corpus corpus = training::build_corpus(ds, c.eval_split, vocab, rf.config().K);
    r = training::reinforcer_comprehension(corpus, rf);
    scorer = "reinforcer";
  } else {
    LoadedSpeaker ls = load_speaker(ckpt);
    const training::Corpus corpus = training::build_corpus(ds, c.eval_split, ls.vocab, ls.speaker.config().K);
    r = training::speaker_comprehension(corpus, ls.speaker);
    scorer = "speaker";
  }
  const fs::path p = out_path(c, out_arg, "comprehension.json");
  write_json_file(p, ordered_json{{"scorer", scorer}, {"split", c.eval_split}, {"accuracy", r.accuracy},
                                  {"count", r.count}, {"predictions", r.predictions}}
                         .dump());
  out << ordered_json{{"scorer", scorer}, {"accuracy", r.accuracy}, {"count", r.count}}.dump() << "\n";
  return 0;
}

int cmd_rank_build(const Config& c, const std::string& records, bool accuracy_only, const std::string& out_arg,
                   std::ostream& out) {
  data::Dataset ds = data::load_dataset(c.dataset);
  if (!records.empty()) ds = with_recorded_responses(ds, read_records(records));
  rank::RankOptions opts;
  opts.use_time = !accuracy_only;
  const auto ranks = rank::rank_dataset(ds, opts);
  const fs::path p = out_path(c, out_arg, "ranks.json");
  auto f = open_out(p);
  rank::write_rank_file(f, ranks);
  out << ordered_json{{"ranks", p.string()}, {"objects", ranks.size()}}.dump() << "\n";
  return 0;
}

int cmd_eval(const Config& c, const std::string& gens_path, const std::string& metric_name, const std::string& variant,
             const std::string& out_arg, std::ostream& out) {
  const auto metric = metrics::parse_metric(metric_name);
  if (!metric) throw ConfigError({"--metric: unknown metric '" + metric_name + "'"});
  const metrics::CiderVariant v = variant == "plain" ? metrics::CiderVariant::kPlain : metrics::CiderVariant::kD;
  const data::Dataset ds = data::load_dataset(c.dataset);
  const speaker::Vocabulary vocab = training::build_vocabulary(ds, c.eval_split, 1);
  const training::Corpus corpus = training::build_corpus(ds, c.eval_split, vocab, c.model.K);
  const fs::path g = gens_path.empty() ? fs::path(c.output_dir) / "generations.jsonl" : fs::path(gens_path);
  const metrics::ScoreReport report = training::score_generations(corpus, read_generations(g), *metric, v);
  const std::string text = report.to_json();
  if (!out_arg.empty()) write_json_file(out_arg, text);
  out << text << "\n";
  return 0;
}

int cmd_serve(const Config& c) {
  const data::Dataset ds = data::load_dataset(c.dataset);
  serve(ds, c.serve);
  return 0;
}

void fail(std::ostream& err, const std::string& kind, const std::string& message,
          const std::vector<std::string>& violations = {}) {
  ordered_json j{{"error", kind}, {"message", message}};
  if (!violations.empty()) j["violations"] = violations;
  err << j.dump() << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"rxl: referring-expression lab"};
  app.require_subcommand(1);
  CommonArgs common;

  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> scenes, steps;
  std::optional<int> port;
  std::string out_arg, dataset, checkpoint, reinforcer_ckpt, generations, split, records, metric = "cider-d", variant = "d", static_dir;
  bool trace = false, accuracy_only = false;

  auto* gen = app.add_subcommand("gen-synth", "write a seeded synthetic dataset");
  gen->add_option("--seed", seed, "synth.seed");
  gen->add_option("--scenes", scenes, "synth.num_scenes");
  gen->add_option("--out", out_arg, "dataset path (default: dataset key)");

  auto* train = app.add_subcommand("train", "train a speaker (and its reinforcer when the reward term is on)");
  train->add_option("--steps", steps, "exact number of updates; overrides epochs");
  train->add_option("--seed", seed, "model.seed and train.seed");
  train->add_option("--reinforcer", reinforcer_ckpt, "use a trained reinforcer checkpoint as the reward");
  train->add_option("--out", out_arg, "checkpoint path (default: <output_dir>/speaker.rxl)");

  auto* generate = app.add_subcommand("generate", "decode one sentence per described object");
  generate->add_option("--checkpoint", checkpoint, "speaker checkpoint")->required();
  generate->add_option("--out", out_arg, "JSON lines (default: <output_dir>/generations.jsonl)");
  generate->add_flag("--trace", trace, "include per-step attention masses");

  auto* comprehend = app.add_subcommand("comprehend", "argmax comprehension over each sentence's scene");
  auto* ck = comprehend->add_option("--checkpoint", checkpoint, "speaker checkpoint");
  comprehend->add_option("--reinforcer", reinforcer_ckpt, "score with a reinforcer checkpoint instead")->excludes(ck);
  comprehend->add_option("--out", out_arg, "report path (default: <output_dir>/comprehension.json)");

  auto* rank_build = app.add_subcommand("rank-build", "rank validated sentences per object");
  rank_build->add_option("--records", records, "record log from the annotation service");
  rank_build->add_flag("--accuracy-only", accuracy_only, "skip the timing tie-break");
  rank_build->add_option("--out", out_arg, "rank file (default: <output_dir>/ranks.json)");

  auto* eval = app.add_subcommand("eval", "score generations against the split's references");
  eval->add_option("--generations", generations, "JSON lines from generate (default: <output_dir>/generations.jsonl)");
  eval->add_option("--metric", metric, "cider, cider-d, r1-cider or r2-cider");
  eval->add_option("--variant", variant, "consensus variant for cider and r-cider")->check(CLI::IsMember({"d", "plain"}));
  eval->add_option("--out", out_arg, "also write the report here");

  auto* srv = app.add_subcommand("serve", "annotation HTTP API");
  srv->add_option("--port", port, "serve.port");
  srv->add_option("--records", records, "serve.record_log");
  srv->add_option("--static", static_dir, "serve.static_dir");

  for (auto* cmd : {gen, train, generate, comprehend, rank_build, eval, srv}) {
    add_common(cmd, common);
    cmd->add_option("--dataset", dataset, "dataset path");
    cmd->add_option("--split", split, "eval_split (serve.split for serve)");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    fail(err, "usage", e.what());
    return 2;
  }
  CLI::App* cmd = app.get_subcommands().front();

  try {
    const Config c = resolve(common, [&](Config& cfg) {
      if (!dataset.empty()) cfg.dataset = dataset;
      if (!split.empty()) (cmd == srv ? cfg.serve.split : cfg.eval_split) = split;
      if (seed && cmd == gen) cfg.synth.seed = *seed;
      if (seed && cmd == train) cfg.model.seed = cfg.train.seed = cfg.reinforcer.seed = *seed;
      if (scenes) cfg.synth.num_scenes = *scenes;
      if (port) cfg.serve.port = *port;
      if (cmd == srv && !records.empty()) cfg.serve.record_log = records;
      if (!static_dir.empty()) cfg.serve.static_dir = static_dir;
    });
    if (common.print_config) {
      out << to_text(c);
      return 0;
    }
    if (cmd == gen) return cmd_gen_synth(c, out_arg, out);
    if (cmd == train) return cmd_train(c, steps, out_arg, reinforcer_ckpt, out);
    if (cmd == generate) return cmd_generate(c, checkpoint, out_arg, trace, out);
    if (cmd == comprehend) {
      if (checkpoint.empty() && reinforcer_ckpt.empty()) {
        fail(err, "usage", "comprehend needs --checkpoint or --reinforcer");
        return 2;
      }
      return cmd_comprehend(c, checkpoint, reinforcer_ckpt, out_arg, out);
    }
    if (cmd == rank_build) return cmd_rank_build(c, records, accuracy_only, out_arg, out);
    if (cmd == eval) return cmd_eval(c, generations, metric, variant, out_arg, out);
    return cmd_serve(c);
  } catch (const ConfigError& e) {
    fail(err, "config", "invalid configuration", e.violations());
    return 2;
  } catch (const CheckpointError& e) {
    fail(err, "checkpoint", e.what());
    return 1;
  } catch (const std::exception& e) {
    fail(err, "runtime", e.what());
    return 1;
  }
}

}  // namespace rxl::service
