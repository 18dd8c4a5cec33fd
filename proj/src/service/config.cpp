#include "rxl/service/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace rxl::service {

namespace {

std::string join_violations(const std::vector<std::string>& v) {
  std::string msg = "invalid config:";
  for (const auto& s : v) msg += "\n  " + s;
  return msg;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& s) {
  T v{};
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) throw std::invalid_argument("expected a number, got '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "on") return true;
  if (s == "false" || s == "0" || s == "off") return false;
  throw std::invalid_argument("expected true or false, got '" + s + "'");
}

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

struct Field {
  std::string key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

template <class T>
Field num(std::string key, T& ref) {
  return {std::move(key), [&ref] {
            if constexpr (std::is_floating_point_v<T>) return fmt(ref);
            else return std::to_string(ref);
          },
          [&ref](const std::string& s) { ref = parse_number<T>(s); }};
}

Field flag(std::string key, bool& ref) {
  return {std::move(key), [&ref] { return std::string(ref ? "true" : "false"); },
          [&ref](const std::string& s) { ref = parse_bool(s); }};
}

Field str(std::string key, std::string& ref) {
  return {std::move(key), [&ref] { return ref; }, [&ref](const std::string& s) { ref = s; }};
}

template <class E>
Field choice(std::string key, E& ref, std::vector<std::pair<std::string, E>> names) {
  return {std::move(key),
          [&ref, names] {
            for (const auto& [n, e] : names) {
              if (e == ref) return n;
            }
            return std::string("?");
          },
          [&ref, names](const std::string& s) {
            std::string options;
            for (const auto& [n, e] : names) {
              if (n == s) {
                ref = e;
                return;
              }
              options += (options.empty() ? "" : ", ") + n;
            }
            throw std::invalid_argument("expected one of " + options + ", got '" + s + "'");
          }};
}

std::vector<Field> fields(Config& c) {
  using speaker::DecodeMode;
  using training::Baseline;
  using Kind = grad::OptimizerConfig::Kind;
  return {
      str("dataset", c.dataset),
      str("output_dir", c.output_dir),
      str("train_split", c.train_split),
      str("eval_split", c.eval_split),
      num("vocab_min_count", c.vocab_min_count),

      num("synth.num_scenes", c.synth.num_scenes),
      num("synth.grid_rows", c.synth.grid_rows),
      num("synth.grid_cols", c.synth.grid_cols),
      num("synth.local_rows", c.synth.local_rows),
      num("synth.local_cols", c.synth.local_cols),
      num("synth.d", c.synth.d),
      num("synth.min_objects", c.synth.min_objects),
      num("synth.max_objects", c.synth.max_objects),
      num("synth.min_landmarks", c.synth.min_landmarks),
      num("synth.max_landmarks", c.synth.max_landmarks),
      num("synth.distractor_similarity", c.synth.distractor_similarity),
      num("synth.sentences_per_object", c.synth.sentences_per_object),
      num("synth.workers_per_sentence", c.synth.workers_per_sentence),
      num("synth.worker_pool", c.synth.worker_pool),
      num("synth.width", c.synth.width),
      num("synth.height", c.synth.height),
      num("synth.seed", c.synth.seed),

      num("model.d", c.model.d),
      num("model.embed", c.model.embed),
      num("model.attn", c.model.attn),
      num("model.K", c.model.K),
      num("model.sigma_init", c.model.sigma_init),
      num("model.seed", c.model.seed),
      num("model.reinforcer_mlp_hidden", c.reinforcer_mlp_hidden),

      num("hp.lambda_s1", c.hp.lambda_s1),
      num("hp.lambda_s2", c.hp.lambda_s2),
      num("hp.lambda_s3", c.hp.lambda_s3),
      num("hp.lambda_r", c.hp.lambda_r),
      num("hp.M1", c.hp.M1),
      num("hp.M2", c.hp.M2),
      num("hp.M3", c.hp.M3),
      num("hp.pg_samples", c.hp.pg_samples),
      num("hp.pg_max_len", c.hp.pg_max_len),
      choice("hp.baseline", c.hp.baseline, {{"off", Baseline::kOff}, {"moving-average", Baseline::kMovingAverage}}),
      num("hp.baseline_decay", c.hp.baseline_decay),
      flag("hp.all_pairs", c.hp.all_pairs),

      num("train.steps", c.train.steps),
      num("train.epochs", c.train.epochs),
      num("train.batch_size", c.train.batch_size),
      num("train.seed", c.train.seed),
      choice("train.optimizer", c.train.optim.kind, {{"adam", Kind::kAdam}, {"sgd", Kind::kSgd}}),
      num("train.learning_rate", c.train.optim.learning_rate),
      num("train.beta1", c.train.optim.beta1),
      num("train.beta2", c.train.optim.beta2),
      num("train.epsilon", c.train.optim.epsilon),
      num("train.clip_norm", c.train.optim.clip_norm),
      num("train.checkpoint_every", c.train.checkpoint_every),
      flag("train.mmi", c.train.toggles.mmi),
      flag("train.rank", c.train.toggles.rank),
      flag("train.pg", c.train.toggles.pg),

      num("reinforcer.steps", c.reinforcer.steps),
      num("reinforcer.batch_size", c.reinforcer.batch_size),
      num("reinforcer.seed", c.reinforcer.seed),
      num("reinforcer.learning_rate", c.reinforcer.optim.learning_rate),
      num("reinforcer.clip_norm", c.reinforcer.optim.clip_norm),
      flag("reinforcer.rank", c.reinforcer.rank),
      num("reinforcer.pretrain_steps", c.reinforcer.pretrain_steps),
      num("reinforcer.margin", c.reinforcer.margin),
      num("reinforcer.lambda", c.reinforcer.lambda),

      choice("decode.mode", c.decode.mode,
             {{"greedy", DecodeMode::kGreedy}, {"beam", DecodeMode::kBeam}, {"sample", DecodeMode::kSample}}),
      num("decode.beam", c.decode.beam),
      num("decode.seed", c.decode.seed),
      num("decode.max_len", c.decode.max_len),

      str("serve.host", c.serve.host),
      num("serve.port", c.serve.port),
      str("serve.static_dir", c.serve.static_dir),
      str("serve.record_log", c.serve.record_log),
      str("serve.split", c.serve.split),
      num("serve.workers_per_task", c.serve.workers_per_task),
  };
}

Field* find_field(std::vector<Field>& fs, const std::string& key) {
  for (auto& f : fs) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> violations)
    : std::runtime_error(join_violations(violations)), violations_(std::move(violations)) {}

std::vector<std::string> Config::violations() const {
  std::vector<std::string> v;
  auto add = [&v](const std::string& prefix, const std::vector<std::string>& inner) {
    for (const auto& s : inner) v.push_back(prefix + s);
  };
  if (dataset.empty()) v.push_back("dataset must not be empty");
  if (output_dir.empty()) v.push_back("output_dir must not be empty");
  if (train_split.empty() || eval_split.empty()) v.push_back("split names must not be empty");
  if (vocab_min_count == 0) v.push_back("vocab_min_count must be >= 1");
  try {
    synth.validate();
  } catch (const std::exception& e) {
    v.push_back(std::string("synth: ") + e.what());
  }
  if (model.d == 0 || model.embed == 0 || model.attn == 0) v.push_back("model: widths must be >= 1");
  if (model.K == 0) v.push_back("model.K must be >= 1");
  if (!(model.sigma_init > 0.0)) v.push_back("model.sigma_init must be positive");
  if (reinforcer_mlp_hidden == 0) v.push_back("model.reinforcer_mlp_hidden must be >= 1");
  add("hp: ", hp.violations());
  add("train: ", train.violations());
  if (reinforcer.batch_size == 0) v.push_back("reinforcer.batch_size must be >= 1");
  if (!(reinforcer.optim.learning_rate > 0.0)) v.push_back("reinforcer.learning_rate must be positive");
  if (reinforcer.margin < 0.0 || reinforcer.lambda < 0.0) v.push_back("reinforcer: margin and lambda must be >= 0");
  if (decode.beam == 0) v.push_back("decode.beam must be >= 1");
  if (decode.max_len == 0) v.push_back("decode.max_len must be >= 1");
  if (serve.port < 0 || serve.port > 65535) v.push_back("serve.port must be in [0, 65535]");
  if (serve.workers_per_task == 0) v.push_back("serve.workers_per_task must be >= 1");
  return v;
}

void Config::validate() const {
  auto v = violations();
  if (!v.empty()) throw ConfigError(std::move(v));
}

void set_key(Config& c, const std::string& key, const std::string& value) {
  auto fs = fields(c);
  Field* f = find_field(fs, key);
  if (f == nullptr) throw ConfigError({"unknown key '" + key + "'"});
  try {
    f->set(value);
  } catch (const std::invalid_argument& e) {
    throw ConfigError({key + ": " + e.what()});
  }
}

Config parse_config(const std::string& text, Config base) {
  std::vector<std::string> errors;
  std::istringstream in(text);
  std::string line;
  std::size_t no = 0;
  auto fs = fields(base);
  while (std::getline(in, line)) {
    ++no;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(no) + ": expected key = value");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    Field* f = find_field(fs, key);
    if (f == nullptr) {
      errors.push_back("line " + std::to_string(no) + ": unknown key '" + key + "'");
      continue;
    }
    try {
      f->set(trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      errors.push_back("line " + std::to_string(no) + ": " + key + ": " + e.what());
    }
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return base;
}

Config load_config(const std::string& path, Config base) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open config file '" + path + "'"});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string to_text(const Config& c) {
  Config copy = c;
  std::string out;
  for (const auto& f : fields(copy)) out += f.key + " = " + f.get() + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  Config c;
  std::vector<std::string> keys;
  for (const auto& f : fields(c)) keys.push_back(f.key);
  return keys;
}

}  // namespace rxl::service
