#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "rxl/data/synth.hpp"
#include "rxl/speaker/speaker.hpp"
#include "rxl/training/trainer.hpp"

namespace rxl::service {

// Carries every problem found, one per entry, so a single run reports them all.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

struct ServeConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string static_dir;  // empty serves no assets
  std::string record_log = "records.jsonl";
  std::string split = "test";
  std::size_t workers_per_task = 5;
};

struct Config {
  std::string dataset = "dataset.jsonl";
  std::string output_dir = "out";
  std::string train_split = "train";
  std::string eval_split = "test";
  std::size_t vocab_min_count = 1;

  data::SynthConfig synth;
  // vocab_size is filled from the vocabulary at run time; the remaining fields are read here.
  speaker::SpeakerConfig model;
  std::size_t reinforcer_mlp_hidden = 64;
  training::HyperParams hp;
  training::TrainConfig train;
  training::ReinforcerTrainConfig reinforcer;
  speaker::DecodeOptions decode{speaker::DecodeMode::kBeam, 3, 1, 20};
  ServeConfig serve;

  // Every problem, including those of the nested sections; empty when valid.
  std::vector<std::string> violations() const;
  void validate() const;
};

// `key = value` lines; `#` starts a comment. Unknown keys and unparsable values are collected
// with their line numbers and thrown together as a ConfigError.
Config parse_config(const std::string& text, Config base = {});
Config load_config(const std::string& path, Config base = {});
// Applies one `key=value` override.
void set_key(Config& c, const std::string& key, const std::string& value);
// Every key with its current value, in a form parse_config accepts.
std::string to_text(const Config& c);
std::vector<std::string> config_keys();

}  // namespace rxl::service
