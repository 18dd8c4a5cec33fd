#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "rxl/reinforcer/reinforcer.hpp"
#include "rxl/speaker/speaker.hpp"

namespace rxl::service {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kCheckpointMagic[4] = {'R', 'X', 'L', '1'};
inline constexpr int kCheckpointVersion = 1;

// File layout: "RXL1", uint64 LE header length, UTF-8 JSON header, then one float64 LE buffer per
// parameter in the order the header lists them.
struct CheckpointMeta {
  std::string kind;        // "speaker" or "reinforcer"
  nlohmann::json model;    // dims of the model config
  std::vector<std::string> vocab;  // non-reserved words in id order
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
};

struct LoadedCheckpoint {
  CheckpointMeta meta;
  std::vector<std::pair<std::string, grad::Tensor>> params;
};

void write_checkpoint(std::ostream& out, const CheckpointMeta& meta, const grad::ParameterSet& params);
LoadedCheckpoint read_checkpoint(std::istream& in);

// Copies values into `params`. Names and order must match; a shape mismatch names both shapes.
void assign_parameters(grad::ParameterSet& params, const LoadedCheckpoint& ckpt);

nlohmann::json to_json(const speaker::SpeakerConfig& c);
speaker::SpeakerConfig speaker_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const reinforcer::ReinforcerConfig& c);
reinforcer::ReinforcerConfig reinforcer_config_from_json(const nlohmann::json& j);

void save_speaker(const std::filesystem::path& path, const speaker::Speaker& sp, const speaker::Vocabulary& vocab,
                  std::uint64_t step);
struct LoadedSpeaker {
  speaker::Speaker speaker;
  speaker::Vocabulary vocab;
  std::uint64_t step = 0;
};
// Model rebuilt from the dims in the file.
LoadedSpeaker load_speaker(const std::filesystem::path& path);
// Values loaded into an existing model, whose dims must match the file.
void load_speaker_into(const std::filesystem::path& path, speaker::Speaker& sp);

void save_reinforcer(const std::filesystem::path& path, const reinforcer::Reinforcer& r,
                     const speaker::Vocabulary& vocab, std::uint64_t step);
reinforcer::Reinforcer load_reinforcer(const std::filesystem::path& path);

}  // namespace rxl::service
