#include "rxl/service/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace rxl::service {

using nlohmann::json;

namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in, const char* what) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw CheckpointError(std::string("checkpoint: truncated ") + what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

json shape_json(const grad::Shape& s) {
  json a = json::array();
  for (std::size_t i = 0; i < s.rank(); ++i) a.push_back(s[i]);
  return a;
}

grad::Shape shape_from_json(const json& a) {
  if (!a.is_array() || a.empty() || a.size() > grad::Shape::kMaxRank) {
    throw CheckpointError("checkpoint: bad shape " + a.dump());
  }
  std::vector<std::size_t> d = a.get<std::vector<std::size_t>>();
  switch (d.size()) {
    case 1: return grad::Shape{d[0]};
    case 2: return grad::Shape{d[0], d[1]};
    case 3: return grad::Shape{d[0], d[1], d[2]};
    default: return grad::Shape{d[0], d[1], d[2], d[3]};
  }
}

std::vector<std::string> vocab_words(const speaker::Vocabulary& v) { return v.words(); }

void write_file(const std::filesystem::path& path, const CheckpointMeta& meta, const grad::ParameterSet& params) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("checkpoint: cannot write " + path.string());
  write_checkpoint(out, meta, params);
  if (!out) throw CheckpointError("checkpoint: write failed for " + path.string());
}

LoadedCheckpoint read_file(const std::filesystem::path& path, const std::string& kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
  LoadedCheckpoint c = read_checkpoint(in);
  if (c.meta.kind != kind) {
    throw CheckpointError("checkpoint: " + path.string() + " holds a " + c.meta.kind + ", expected a " + kind);
  }
  return c;
}

}  // namespace

void write_checkpoint(std::ostream& out, const CheckpointMeta& meta, const grad::ParameterSet& params) {
  json listed = json::array();
  for (const auto& p : params) listed.push_back({{"name", p.name()}, {"shape", shape_json(p.value().shape())}});
  const json header{{"version", kCheckpointVersion}, {"kind", meta.kind}, {"model", meta.model},
                    {"vocab", meta.vocab},           {"seed", meta.seed}, {"step", meta.step},
                    {"params", listed}};
  const std::string text = header.dump();
  out.write(kCheckpointMagic, 4);
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : params) {
    const grad::Tensor& t = p.value();
    for (std::size_t i = 0; i < t.size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(t.data()[i]));
  }
}

LoadedCheckpoint read_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw CheckpointError("checkpoint: missing RXL1 magic");
  }
  const std::uint64_t len = get_u64(in, "header length");
  if (len > (std::uint64_t{1} << 30)) throw CheckpointError("checkpoint: header length " + std::to_string(len) + " is implausible");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw CheckpointError("checkpoint: truncated header");
  json h;
  try {
    h = json::parse(text);
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint: header is not JSON: ") + e.what());
  }
  LoadedCheckpoint c;
  try {
    if (h.at("version").get<int>() != kCheckpointVersion) {
      throw CheckpointError("checkpoint: unsupported version " + h.at("version").dump());
    }
    c.meta.kind = h.at("kind").get<std::string>();
    c.meta.model = h.at("model");
    c.meta.vocab = h.at("vocab").get<std::vector<std::string>>();
    c.meta.seed = h.at("seed").get<std::uint64_t>();
    c.meta.step = h.at("step").get<std::uint64_t>();
    for (const auto& p : h.at("params")) {
      grad::Tensor t(shape_from_json(p.at("shape")));
      for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = std::bit_cast<double>(get_u64(in, "parameter data"));
      c.params.emplace_back(p.at("name").get<std::string>(), std::move(t));
    }
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint: bad header: ") + e.what());
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError("checkpoint: trailing bytes after parameters");
  return c;
}

void assign_parameters(grad::ParameterSet& params, const LoadedCheckpoint& ckpt) {
  if (ckpt.params.size() != params.size()) {
    throw CheckpointError("checkpoint: file has " + std::to_string(ckpt.params.size()) + " parameters, model has " +
                          std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, value] = ckpt.params[i];
    if (name != params[i].name()) {
      throw CheckpointError("checkpoint: parameter " + std::to_string(i) + " is '" + name + "' in the file but '" +
                            params[i].name() + "' in the model");
    }
    if (value.shape() != params[i].value().shape()) {
      throw CheckpointError("checkpoint: parameter '" + name + "' has shape " + value.shape().str() +
                            " in the file but " + params[i].value().shape().str() + " in the model");
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i].value() = ckpt.params[i].second;
}

json to_json(const speaker::SpeakerConfig& c) {
  return {{"d", c.d}, {"embed", c.embed}, {"attn", c.attn}, {"K", c.K},
          {"vocab_size", c.vocab_size}, {"sigma_init", c.sigma_init}, {"seed", c.seed}};
}

speaker::SpeakerConfig speaker_config_from_json(const json& j) {
  speaker::SpeakerConfig c;
  c.d = j.at("d").get<std::size_t>();
  c.embed = j.at("embed").get<std::size_t>();
  c.attn = j.at("attn").get<std::size_t>();
  c.K = j.at("K").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.sigma_init = j.at("sigma_init").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

json to_json(const reinforcer::ReinforcerConfig& c) {
  return {{"d", c.d}, {"embed", c.embed}, {"hidden", c.hidden}, {"attn", c.attn}, {"mlp_hidden", c.mlp_hidden},
          {"K", c.K}, {"vocab_size", c.vocab_size}, {"sigma_init", c.sigma_init}, {"seed", c.seed}};
}

reinforcer::ReinforcerConfig reinforcer_config_from_json(const json& j) {
  reinforcer::ReinforcerConfig c;
  c.d = j.at("d").get<std::size_t>();
  c.embed = j.at("embed").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.attn = j.at("attn").get<std::size_t>();
  c.mlp_hidden = j.at("mlp_hidden").get<std::size_t>();
  c.K = j.at("K").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.sigma_init = j.at("sigma_init").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

void save_speaker(const std::filesystem::path& path, const speaker::Speaker& sp, const speaker::Vocabulary& vocab,
                  std::uint64_t step) {
  write_file(path, {"speaker", to_json(sp.config()), vocab_words(vocab), sp.config().seed, step}, sp.params());
}

LoadedSpeaker load_speaker(const std::filesystem::path& path) {
  LoadedCheckpoint c = read_file(path, "speaker");
  speaker::SpeakerConfig cfg;
  try {
    cfg = speaker_config_from_json(c.meta.model);
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint: bad speaker dims: ") + e.what());
  }
  LoadedSpeaker out{speaker::Speaker(cfg), speaker::Vocabulary::from_words(c.meta.vocab), c.meta.step};
  if (out.vocab.size() != cfg.vocab_size) {
    throw CheckpointError("checkpoint: vocabulary has " + std::to_string(out.vocab.size()) + " ids, model expects " +
                          std::to_string(cfg.vocab_size));
  }
  assign_parameters(out.speaker.params(), c);
  return out;
}

void load_speaker_into(const std::filesystem::path& path, speaker::Speaker& sp) {
  assign_parameters(sp.params(), read_file(path, "speaker"));
}

void save_reinforcer(const std::filesystem::path& path, const reinforcer::Reinforcer& r,
                     const speaker::Vocabulary& vocab, std::uint64_t step) {
  write_file(path, {"reinforcer", to_json(r.config()), vocab_words(vocab), r.config().seed, step}, r.params());
}

reinforcer::Reinforcer load_reinforcer(const std::filesystem::path& path) {
  LoadedCheckpoint c = read_file(path, "reinforcer");
  reinforcer::ReinforcerConfig cfg;
  try {
    cfg = reinforcer_config_from_json(c.meta.model);
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint: bad reinforcer dims: ") + e.what());
  }
  reinforcer::Reinforcer r(cfg);
  assign_parameters(r.params(), c);
  return r;
}

}  // namespace rxl::service
