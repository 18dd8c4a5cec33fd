#include "rxl/speaker/vocab.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace rxl::speaker {

namespace {
const char* const kReserved[] = {"<pad>", "<bos>", "<eos>", "<unk>"};
}

Vocabulary::Vocabulary() {
  for (const char* r : kReserved) {
    index_.emplace(r, tokens_.size());
    tokens_.push_back(r);
  }
}

Vocabulary Vocabulary::from_words(const std::vector<std::string>& words) {
  Vocabulary v;
  for (const std::string& w : words) {
    if (w.empty()) throw std::invalid_argument("vocabulary: empty token");
    if (!v.index_.emplace(w, v.tokens_.size()).second) {
      throw std::invalid_argument("vocabulary: duplicate token '" + w + "'");
    }
    v.tokens_.push_back(w);
  }
  return v;
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& corpus, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& sentence : corpus) {
    for (const std::string& w : sentence) ++counts[w];
  }
  std::vector<std::string> words;
  for (const auto& [w, c] : counts) {
    if (c < min_count || w.empty()) continue;
    if (std::find(std::begin(kReserved), std::end(kReserved), w) != std::end(kReserved)) continue;
    words.push_back(w);
  }
  return from_words(words);
}

std::size_t Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(std::size_t id) const {
  if (id >= tokens_.size()) throw std::out_of_range("vocabulary: id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

std::vector<std::size_t> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size() + 1);
  for (const std::string& t : tokens) ids.push_back(id(t));
  if (ids.empty() || ids.back() != kEos) ids.push_back(kEos);
  return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<std::size_t>& ids) const {
  std::vector<std::string> out;
  for (std::size_t i : ids) {
    if (i == kEos) break;
    if (i == kPad || i == kBos) continue;
    out.push_back(token(i));
  }
  return out;
}

std::vector<std::string> Vocabulary::words() const {
  return std::vector<std::string>(tokens_.begin() + 4, tokens_.end());
}

}  // namespace rxl::speaker
