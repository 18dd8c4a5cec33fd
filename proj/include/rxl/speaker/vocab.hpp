#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

namespace rxl::speaker {

inline constexpr std::size_t kPad = 0;
inline constexpr std::size_t kBos = 1;
inline constexpr std::size_t kEos = 2;
inline constexpr std::size_t kUnk = 3;
// Decoders emit ids >= kFirstOutput; output index j is token id j + kFirstOutput.
inline constexpr std::size_t kFirstOutput = kEos;

class Vocabulary {
 public:
  Vocabulary();
  // Words sorted lexicographically; words seen fewer than min_count times map to UNK.
  static Vocabulary build(const std::vector<std::vector<std::string>>& corpus, std::size_t min_count = 1);
  static Vocabulary from_words(const std::vector<std::string>& words);

  std::size_t size() const { return tokens_.size(); }
  // Size of the output softmax: EOS, UNK and every word.
  std::size_t output_size() const { return tokens_.size() - kFirstOutput; }
  std::size_t id(const std::string& token) const;
  const std::string& token(std::size_t id) const;
  bool contains(const std::string& token) const { return index_.count(token) != 0; }

  // Token ids, with EOS appended unless already last.
  std::vector<std::size_t> encode(const std::vector<std::string>& tokens) const;
  // Words up to (excluding) EOS; reserved ids other than UNK are skipped.
  std::vector<std::string> decode(const std::vector<std::size_t>& ids) const;

  // Non-reserved tokens in id order.
  std::vector<std::string> words() const;
  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace rxl::speaker
