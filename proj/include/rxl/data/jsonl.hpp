#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rxl::data {

inline constexpr int kSchemaVersion = 1;

// Shortest form of `%.17g`: 17 significant digits, locale independent.
std::string format_double(double v);

// Builds one JSON object on a single line with fields in insertion order.
class JsonLine {
 public:
  JsonLine& field(std::string_view key, std::string_view value);
  JsonLine& field(std::string_view key, const char* value) { return field(key, std::string_view(value)); }
  JsonLine& field(std::string_view key, std::int64_t value);
  JsonLine& field(std::string_view key, int value) { return field(key, static_cast<std::int64_t>(value)); }
  JsonLine& field(std::string_view key, std::size_t value) {
    return field(key, static_cast<std::int64_t>(value));
  }
  JsonLine& field(std::string_view key, bool value);
  JsonLine& field(std::string_view key, double value);
  JsonLine& field(std::string_view key, std::span<const double> values);
  JsonLine& field(std::string_view key, const std::vector<std::string>& values);
  // Inserts pre-rendered JSON text verbatim.
  JsonLine& raw(std::string_view key, std::string_view json);

  std::string str() const { return buf_ + "}"; }

 private:
  void key(std::string_view k);
  std::string buf_ = "{";
  bool first_ = true;
};

std::string quote(std::string_view s);

}  // namespace rxl::data
