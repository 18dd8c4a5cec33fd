#include "rxl/data/jsonl.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace rxl::data {

std::string format_double(double v) {
  if (!std::isfinite(v)) throw std::invalid_argument("cannot serialize a non-finite number");
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  std::string s(buf, res.ptr);
  // Keep the value a JSON float so integral doubles do not reload as integers.
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

std::string quote(std::string_view s) { return nlohmann::json(std::string(s)).dump(); }

void JsonLine::key(std::string_view k) {
  if (!first_) buf_ += ',';
  first_ = false;
  buf_ += quote(k);
  buf_ += ':';
}

JsonLine& JsonLine::field(std::string_view k, std::string_view value) {
  key(k);
  buf_ += quote(value);
  return *this;
}

JsonLine& JsonLine::field(std::string_view k, std::int64_t value) {
  key(k);
  buf_ += std::to_string(value);
  return *this;
}

JsonLine& JsonLine::field(std::string_view k, bool value) {
  key(k);
  buf_ += value ? "true" : "false";
  return *this;
}

JsonLine& JsonLine::field(std::string_view k, double value) {
  key(k);
  buf_ += format_double(value);
  return *this;
}

JsonLine& JsonLine::field(std::string_view k, std::span<const double> values) {
  key(k);
  buf_ += '[';
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) buf_ += ',';
    buf_ += format_double(values[i]);
  }
  buf_ += ']';
  return *this;
}

JsonLine& JsonLine::field(std::string_view k, const std::vector<std::string>& values) {
  key(k);
  buf_ += '[';
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) buf_ += ',';
    buf_ += quote(values[i]);
  }
  buf_ += ']';
  return *this;
}

JsonLine& JsonLine::raw(std::string_view k, std::string_view json) {
  key(k);
  buf_ += json;
  return *this;
}

}  // namespace rxl::data
