#pragma once

#include <charconv>
#include <ostream>
#include <string>

namespace posefront {

// Shortest decimal that parses back to the identical double.
inline std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, end);
}

inline void write_double(std::ostream& out, double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  out.write(buf, end - buf);
}

}  // namespace posefront
