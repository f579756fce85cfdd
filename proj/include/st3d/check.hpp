#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace st3d {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Config parsing / validation failures; the CLI maps these to exit code 1.
struct ConfigError : Error {
  using Error::Error;
};

inline std::string shape_str(const std::vector<int64_t>& shape) {
  std::string s = "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  s += ")";
  return s;
}

}  // namespace st3d

#define ST3D_CHECK(cond, msg)                  \
  do {                                         \
    if (!(cond)) {                             \
      std::ostringstream oss_;                 \
      oss_ << msg;                             \
      throw ::st3d::Error(oss_.str());         \
    }                                          \
  } while (0)

#define ST3D_CONFIG_CHECK(cond, msg)           \
  do {                                         \
    if (!(cond)) {                             \
      std::ostringstream oss_;                 \
      oss_ << msg;                             \
      throw ::st3d::ConfigError(oss_.str());   \
    }                                          \
  } while (0)
