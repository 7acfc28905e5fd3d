#pragma once

#include <stdexcept>
#include <string>

namespace secdfl {

enum class Errc {
  ShapeMismatch,
  InvalidArgument,
  NonFinite,
  MissingData,
  Refused,
  Io,
};

class Error : public std::runtime_error {
public:
  Error(Errc code, std::string msg)
      : std::runtime_error(std::move(msg)), code_(code) {}
  Errc code() const noexcept { return code_; }

private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) {
  throw Error(code, msg);
}

inline void require(bool cond, Errc code, const std::string& msg) {
  if (!cond) fail(code, msg);
}

inline const char* errc_name(Errc code) {
  switch (code) {
    case Errc::ShapeMismatch: return "shape_mismatch";
    case Errc::InvalidArgument: return "invalid_argument";
    case Errc::NonFinite: return "non_finite";
    case Errc::MissingData: return "missing_data";
    case Errc::Refused: return "refused";
    case Errc::Io: return "io";
  }
  return "unknown";
}

}  // namespace secdfl
