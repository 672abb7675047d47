#pragma once

#include <stdexcept>
#include <string>

namespace sparselock {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error { using Error::Error; };     // incompatible tensor extents
struct SizeError : Error { using Error::Error; };      // bad buffer length for a codec
struct DomainError : Error { using Error::Error; };    // argument outside contract
struct ScheduleError : Error { using Error::Error; };  // schedule does not cover tensor
struct PackError : Error { using Error::Error; };      // tile exceeds bin capacity etc.
struct LookupError : Error { using Error::Error; };    // unknown tile id in a TMT
struct CodecError : Error { using Error::Error; };     // malformed compressed payload
struct ConfigError : Error { using Error::Error; };    // bad experiment configuration
struct IoError : Error { using Error::Error; };        // file format / filesystem

}  // namespace sparselock
