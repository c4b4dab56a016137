#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace opdlab {

using PromptId = std::int32_t;
using Token = std::int32_t;
using AnswerPath = std::vector<Token>;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: bad config values, unknown ids, unparsable files.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A world or policy too large to enumerate exactly.
class EnumerationError : public Error {
 public:
  using Error::Error;
};

/// Training produced non-finite or exploding logits.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

inline constexpr std::size_t kMaxEnumerablePaths = 4096;

}  // namespace opdlab
