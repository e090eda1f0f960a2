/*
 * Copyright 2026 The fairshot Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FAIRSHOT_ERROR_HPP
#define FAIRSHOT_ERROR_HPP

#include <functional>
#include <iostream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fairshot {

/** Base class of every error raised by the library. */
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/** Malformed input file; the message carries the source and line. */
class ParseError : public Error {
 public:
  ParseError(std::string_view source, std::size_t line, std::string_view what)
      : Error(std::string(source) + ":" + std::to_string(line) + ": " +
              std::string(what)),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  DimensionMismatch(std::string_view where, std::size_t expected,
                    std::size_t got)
      : Error(std::string(where) + ": expected dimension " +
              std::to_string(expected) + ", got " + std::to_string(got)) {}
};

using WarningSink = std::function<void(std::string_view)>;

/// Process-wide sink for non-fatal diagnostics. Set to an empty function to
/// silence warnings.
inline WarningSink& warning_sink() {
  static WarningSink sink = [](std::string_view msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return sink;
}

inline void warn(std::string_view msg) {
  if (auto& sink = warning_sink()) sink(msg);
}

}  // namespace fairshot

#endif  // FAIRSHOT_ERROR_HPP
