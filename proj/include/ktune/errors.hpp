// Copyright 2026 The ktune Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef KTUNE_ERRORS_HPP
#define KTUNE_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ktune {

// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

// A configuration or feature vector does not belong to the space/model it was handed to.
class MismatchError : public Error {
 public:
  using Error::Error;
};

class SpecError : public Error {
 public:
  using Error::Error;
};

// Malformed input file. line() is 1-based, 0 when the error is not tied to a line.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// The runner itself failed (command missing, garbage output). Not the same as an invalid config.
class RunnerError : public Error {
 public:
  using Error::Error;
};

class InvalidConfigurationError : public Error {
 public:
  using Error::Error;
};

class EmptyTrainingSetError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t epoch)
      : Error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t epoch_;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

class LoadError : public Error {
 public:
  using Error::Error;
};

class EmptySpaceError : public Error {
 public:
  using Error::Error;
};

}  // namespace ktune

#endif  // KTUNE_ERRORS_HPP
