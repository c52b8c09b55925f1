// Copyright 2026 The kanon-ols Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef KANON_ERRORS_H_
#define KANON_ERRORS_H_

#include <stdexcept>
#include <string>
#include <vector>

namespace kanon {

// Base for every data-dependent failure raised by the library. The CLI maps
// these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class ConsistencyError : public Error {
 public:
  using Error::Error;
};

// Raised by the Reject release policy. Carries the printable form of every
// class key whose count is below the threshold.
class KAnonymityError : public Error {
 public:
  KAnonymityError(const std::string& what, std::vector<std::string> offending)
      : Error(what), offending_(std::move(offending)) {}
  const std::vector<std::string>& offending() const { return offending_; }

 private:
  std::vector<std::string> offending_;
};

class StaleTssError : public Error {
 public:
  using Error::Error;
};

class DesignError : public Error {
 public:
  using Error::Error;
};

class DataMinimizationError : public Error {
 public:
  using Error::Error;
};

class SingularMatrixError : public Error {
 public:
  SingularMatrixError(const std::string& what, std::size_t column)
      : Error(what), column_(column) {}
  // Index of the first column whose pivot fell below tolerance.
  std::size_t column() const { return column_; }

 private:
  std::size_t column_;
};

class InsufficientDfError : public Error {
 public:
  using Error::Error;
};

class SparseCellError : public Error {
 public:
  SparseCellError(const std::string& what, std::vector<std::string> cells)
      : Error(what), cells_(std::move(cells)) {}
  const std::vector<std::string>& cells() const { return cells_; }

 private:
  std::vector<std::string> cells_;
};

class NotSupportedError : public Error {
 public:
  using Error::Error;
};

}  // namespace kanon

#endif  // KANON_ERRORS_H_
