// Copyright 2026 the ragpoison authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace ragpoison {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input file (bad JSONL line, unreadable record, ...).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Repeated document id within one corpus file or snapshot.
class DuplicateIdError : public Error {
 public:
  using Error::Error;
};

/// A precondition on caller-supplied data was violated.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent or unusable configuration (weights, thresholds, enums).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A backend returned data that breaks its contract (e.g. wrong dim).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Network / endpoint failure after retries were exhausted.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// A prompt template placeholder was left unbound at render time.
class RenderError : public Error {
 public:
  using Error::Error;
};

/// A scripted mock had no entry matching the incoming message.
class FixtureMissError : public Error {
 public:
  using Error::Error;
};

/// A metric was requested on inputs for which it is undefined.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

/// A defense stage produced an unusable result (e.g. empty paraphrase).
class DefenseError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure while persisting or loading run artifacts.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ragpoison
