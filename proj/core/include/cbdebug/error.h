/*
 * Copyright 2026 The cbdebug Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef CBDEBUG_ERROR_H_
#define CBDEBUG_ERROR_H_

#include <stdexcept>
#include <string>

namespace cbdebug {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller supplied something invalid: bad config field, unknown concept id,
// mismatched lengths. The CLI maps these to exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration; `field()` names the offending field.
class ConfigError : public ValidationError {
 public:
  ConfigError(std::string field, const std::string& what)
      : ValidationError(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// Unknown concept id (feedback, removal, explanation).
class UnknownConceptError : public ValidationError {
 public:
  explicit UnknownConceptError(int id)
      : ValidationError("unknown concept id " + std::to_string(id)), id_(id) {}
  int id() const { return id_; }

 private:
  int id_;
};

// A precondition on pipeline state does not hold (e.g. no feedback).
class PreconditionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Artifact file is malformed or truncated.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Artifact file carries an unknown version tag.
class VersionError : public SchemaError {
 public:
  using SchemaError::SchemaError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf during optimisation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Transport failure talking to an external endpoint. Safe to retry.
class RetriableError : public Error {
 public:
  RetriableError(int concept_id, const std::string& what)
      : Error("concept " + std::to_string(concept_id) + ": " + what),
        concept_id_(concept_id) {}
  int concept_id() const { return concept_id_; }

 private:
  int concept_id_;
};

}  // namespace cbdebug

#endif  // CBDEBUG_ERROR_H_
