// Copyright 2026 The oocd Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace oocd {

// Every failure raised by the library derives from Error and carries a short
// machine-readable code ("ParseError", "MissingRecord", ...) next to the
// human-readable message.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

#define OOCD_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                     \
   public:                                                        \
    explicit Name(const std::string& message)                     \
        : Error(#Name, message) {}                                \
  }

// corpus
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& detail)
      : Error("ParseError", "line " + std::to_string(line) + ": " + detail),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};
OOCD_DEFINE_ERROR(MissingImage);
OOCD_DEFINE_ERROR(InsufficientSamples);
OOCD_DEFINE_ERROR(IoError);

// generation
OOCD_DEFINE_ERROR(BackendUnavailable);
OOCD_DEFINE_ERROR(GenerationFailed);
OOCD_DEFINE_ERROR(ProtocolError);

// embedding
OOCD_DEFINE_ERROR(EncoderFailure);
OOCD_DEFINE_ERROR(DimensionMismatch);
OOCD_DEFINE_ERROR(StoreCorrupt);

// similarity
OOCD_DEFINE_ERROR(ZeroVector);
OOCD_DEFINE_ERROR(LengthMismatch);
class MissingRecord : public Error {
 public:
  MissingRecord(const std::string& sample_id, const std::string& artifact,
                const std::string& encoder_id)
      : Error("MissingRecord", "no record for sample '" + sample_id +
                                   "', artifact " + artifact + ", encoder '" +
                                   encoder_id + "'") {}
};

// classify
OOCD_DEFINE_ERROR(DegenerateCovariance);
OOCD_DEFINE_ERROR(SingleClassData);
OOCD_DEFINE_ERROR(NonFiniteFeature);
OOCD_DEFINE_ERROR(ShapeMismatch);
OOCD_DEFINE_ERROR(ModelFormatError);

// evaluate / cli
OOCD_DEFINE_ERROR(EmptyInput);
OOCD_DEFINE_ERROR(SingleClassTruth);
OOCD_DEFINE_ERROR(ConfigError);
OOCD_DEFINE_ERROR(MissingArtifact);
OOCD_DEFINE_ERROR(TooManyFailures);

#undef OOCD_DEFINE_ERROR

}  // namespace oocd
