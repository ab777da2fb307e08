// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace mrsa {

// Root of every error thrown by this library. Subclasses map one-to-one onto
// the failure modes callers are expected to handle separately.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MRSA_DEFINE_ERROR(Name)            \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  }

MRSA_DEFINE_ERROR(ConfigError);
MRSA_DEFINE_ERROR(EmptyTrace);
MRSA_DEFINE_ERROR(PromptOverflow);
MRSA_DEFINE_ERROR(LedgerError);
MRSA_DEFINE_ERROR(InvalidToken);
MRSA_DEFINE_ERROR(Unsupported);
MRSA_DEFINE_ERROR(InvalidDistribution);
MRSA_DEFINE_ERROR(DegenerateGroup);
MRSA_DEFINE_ERROR(OversizedRollout);
MRSA_DEFINE_ERROR(OversizedExample);
MRSA_DEFINE_ERROR(ParseError);
MRSA_DEFINE_ERROR(InvalidPool);

#undef MRSA_DEFINE_ERROR

enum class BackendErrorKind {
  Transport,
  Timeout,
  Malformed,
  HttpStatus,
  ReplayMiss,
  Scripted,
};

const char* to_string(BackendErrorKind kind);

class BackendError : public Error {
 public:
  BackendError(BackendErrorKind kind, bool retryable, const std::string& what,
               int http_status = 0)
      : Error(what), kind_(kind), retryable_(retryable), status_(http_status) {}

  BackendErrorKind kind() const noexcept { return kind_; }
  bool retryable() const noexcept { return retryable_; }
  int http_status() const noexcept { return status_; }

 private:
  BackendErrorKind kind_;
  bool retryable_;
  int status_;
};

}  // namespace mrsa
