#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace findr {

enum class ErrorKind {
  contract,          // caller broke a precondition (dims, arity)
  degenerate_vector, // zero-norm input
  empty_input,
  configuration,
  validation,        // malformed manifest / config / artifact
  missing_artifact,
  ingestion,         // unreadable or undecodable image
  parse,             // unusable model output
  transport,         // transient network failure, retries exhausted
  request,           // non-retryable provider rejection
  provider_contract, // provider returned something violating its declared info
  empty_vocabulary,
  evaluation,
  busy,              // run directory locked by another command
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Process exit code for an error kind: 2 usage/validation/input, 3 empty
/// vocabulary, 4 provider/transport, 1 anything else.
int exit_code_for(ErrorKind kind);

}  // namespace findr
