#include "findr/error.hpp"

namespace findr {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::contract: return "contract violation";
    case ErrorKind::degenerate_vector: return "degenerate vector";
    case ErrorKind::empty_input: return "empty input";
    case ErrorKind::configuration: return "configuration error";
    case ErrorKind::validation: return "validation error";
    case ErrorKind::missing_artifact: return "missing artifact";
    case ErrorKind::ingestion: return "ingestion error";
    case ErrorKind::parse: return "parse error";
    case ErrorKind::transport: return "transport error";
    case ErrorKind::request: return "request error";
    case ErrorKind::provider_contract: return "provider contract error";
    case ErrorKind::empty_vocabulary: return "empty vocabulary";
    case ErrorKind::evaluation: return "evaluation error";
    case ErrorKind::busy: return "run directory busy";
  }
  return "error";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::configuration:
    case ErrorKind::validation:
    case ErrorKind::missing_artifact:
    case ErrorKind::busy:
    case ErrorKind::ingestion:
    case ErrorKind::evaluation:
      return 2;
    case ErrorKind::empty_vocabulary:
      return 3;
    case ErrorKind::transport:
    case ErrorKind::request:
    case ErrorKind::provider_contract:
    case ErrorKind::parse:
      return 4;
    default:
      return 1;
  }
}

}  // namespace findr
