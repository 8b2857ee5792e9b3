#pragma once

#include <chrono>
#include <functional>
#include <string>

#include "findr/error.hpp"

namespace findr {

/// Exponential backoff for transient failures (ErrorKind::transport).
struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{1000};
  double factor = 2.0;

  std::chrono::milliseconds delay_before(int attempt) const;  // attempt >= 2
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

Sleeper real_sleeper();

template <class F>
auto with_retries(const RetryPolicy& policy, const Sleeper& sleep, F&& fn) -> decltype(fn()) {
  const int attempts = policy.max_attempts < 1 ? 1 : policy.max_attempts;
  for (int attempt = 1;; ++attempt) {
    try {
      return fn();
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::transport) throw;
      if (attempt >= attempts) {
        throw Error(ErrorKind::transport, std::string(e.what()) + " (gave up after " +
                                              std::to_string(attempt) + " attempt(s))");
      }
      sleep(policy.delay_before(attempt + 1));
    }
  }
}

}  // namespace findr
