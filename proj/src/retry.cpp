#include "findr/retry.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace findr {

std::chrono::milliseconds RetryPolicy::delay_before(int attempt) const {
  const double scale = std::pow(factor, std::max(0, attempt - 2));
  return std::chrono::milliseconds(static_cast<long long>(base_delay.count() * scale));
}

Sleeper real_sleeper() {
  return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

}  // namespace findr
