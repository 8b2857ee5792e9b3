#include "findr/throttle.hpp"

#include <algorithm>

namespace findr {

RequestThrottle::RequestThrottle(int max_in_flight, double rate_per_second, double burst)
    : max_in_flight_(std::max(1, max_in_flight)),
      rate_(rate_per_second),
      burst_(std::max(1.0, burst)),
      tokens_(std::max(1.0, burst)),
      last_refill_(std::chrono::steady_clock::now()) {}

RequestThrottle::Permit::~Permit() {
  if (owner_) owner_->release();
}

RequestThrottle::Permit RequestThrottle::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return in_flight_ < max_in_flight_; });
  ++in_flight_;
  peak_ = std::max(peak_, in_flight_);
  if (rate_ > 0.0) take_token(lock);
  return Permit(this);
}

int RequestThrottle::peak_in_flight() const {
  std::lock_guard lock(mu_);
  return peak_;
}

void RequestThrottle::release() {
  {
    std::lock_guard lock(mu_);
    --in_flight_;
  }
  cv_.notify_one();
}

void RequestThrottle::take_token(std::unique_lock<std::mutex>& lock) {
  using namespace std::chrono;
  for (;;) {
    const auto now = steady_clock::now();
    const double elapsed = duration<double>(now - last_refill_).count();
    tokens_ = std::min(burst_, tokens_ + elapsed * rate_);
    last_refill_ = now;
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    const auto wait = duration<double>((1.0 - tokens_) / rate_);
    cv_.wait_for(lock, duration_cast<steady_clock::duration>(wait));
  }
}

}  // namespace findr
