#pragma once

#include <chrono>
#include <condition_variable>
#include <mutex>

namespace findr {

/// In-flight cap plus an optional token-bucket rate limit, shared by all
/// callers of a gateway.
class RequestThrottle {
 public:
  /// rate_per_second <= 0 disables the token bucket.
  RequestThrottle(int max_in_flight, double rate_per_second = 0.0, double burst = 1.0);

  class Permit {
   public:
    explicit Permit(RequestThrottle* owner) : owner_(owner) {}
    Permit(Permit&& other) noexcept : owner_(other.owner_) { other.owner_ = nullptr; }
    Permit(const Permit&) = delete;
    Permit& operator=(const Permit&) = delete;
    Permit& operator=(Permit&&) = delete;
    ~Permit();

   private:
    RequestThrottle* owner_;
  };

  [[nodiscard]] Permit acquire();

  int max_in_flight() const noexcept { return max_in_flight_; }
  int peak_in_flight() const;

 private:
  void release();
  void take_token(std::unique_lock<std::mutex>& lock);

  const int max_in_flight_;
  const double rate_;
  const double burst_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  int in_flight_ = 0;
  int peak_ = 0;
  double tokens_;
  std::chrono::steady_clock::time_point last_refill_;
};

}  // namespace findr
