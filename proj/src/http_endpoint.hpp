#pragma once

#include <chrono>
#include <memory>
#include <string>

#include "httplib.h"

namespace findr::detail {

/// "https://host:port/api/v1/" -> origin "https://host:port", prefix "/api/v1"
struct Endpoint {
  std::string origin;
  std::string prefix;
};

Endpoint split_base_url(const std::string& base_url);

std::unique_ptr<httplib::Client> make_client(const Endpoint& endpoint, std::chrono::seconds timeout);

/// 429, 5xx and connection-level failures are worth retrying.
bool is_transient_status(int status);

}  // namespace findr::detail
