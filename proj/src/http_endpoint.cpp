#include "http_endpoint.hpp"

#include "findr/error.hpp"

namespace findr::detail {

Endpoint split_base_url(const std::string& base_url) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorKind::configuration, "base URL needs a scheme: " + base_url);
  }
  const auto path_start = base_url.find('/', scheme_end + 3);
  Endpoint ep;
  ep.origin = base_url.substr(0, path_start);
  if (path_start != std::string::npos) ep.prefix = base_url.substr(path_start);
  while (!ep.prefix.empty() && ep.prefix.back() == '/') ep.prefix.pop_back();
  return ep;
}

std::unique_ptr<httplib::Client> make_client(const Endpoint& endpoint, std::chrono::seconds timeout) {
  auto client = std::make_unique<httplib::Client>(endpoint.origin);
  if (!client->is_valid()) throw Error(ErrorKind::configuration, "unsupported URL: " + endpoint.origin);
  client->set_connection_timeout(timeout);
  client->set_read_timeout(timeout);
  client->set_write_timeout(timeout);
  return client;
}

bool is_transient_status(int status) { return status == 429 || status >= 500; }

}  // namespace findr::detail
