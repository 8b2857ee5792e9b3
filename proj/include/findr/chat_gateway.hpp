#pragma once

#include <nlohmann/json.hpp>

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "findr/image.hpp"
#include "findr/retry.hpp"
#include "findr/throttle.hpp"

namespace findr {

enum class Role { system, user, assistant };

std::string_view to_string(Role role);

struct TextPart {
  std::string text;
};

struct ImagePart {
  std::string bytes;
  MediaType media_type = MediaType::png;
};

using Part = std::variant<TextPart, ImagePart>;

struct Message {
  Role role = Role::user;
  std::vector<Part> parts;
};

struct ChatRequest {
  std::string model_id;
  std::vector<Message> messages;
  std::optional<double> temperature;  // absent: provider default
};

struct ChatResponse {
  std::string text;
  nlohmann::json provider_meta = nlohmann::json::object();
};

/// Throws validation error if the request has no messages, a blank text part
/// or an image part that is not a JPEG/PNG payload.
void validate(const ChatRequest& request);

/// Canonical form hashed by cache_key: image bytes replaced by their digest,
/// sorted keys, no whitespace.
nlohmann::json canonical_json(const ChatRequest& request);

/// SHA-256 (hex) of canonical_json(request).dump().
std::string cache_key(const ChatRequest& request);

/// Body for POST {base_url}/chat/completions. `options` are merged at top
/// level (provider passthrough, e.g. max_tokens).
nlohmann::json to_wire(const ChatRequest& request, const nlohmann::json& options = {});

/// Concatenated assistant text plus status/usage from a chat-completions
/// response body.
ChatResponse from_wire(const nlohmann::json& body);

/// A single attempt against some backend. Transient failures throw
/// ErrorKind::transport, permanent ones ErrorKind::request.
class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual ChatResponse send(const ChatRequest& request) = 0;
};

struct HttpChatConfig {
  std::string base_url;
  std::string api_key;
  nlohmann::json options = nlohmann::json::object();
  std::chrono::seconds timeout{120};
};

class HttpChatProvider final : public ChatProvider {
 public:
  explicit HttpChatProvider(HttpChatConfig config);
  ChatResponse send(const ChatRequest& request) override;

 private:
  HttpChatConfig config_;
};

/// Replays canned responses keyed by cache_key. Unknown requests are a
/// request error.
class MockChatProvider final : public ChatProvider {
 public:
  explicit MockChatProvider(std::map<std::string, std::string> canned);

  /// Session file: {"responses": {"<cache_key>": "<assistant text>", ...}}
  static std::shared_ptr<MockChatProvider> from_session_file(const std::filesystem::path& path);

  ChatResponse send(const ChatRequest& request) override;

 private:
  std::map<std::string, std::string> canned_;
};

/// Forwards to another provider and records every exchange so it can be
/// saved as a mock session.
class RecordingChatProvider final : public ChatProvider {
 public:
  explicit RecordingChatProvider(std::shared_ptr<ChatProvider> inner);
  ChatResponse send(const ChatRequest& request) override;
  void save_session(const std::filesystem::path& path) const;

 private:
  std::shared_ptr<ChatProvider> inner_;
  mutable std::mutex mu_;
  std::map<std::string, std::string> recorded_;
};

struct ChatGatewayOptions {
  std::optional<std::filesystem::path> cache_dir;  // {run_dir}/cache/chat
  RetryPolicy retry;
  int max_in_flight = 4;
  double rate_per_second = 0.0;
  double burst = 1.0;
  Sleeper sleeper = real_sleeper();
};

/// Retrying, caching, throttled access to a ChatProvider. Thread-safe.
class ChatGateway {
 public:
  ChatGateway(std::shared_ptr<ChatProvider> provider, ChatGatewayOptions options);

  ChatResponse complete(const ChatRequest& request);
  /// refresh=true skips the cache lookup (the fresh answer still overwrites
  /// the entry); used when a cached answer turned out to be unusable.
  ChatResponse complete(const ChatRequest& request, const RetryPolicy& policy, bool refresh = false);

  /// Number of provider.send() invocations, i.e. network operations.
  std::size_t network_calls() const noexcept { return network_calls_.load(); }
  std::size_t cache_hits() const noexcept { return cache_hits_.load(); }
  const RequestThrottle& throttle() const noexcept { return throttle_; }
  const RetryPolicy& retry_policy() const noexcept { return options_.retry; }

 private:
  std::optional<ChatResponse> lookup(const std::string& key);
  void store(const std::string& key, const ChatRequest& request, const ChatResponse& response);
  std::filesystem::path entry_path(const std::string& key) const;

  std::shared_ptr<ChatProvider> provider_;
  ChatGatewayOptions options_;
  RequestThrottle throttle_;
  std::mutex mu_;
  std::map<std::string, ChatResponse> memory_;
  std::atomic<std::size_t> network_calls_{0};
  std::atomic<std::size_t> cache_hits_{0};
};

}  // namespace findr
