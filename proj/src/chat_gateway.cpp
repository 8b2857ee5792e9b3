#include "findr/chat_gateway.hpp"

#include "findr/error.hpp"
#include "findr/util.hpp"
#include "http_endpoint.hpp"

namespace findr {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

void validate(const ChatRequest& request) {
  if (request.messages.empty()) throw Error(ErrorKind::validation, "chat request has no messages");
  for (const auto& msg : request.messages) {
    if (msg.parts.empty()) throw Error(ErrorKind::validation, "chat message has no parts");
    for (const auto& part : msg.parts) {
      if (const auto* text = std::get_if<TextPart>(&part)) {
        if (trim(text->text).empty()) throw Error(ErrorKind::validation, "blank text part");
      } else {
        const auto& img = std::get<ImagePart>(part);
        const std::string_view b = img.bytes;
        const bool jpeg = b.size() > 3 && b.substr(0, 3) == "\xFF\xD8\xFF";
        const bool png = b.size() > 8 && b.substr(0, 8) == "\x89PNG\r\n\x1a\n";
        if (!(jpeg && img.media_type == MediaType::jpeg) && !(png && img.media_type == MediaType::png)) {
          throw Error(ErrorKind::validation, "image part is not a decodable JPEG/PNG payload");
        }
      }
    }
  }
  if (request.temperature && *request.temperature < 0.0) {
    throw Error(ErrorKind::validation, "temperature must be >= 0");
  }
}

json canonical_json(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& msg : request.messages) {
    json parts = json::array();
    for (const auto& part : msg.parts) {
      if (const auto* text = std::get_if<TextPart>(&part)) {
        parts.push_back({{"type", "text"}, {"text", text->text}});
      } else {
        const auto& img = std::get<ImagePart>(part);
        parts.push_back({{"type", "image"},
                         {"media_type", media_type_string(img.media_type)},
                         {"sha256", sha256_hex(img.bytes)}});
      }
    }
    messages.push_back({{"role", to_string(msg.role)}, {"parts", std::move(parts)}});
  }
  json out = {{"model_id", request.model_id}, {"messages", std::move(messages)}};
  out["temperature"] = request.temperature ? json(*request.temperature) : json(nullptr);
  return out;
}

std::string cache_key(const ChatRequest& request) {
  return sha256_hex(canonical_json(request).dump());
}

json to_wire(const ChatRequest& request, const json& options) {
  json body = json::object();
  if (options.is_object()) {
    for (const auto& [k, v] : options.items()) body[k] = v;
  }
  body["model"] = request.model_id;
  json messages = json::array();
  for (const auto& msg : request.messages) {
    json content;
    if (msg.parts.size() == 1 && std::holds_alternative<TextPart>(msg.parts.front())) {
      content = std::get<TextPart>(msg.parts.front()).text;
    } else {
      content = json::array();
      for (const auto& part : msg.parts) {
        if (const auto* text = std::get_if<TextPart>(&part)) {
          content.push_back({{"type", "text"}, {"text", text->text}});
        } else {
          const auto& img = std::get<ImagePart>(part);
          const std::string url = "data:" + std::string(media_type_string(img.media_type)) +
                                  ";base64," + base64_encode(img.bytes);
          content.push_back({{"type", "image_url"}, {"image_url", {{"url", url}}}});
        }
      }
    }
    messages.push_back({{"role", to_string(msg.role)}, {"content", std::move(content)}});
  }
  body["messages"] = std::move(messages);
  if (request.temperature) body["temperature"] = *request.temperature;
  return body;
}

ChatResponse from_wire(const json& body) {
  if (!body.contains("choices") || !body["choices"].is_array() || body["choices"].empty()) {
    throw Error(ErrorKind::provider_contract, "chat response has no choices");
  }
  const json& message = body["choices"][0].value("message", json::object());
  const json content = message.value("content", json(nullptr));
  ChatResponse resp;
  if (content.is_string()) {
    resp.text = content.get<std::string>();
  } else if (content.is_array()) {
    for (const auto& part : content) {
      if (part.is_object() && part.value("type", "") == "text") resp.text += part.value("text", "");
    }
  } else {
    throw Error(ErrorKind::provider_contract, "chat response message has no content");
  }
  resp.provider_meta["finish_reason"] = body["choices"][0].value("finish_reason", json(nullptr));
  if (body.contains("usage")) resp.provider_meta["usage"] = body["usage"];
  if (body.contains("model")) resp.provider_meta["model"] = body["model"];
  return resp;
}

HttpChatProvider::HttpChatProvider(HttpChatConfig config) : config_(std::move(config)) {
  detail::split_base_url(config_.base_url);  // validate early
}

ChatResponse HttpChatProvider::send(const ChatRequest& request) {
  const auto ep = detail::split_base_url(config_.base_url);
  auto client = detail::make_client(ep, config_.timeout);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
  const std::string body = to_wire(request, config_.options).dump();
  auto res = client->Post(ep.prefix + "/chat/completions", headers, body, "application/json");
  if (!res) {
    throw Error(ErrorKind::transport, "chat endpoint " + ep.origin + " unreachable: " + httplib::to_string(res.error()));
  }
  if (detail::is_transient_status(res->status)) {
    throw Error(ErrorKind::transport, "chat endpoint returned HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw Error(ErrorKind::request,
                "chat endpoint rejected request (HTTP " + std::to_string(res->status) + "): " + res->body);
  }
  json parsed = json::parse(res->body, nullptr, false);
  if (parsed.is_discarded()) throw Error(ErrorKind::provider_contract, "chat response is not JSON");
  ChatResponse out = from_wire(parsed);
  out.provider_meta["status"] = res->status;
  return out;
}

MockChatProvider::MockChatProvider(std::map<std::string, std::string> canned) : canned_(std::move(canned)) {}

std::shared_ptr<MockChatProvider> MockChatProvider::from_session_file(const fs::path& path) {
  json doc = json::parse(read_file(path), nullptr, false);
  if (doc.is_discarded() || !doc.contains("responses") || !doc["responses"].is_object()) {
    throw Error(ErrorKind::configuration, "malformed mock session file " + path.string());
  }
  std::map<std::string, std::string> canned;
  for (const auto& [k, v] : doc["responses"].items()) canned.emplace(k, v.get<std::string>());
  return std::make_shared<MockChatProvider>(std::move(canned));
}

ChatResponse MockChatProvider::send(const ChatRequest& request) {
  const std::string key = cache_key(request);
  const auto it = canned_.find(key);
  if (it == canned_.end()) throw Error(ErrorKind::request, "mock session has no response for request " + key);
  ChatResponse resp;
  resp.text = it->second;
  resp.provider_meta = {{"status", 200}, {"provider", "mock"}};
  return resp;
}

RecordingChatProvider::RecordingChatProvider(std::shared_ptr<ChatProvider> inner) : inner_(std::move(inner)) {}

ChatResponse RecordingChatProvider::send(const ChatRequest& request) {
  ChatResponse resp = inner_->send(request);
  std::lock_guard lock(mu_);
  recorded_[cache_key(request)] = resp.text;
  return resp;
}

void RecordingChatProvider::save_session(const fs::path& path) const {
  std::lock_guard lock(mu_);
  json doc = {{"responses", recorded_}};
  write_file_atomic(path, doc.dump(2) + "\n");
}

ChatGateway::ChatGateway(std::shared_ptr<ChatProvider> provider, ChatGatewayOptions options)
    : provider_(std::move(provider)),
      options_(std::move(options)),
      throttle_(options_.max_in_flight, options_.rate_per_second, options_.burst) {
  if (!provider_) throw Error(ErrorKind::configuration, "chat gateway needs a provider");
  if (!options_.sleeper) options_.sleeper = real_sleeper();
}

ChatResponse ChatGateway::complete(const ChatRequest& request) {
  return complete(request, options_.retry, false);
}

ChatResponse ChatGateway::complete(const ChatRequest& request, const RetryPolicy& policy, bool refresh) {
  validate(request);
  const std::string key = cache_key(request);
  if (!refresh) {
    if (auto hit = lookup(key)) {
      ++cache_hits_;
      return *hit;
    }
  }
  ChatResponse resp = with_retries(policy, options_.sleeper, [&] {
    auto permit = throttle_.acquire();
    ++network_calls_;
    return provider_->send(request);
  });
  store(key, request, resp);
  return resp;
}

fs::path ChatGateway::entry_path(const std::string& key) const {
  return *options_.cache_dir / key.substr(0, 2) / (key + ".json");
}

std::optional<ChatResponse> ChatGateway::lookup(const std::string& key) {
  {
    std::lock_guard lock(mu_);
    if (auto it = memory_.find(key); it != memory_.end()) return it->second;
  }
  if (!options_.cache_dir) return std::nullopt;
  const fs::path p = entry_path(key);
  if (!fs::exists(p)) return std::nullopt;
  json doc = json::parse(read_file(p), nullptr, false);
  if (doc.is_discarded() || !doc.contains("response")) return std::nullopt;  // treat as miss
  ChatResponse resp;
  resp.text = doc["response"].value("text", "");
  resp.provider_meta = doc["response"].value("provider_meta", json::object());
  std::lock_guard lock(mu_);
  memory_.emplace(key, resp);
  return resp;
}

void ChatGateway::store(const std::string& key, const ChatRequest& request, const ChatResponse& response) {
  {
    std::lock_guard lock(mu_);
    memory_[key] = response;
  }
  if (!options_.cache_dir) return;
  json doc = {{"key", key},
              {"request", canonical_json(request)},
              {"response", {{"text", response.text}, {"provider_meta", response.provider_meta}}}};
  write_file_atomic(entry_path(key), doc.dump(2) + "\n");
}

}  // namespace findr
