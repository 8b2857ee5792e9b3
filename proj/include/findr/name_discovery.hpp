#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "findr/chat_gateway.hpp"
#include "findr/image.hpp"

namespace findr {

/// Dataset-level meta information: broad category, the unit distinguishing
/// its members, and the matching expert persona.
struct MetaInfo {
  std::string category_singular;
  std::string category_plural;
  std::string unit_singular;
  std::string unit_plural;
  std::string expert_name;

  friend bool operator==(const MetaInfo&, const MetaInfo&) = default;
};

void to_json(nlohmann::json& j, const MetaInfo& m);
void from_json(const nlohmann::json& j, MetaInfo& m);

/// Which parts of the main prompt are enabled (the base/meta/expert arms).
struct PromptOptions {
  bool use_meta = true;
  bool use_expert = true;
  std::optional<std::string> dataset_hint;
};

/// Request-level knobs shared by every discovery call.
struct ChatSettings {
  std::string model_id;
  std::optional<double> temperature;
  int max_image_side = 0;  // 0: upload images unchanged
};

struct RawPrediction {
  std::string image_id;
  std::string text;
};

struct CandidateEntry {
  std::string image_id;
  std::string raw_text_sha256;
  std::optional<std::string> name;  // absent when the image produced no usable name
};

struct CandidateVocabulary {
  std::vector<CandidateEntry> entries;
  std::vector<std::string> names;  // normalized, filtered, first-seen order
};

const std::vector<std::string>& default_generic_blocklist();

std::string meta_prompt_text();
std::string main_prompt_text(const MetaInfo& meta, const PromptOptions& options);
std::string service_prompt_text(const MetaInfo& meta);

/// Images first, then the meta prompt, in a single user message.
ChatRequest build_meta_prompt(std::span<const ImageRecord> context_images, std::size_t context_size,
                              const ChatSettings& settings);

/// Parses the first JSON object in the reply (surrounding prose and code
/// fences are ignored). Throws ErrorKind::parse when absent or incomplete.
MetaInfo parse_meta(const ChatResponse& response);

ChatRequest build_main_prompt(const ImageRecord& image, const MetaInfo& meta, const PromptOptions& options,
                              const ChatSettings& settings);

ChatRequest build_service_prompt(const RawPrediction& raw, const MetaInfo& meta, const ChatSettings& settings);

/// Index -> name pairs of the first dictionary in the reply, in the order
/// given. Accepts JSON or Python-style quoting. nullopt when no dictionary is
/// present; an empty vector for "{}".
std::optional<std::vector<std::pair<std::string, std::string>>> parse_service(const ChatResponse& response);

/// The suggestion at index "1", else the lowest numeric index, else the first.
std::optional<std::string> first_suggestion(const std::vector<std::pair<std::string, std::string>>& suggestions);

/// Canonical form of a class name; nullopt when nothing survives.
std::optional<std::string> normalize_name(std::string_view name);

/// Drops generic names and duplicates (first-seen order kept). Throws
/// ErrorKind::empty_vocabulary when nothing is left.
std::vector<std::string> filter_generic(std::span<const std::string> names, const MetaInfo& meta,
                                        std::span<const std::string> blocklist);

/// Seeded choice of the meta-prompt context set: k distinct manifest
/// positions in draw order.
std::vector<std::size_t> select_context(std::size_t manifest_size, std::size_t k, std::uint64_t seed);

struct DiscoverySettings {
  std::size_t context_size = 3;
  std::uint64_t context_seed = 0;
  PromptOptions prompt;
  ChatSettings chat;
  std::vector<std::string> blocklist = default_generic_blocklist();
  int max_parse_attempts = 3;
  int concurrency = 4;
};

struct DiscoveryResult {
  MetaInfo meta;
  std::vector<std::string> context_ids;
  std::uint64_t seed = 0;
  CandidateVocabulary vocabulary;
};

/// Meta extraction with up to max_attempts calls; later attempts bypass the
/// chat cache so a cached unusable answer is not replayed forever.
MetaInfo extract_meta(ChatGateway& gateway, const ChatRequest& request, int max_attempts);

/// Meta prompt over the seeded context set, then main + service prompt per
/// image, normalization and generic filtering.
DiscoveryResult run_discovery(ChatGateway& gateway, std::span<const ImageRecord> images,
                              const DiscoverySettings& settings);

}  // namespace findr
