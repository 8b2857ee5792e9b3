#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "findr/embedding_gateway.hpp"
#include "findr/image.hpp"
#include "findr/name_discovery.hpp"
#include "findr/refinement.hpp"
#include "findr/synthetic_provider.hpp"

namespace findr {

/// JSONL manifest, one {"id", "path", "label"?, "synthetic_class"?} per line.
/// Relative paths resolve against the manifest's directory. Labels are not
/// returned here; see load_ground_truth.
std::vector<ImageRecord> load_manifest(const std::filesystem::path& path, bool check_paths = true);

/// id -> label for every row. Throws ErrorKind::evaluation naming rows
/// without a label.
std::map<std::string, std::string> load_ground_truth(const std::filesystem::path& path);

struct ProviderSlot {
  bool synthetic = false;
  std::string base_url;  // remote only
  std::optional<std::string> model_id;
  std::optional<SyntheticPlan> plan;  // synthetic only
  int input_size = 224;
  int batch_size = 64;
  int timeout_s = 60;

  nlohmann::json to_json() const;
  static ProviderSlot from_json(const nlohmann::json& j);
};

struct ChatConfig {
  std::optional<std::string> base_url;
  std::optional<std::filesystem::path> mock_session;  // absolute after loading
  std::string model_id;
  nlohmann::json options = nlohmann::json::object();
  std::optional<double> temperature;
  std::string api_key_env = "FINDR_CHAT_API_KEY";
  int timeout_s = 120;
  int max_image_side = 0;
  int max_parse_attempts = 3;
};

struct RunConfig {
  ChatConfig chat;
  ProviderSlot refine_provider;
  ProviderSlot classify_provider;
  ProviderSlot judge_provider;
  double alpha = 0.7;
  AugmentationPolicy augmentation;
  bool renormalize_visual = true;
  RetentionRule retention;
  PromptOptions prompt;
  std::uint64_t context_seed = 0;
  std::uint64_t augment_seed = 0;
  std::uint64_t corruption_seed = 0;
  int max_in_flight = 4;
  double rate_per_second = 0.0;
  double burst = 1.0;
  int max_attempts = 5;
  double base_delay_s = 1.0;
  std::vector<std::string> generic_blocklist = default_generic_blocklist();
  std::size_t context_size = 3;
  bool strict = true;

  /// Augmentation policy with the configured augment seed applied.
  AugmentationPolicy augmentation_policy() const;
};

/// Parses and validates a config document. Relative file references resolve
/// against `base_dir`. Unknown keys are a configuration error.
RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);

/// Discovery settings implied by the config (context size and seed can be
/// overridden by the caller afterwards).
DiscoverySettings discovery_settings(const RunConfig& config);

/// Fully resolved form, written to config.lock.json.
nlohmann::json to_json(const RunConfig& config);

}  // namespace findr
