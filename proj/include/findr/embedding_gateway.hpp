#pragma once

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "findr/image.hpp"
#include "findr/retry.hpp"
#include "findr/throttle.hpp"
#include "findr/vectorcore.hpp"

namespace findr {

struct ProviderInfo {
  std::string model_id;
  std::size_t dim = 0;
  bool text = false;
  bool image = false;
};

/// Random-resized-crop plus horizontal flip, drawn `count` times per image.
struct AugmentationPolicy {
  int count = 10;
  double crop_scale_min = 0.8;
  double flip_probability = 0.5;
  std::uint64_t seed = 0;

  void validate() const;  // configuration error when out of range
};

void to_json(nlohmann::json& j, const AugmentationPolicy& p);
void from_json(const nlohmann::json& j, AugmentationPolicy& p);

/// The K crop/flip transforms for one image. Pure function of (policy,
/// image digest, image size); area fraction ~ U[crop_scale_min, 1], aspect
/// log-uniform in [3/4, 4/3], falling back to the full frame when ten draws
/// do not fit.
std::vector<CropTransform> sample_augmentations(const LoadedImage& image, const AugmentationPolicy& policy);

/// What a provider receives for one image view. `encoded` holds a square
/// PNG rendering when the provider wants pixels; the synthetic provider works
/// from the digest, class tag and transform instead.
struct ImagePayload {
  std::string digest;
  std::optional<std::string> synthetic_class;
  std::optional<CropTransform> transform;  // absent: identity view
  std::string encoded;
  MediaType media_type = MediaType::png;
};

/// One attempt per call; transient failures throw ErrorKind::transport.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual ProviderInfo info() = 0;
  /// Identity used in cache keys; must not require network access if the
  /// caller configured it up front.
  virtual std::string cache_namespace() = 0;
  virtual bool wants_pixels() const { return true; }
  virtual std::vector<Embedding> embed_texts(std::span<const std::string> texts) = 0;
  virtual std::vector<Embedding> embed_images(std::span<const ImagePayload> images) = 0;
};

struct RemoteEmbeddingConfig {
  std::string base_url;
  std::optional<std::string> model_id;  // when set, used as cache namespace and checked against /v1/info
  std::chrono::seconds timeout{60};
};

/// Client for the embedding sidecar wire protocol (/v1/info, /v1/embed/*).
class RemoteEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit RemoteEmbeddingProvider(RemoteEmbeddingConfig config);

  ProviderInfo info() override;
  std::string cache_namespace() override;
  std::vector<Embedding> embed_texts(std::span<const std::string> texts) override;
  std::vector<Embedding> embed_images(std::span<const ImagePayload> images) override;

 private:
  std::vector<Embedding> post_embed(const std::string& path, const nlohmann::json& body, std::size_t expected);

  RemoteEmbeddingConfig config_;
  std::mutex mu_;
  std::optional<ProviderInfo> info_;
};

struct EmbeddingGatewayOptions {
  std::optional<std::filesystem::path> cache_dir;  // {run_dir}/cache/embed
  int input_size = 224;
  int batch_size = 64;
  int max_in_flight = 4;
  RetryPolicy retry;
  Sleeper sleeper = real_sleeper();
};

/// Validating, caching access to an EmbeddingProvider. Every embedding it
/// returns has the provider's dim and unit norm. Thread-safe.
class EmbeddingGateway {
 public:
  EmbeddingGateway(std::shared_ptr<EmbeddingProvider> provider, EmbeddingGatewayOptions options);

  ProviderInfo info();
  std::string model_id();

  std::vector<Embedding> embed_texts(std::span<const std::string> texts);
  Embedding embed_text(const std::string& text);
  Embedding embed_image(const ImageRecord& image);
  std::vector<Embedding> embed_image_augmented(const ImageRecord& image, const AugmentationPolicy& policy);

  /// Number of provider calls (network operations for remote providers).
  std::size_t provider_calls() const noexcept { return provider_calls_.load(); }
  std::size_t cache_hits() const noexcept { return cache_hits_.load(); }

 private:
  std::string text_key(const std::string& text);
  std::string image_key(const LoadedImage& image, const std::optional<CropTransform>& transform);
  std::vector<Embedding> embed_views(const LoadedImage& image, std::span<const CropTransform> transforms);
  std::optional<Embedding> lookup(const std::string& key);
  void store(const std::string& key, const nlohmann::json& material, const Embedding& e);
  Embedding checked(const Embedding& raw);

  std::shared_ptr<EmbeddingProvider> provider_;
  EmbeddingGatewayOptions options_;
  RequestThrottle throttle_;
  std::mutex mu_;
  std::map<std::string, Embedding> memory_;
  std::atomic<std::size_t> provider_calls_{0};
  std::atomic<std::size_t> cache_hits_{0};
};

}  // namespace findr
