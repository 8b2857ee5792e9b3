#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <string>

#include "findr/embedding_gateway.hpp"

namespace findr {

/// Offline embedding model with known geometry. Names in `anchors` embed to
/// their anchor; every other string to a hash-seeded random unit vector.
/// An image tagged with synthetic_class c embeds to text(c) plus `noise`
/// times a digest-seeded random unit direction, renormalized; non-identity
/// augmentations add `aug_jitter` of further seeded noise.
struct SyntheticPlan {
  std::size_t dim = 0;
  double noise = 0.0;
  double aug_jitter = 0.02;
  std::uint64_t seed = 0;
  std::string model_id = "synthetic";
  std::map<std::string, Embedding> anchors;

  /// Configuration error unless dim >= 2, magnitudes are non-negative and
  /// every anchor has dim components and unit norm (within 1e-4).
  void validate() const;
};

/// Anchor specs are {"axis": i}, {"vector": [...]} or a bare number array.
SyntheticPlan synthetic_plan_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SyntheticPlan& plan);

/// Standard basis vector e_i in `dim` dimensions.
Embedding axis_vector(std::size_t dim, std::size_t i);

class SyntheticProvider final : public EmbeddingProvider {
 public:
  explicit SyntheticProvider(SyntheticPlan plan);

  ProviderInfo info() override;
  /// model_id plus a digest of the plan, so edited plans never share cache
  /// entries.
  std::string cache_namespace() override { return namespace_; }
  bool wants_pixels() const override { return false; }
  std::vector<Embedding> embed_texts(std::span<const std::string> texts) override;
  std::vector<Embedding> embed_images(std::span<const ImagePayload> images) override;

  Embedding text_vector(const std::string& text) const;
  Embedding image_vector(const ImagePayload& image) const;

 private:
  std::vector<double> random_direction(const std::string& key) const;

  SyntheticPlan plan_;
  std::string namespace_;
};

}  // namespace findr
