#pragma once

#include <nlohmann/json.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "findr/embedding_gateway.hpp"
#include "findr/image.hpp"
#include "findr/vectorcore.hpp"

namespace findr {

/// Index of the prototype with the highest cosine to `query`; the lowest
/// index wins ties. `prototypes` must be nonempty.
std::size_t argmax_cosine(const Embedding& query, std::span<const Embedding> prototypes);

struct PseudoLabelGroup {
  std::string name;
  std::vector<std::string> image_ids;
};

/// Nearest text prototype per image, as groups aligned with `names` (a group
/// may be empty).
std::vector<PseudoLabelGroup> pseudo_label(std::span<const std::string> names,
                                           std::span<const Embedding> text_prototypes,
                                           std::span<const std::string> image_ids,
                                           std::span<const Embedding> image_embeddings);

/// Mean of the augmented view embeddings of a group, optionally rescaled to
/// unit norm. nullopt for an empty group.
std::optional<Embedding> visual_prototype(std::span<const Embedding> view_embeddings, bool renormalize);

/// alpha * t + (1 - alpha) * v, or t when v is absent.
Embedding couple(const Embedding& t, const std::optional<Embedding>& v, double alpha);

struct CoupledClassifier {
  std::vector<std::string> names;
  std::vector<Embedding> text_prototypes;
  std::vector<std::optional<Embedding>> visual_prototypes;
  std::vector<Embedding> coupled;
  std::vector<PseudoLabelGroup> groups;
  double alpha = 0.7;
  AugmentationPolicy policy;
  bool renormalize_visual = true;
  std::string provider_model_id;

  std::size_t dim() const { return text_prototypes.front().dim(); }
};

/// Same prototypes, coupled at a different alpha.
CoupledClassifier with_alpha(const CoupledClassifier& clf, double alpha);

void to_json(nlohmann::json& j, const CoupledClassifier& c);
void from_json(const nlohmann::json& j, CoupledClassifier& c);

struct BuildSettings {
  double alpha = 0.7;
  AugmentationPolicy policy;
  bool renormalize_visual = true;
  int concurrency = 4;
};

/// Pseudo-labels the discovery images against `names`, averages augmented
/// views per class and couples with the text prototypes.
CoupledClassifier build_classifier(EmbeddingGateway& gateway, std::span<const std::string> names,
                                   std::span<const ImageRecord> discovery, const BuildSettings& settings);

}  // namespace findr
