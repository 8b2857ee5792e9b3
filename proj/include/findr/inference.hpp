#pragma once

#include <nlohmann/json.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "findr/classifier_builder.hpp"
#include "findr/embedding_gateway.hpp"
#include "findr/image.hpp"

namespace findr {

struct RunnerUp {
  std::string name;
  std::size_t class_index = 0;
  double score = 0.0;
};

struct Prediction {
  std::string image_id;
  std::string name;
  std::size_t class_index = 0;  // position in the classifier; names may repeat
  double score = 0.0;
  std::optional<RunnerUp> runner_up;
};

void to_json(nlohmann::json& j, const Prediction& p);
void from_json(const nlohmann::json& j, Prediction& p);

/// Cosine argmax of `query` against the coupled weights; lowest index wins
/// ties. Throws provider_contract on dimension mismatch.
Prediction classify_embedding(const std::string& image_id, const Embedding& query, const CoupledClassifier& clf);

Prediction classify(EmbeddingGateway& gateway, const ImageRecord& image, const CoupledClassifier& clf);

struct SkippedImage {
  std::string image_id;
  std::string error;
  std::size_t position = 0;  // manifest row
};

struct BatchResult {
  std::vector<Prediction> predictions;  // manifest order
  std::vector<SkippedImage> skipped;    // lenient mode only
};

/// strict: the first ingestion error (in manifest order) aborts the batch.
/// lenient: unreadable images are reported in `skipped` instead.
BatchResult classify_batch(EmbeddingGateway& gateway, std::span<const ImageRecord> images,
                           const CoupledClassifier& clf, bool strict = true, int concurrency = 4);

/// predictions.jsonl content: one object per line, skip entries carry
/// {"image_id", "skipped": <error>}.
std::string predictions_jsonl(const BatchResult& result);
BatchResult parse_predictions_jsonl(std::string_view text);

}  // namespace findr
