#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "findr/classifier_builder.hpp"
#include "findr/embedding_gateway.hpp"
#include "findr/inference.hpp"

namespace findr {

/// Maximum-weight one-to-one matching of rows to columns of a rectangular
/// non-negative matrix (Hungarian method on the negated, zero-padded square
/// matrix). Returns the matched (row, col) pairs, including zero-weight ones.
struct Assignment {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  long long total = 0;
};

Assignment max_weight_assignment(const std::vector<std::vector<long long>>& weights);

/// Rows are predicted classifier slots (by class_index, so repeated names
/// stay distinct clusters); columns are ground-truth names in sorted order.
struct ContingencyTable {
  std::vector<std::string> rows;
  std::vector<std::size_t> row_class_index;
  std::vector<std::string> cols;
  std::vector<std::vector<long long>> counts;

  long long total() const;
};

void to_json(nlohmann::json& j, const ContingencyTable& t);
void from_json(const nlohmann::json& j, ContingencyTable& t);

/// Throws ErrorKind::evaluation listing image ids without ground truth.
ContingencyTable contingency(std::span<const Prediction> predictions, const std::map<std::string, std::string>& truth);

struct ClusteringResult {
  double cacc = 0.0;
  Assignment mapping;  // row -> col pairs into the table
};

/// Throws empty_input for a table without images.
ClusteringResult clustering_accuracy(const ContingencyTable& table);

/// Mean judge cosine between each predicted name and its ground-truth name,
/// both normalized first.
double semantic_accuracy(std::span<const Prediction> predictions, const std::map<std::string, std::string>& truth,
                         EmbeddingGateway& judge);

struct EvaluationReport {
  double cacc = 0.0;
  double sacc = 0.0;
  std::size_t n_images = 0;
  std::size_t n_skipped = 0;
  std::size_t n_pred_classes = 0;
  std::size_t n_gt_classes = 0;
  std::string judge_model_id;
  ContingencyTable table;
  ClusteringResult clustering;
};

/// report.json layout: metrics, mapping, per-class breakdown and the table.
nlohmann::json report_json(const EvaluationReport& report);

EvaluationReport evaluate(std::span<const Prediction> predictions, const std::map<std::string, std::string>& truth,
                          EmbeddingGateway& judge);

enum class CorruptionMode { generic, mispredict, noise };

std::string_view to_string(CorruptionMode mode);
CorruptionMode corruption_mode_from(std::string_view name);

/// Replaces round(fraction * n) seeded positions. For a fixed (mode, seed)
/// the positions for a smaller fraction are a subset of those for a larger.
std::vector<std::string> corrupt_vocabulary(std::span<const std::string> names, CorruptionMode mode,
                                            double fraction, std::uint64_t seed, const std::string& generic_word);

/// from, from + step, ... up to `to` (inclusive, with rounding slack).
std::vector<double> alpha_grid(double from, double to, double step);

struct AlphaPoint {
  double alpha = 0.0;
  std::vector<Prediction> predictions;
  EvaluationReport report;
};

/// Recouples the stored prototypes at every alpha and classifies the
/// precomputed test embeddings.
std::vector<AlphaPoint> alpha_sweep(const CoupledClassifier& clf, std::span<const std::string> image_ids,
                                    std::span<const Embedding> image_embeddings,
                                    const std::map<std::string, std::string>& truth, EmbeddingGateway& judge,
                                    std::span<const double> grid);

std::string alpha_csv(std::span<const AlphaPoint> points);

struct RobustnessRow {
  CorruptionMode mode = CorruptionMode::generic;
  double fraction = 0.0;
  double cacc = 0.0;
  double sacc = 0.0;
};

struct RobustnessSettings {
  std::vector<CorruptionMode> modes{CorruptionMode::generic, CorruptionMode::mispredict, CorruptionMode::noise};
  std::vector<double> fractions{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  std::uint64_t seed = 0;
  std::string generic_word;
  BuildSettings build;
};

/// For every (mode, fraction): corrupt, rebuild from the discovery set,
/// classify the test set and evaluate.
std::vector<RobustnessRow> robustness_sweep(EmbeddingGateway& gateway, EmbeddingGateway& judge,
                                            std::span<const std::string> names,
                                            std::span<const ImageRecord> discovery,
                                            std::span<const ImageRecord> test,
                                            const std::map<std::string, std::string>& truth,
                                            const RobustnessSettings& settings);

std::string robustness_csv(std::span<const RobustnessRow> rows);

}  // namespace findr
