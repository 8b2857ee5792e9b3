#pragma once

#include <nlohmann/json.hpp>

#include <span>
#include <string>
#include <vector>

#include "findr/embedding_gateway.hpp"
#include "findr/image.hpp"
#include "findr/vectorcore.hpp"

namespace findr {

struct ScoredName {
  std::string name;
  double score = 0.0;
};

/// score(c) = mean_j cosine(t_c, v_j), aligned with `text_embeddings`.
/// Throws empty_input when there are no image embeddings.
std::vector<ScoredName> score_candidates(std::span<const std::string> names,
                                         std::span<const Embedding> text_embeddings,
                                         std::span<const Embedding> image_embeddings);

struct RetentionRule {
  enum class Kind { keep_all, top_m, min_score };
  Kind kind = Kind::keep_all;
  long long m = 0;
  double tau = 0.0;

  static RetentionRule keep_all() { return {}; }
  static RetentionRule top_m(long long m) { return {Kind::top_m, m, 0.0}; }
  static RetentionRule min_score(double tau) { return {Kind::min_score, 0, tau}; }

  void validate() const;
};

void to_json(nlohmann::json& j, const RetentionRule& r);
void from_json(const nlohmann::json& j, RetentionRule& r);

struct RefinedVocabulary {
  std::vector<std::string> names;  // descending score, ties by name
  std::vector<double> scores;
  RetentionRule retention;
  std::string provider_model_id;
};

void to_json(nlohmann::json& j, const RefinedVocabulary& v);
void from_json(const nlohmann::json& j, RefinedVocabulary& v);

/// Sorts and applies the rule. The result is a nonempty prefix of the sorted
/// sequence.
RefinedVocabulary retain(std::vector<ScoredName> scored, const RetentionRule& rule);

/// Embeds the candidate names and discovery images with `gateway` and ranks.
RefinedVocabulary refine(EmbeddingGateway& gateway, std::span<const std::string> candidates,
                         std::span<const ImageRecord> discovery, const RetentionRule& rule, int concurrency = 4);

}  // namespace findr
