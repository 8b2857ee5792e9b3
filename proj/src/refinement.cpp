#include "findr/refinement.hpp"

#include <algorithm>

#include "findr/error.hpp"
#include "findr/parallel.hpp"

namespace findr {

using nlohmann::json;

std::vector<ScoredName> score_candidates(std::span<const std::string> names,
                                         std::span<const Embedding> text_embeddings,
                                         std::span<const Embedding> image_embeddings) {
  if (names.size() != text_embeddings.size()) {
    throw Error(ErrorKind::contract, "names and text embeddings differ in length");
  }
  if (image_embeddings.empty()) throw Error(ErrorKind::empty_input, "no discovery image embeddings to score against");
  std::vector<ScoredName> out;
  out.reserve(names.size());
  for (std::size_t c = 0; c < names.size(); ++c) {
    double sum = 0.0;
    for (const auto& v : image_embeddings) sum += cosine(text_embeddings[c], v);
    out.push_back({names[c], sum / static_cast<double>(image_embeddings.size())});
  }
  return out;
}

void RetentionRule::validate() const {
  if (kind == Kind::top_m && m <= 0) throw Error(ErrorKind::configuration, "top_m needs M >= 1");
  if (kind == Kind::min_score && !(tau >= -1.0 && tau <= 1.0)) {
    throw Error(ErrorKind::configuration, "min_score threshold must lie in [-1, 1]");
  }
}

void to_json(json& j, const RetentionRule& r) {
  switch (r.kind) {
    case RetentionRule::Kind::keep_all: j = json{{"rule", "keep_all"}}; break;
    case RetentionRule::Kind::top_m: j = json{{"rule", "top_m"}, {"m", r.m}}; break;
    case RetentionRule::Kind::min_score: j = json{{"rule", "min_score"}, {"tau", r.tau}}; break;
  }
}

void from_json(const json& j, RetentionRule& r) {
  const std::string rule = j.value("rule", "keep_all");
  if (rule == "keep_all") {
    r = RetentionRule::keep_all();
  } else if (rule == "top_m") {
    r = RetentionRule::top_m(j.at("m").get<long long>());
  } else if (rule == "min_score") {
    r = RetentionRule::min_score(j.at("tau").get<double>());
  } else {
    throw Error(ErrorKind::configuration, "unknown retention rule '" + rule + "'");
  }
  r.validate();
}

void to_json(json& j, const RefinedVocabulary& v) {
  j = json{{"names", v.names},
           {"scores", v.scores},
           {"retention", v.retention},
           {"provider_model_id", v.provider_model_id}};
}

void from_json(const json& j, RefinedVocabulary& v) {
  v.names = j.at("names").get<std::vector<std::string>>();
  v.scores = j.at("scores").get<std::vector<double>>();
  v.retention = j.at("retention").get<RetentionRule>();
  v.provider_model_id = j.value("provider_model_id", "");
  if (v.names.empty() || v.names.size() != v.scores.size()) {
    throw Error(ErrorKind::validation, "refined vocabulary must have matching nonempty names and scores");
  }
}

RefinedVocabulary retain(std::vector<ScoredName> scored, const RetentionRule& rule) {
  rule.validate();
  if (scored.empty()) throw Error(ErrorKind::empty_input, "nothing to retain");
  std::stable_sort(scored.begin(), scored.end(), [](const ScoredName& a, const ScoredName& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.name < b.name;
  });
  std::size_t keep = scored.size();
  if (rule.kind == RetentionRule::Kind::top_m) {
    keep = std::min(keep, static_cast<std::size_t>(rule.m));
  } else if (rule.kind == RetentionRule::Kind::min_score) {
    keep = 0;
    while (keep < scored.size() && scored[keep].score >= rule.tau) ++keep;
    keep = std::max<std::size_t>(keep, 1);
  }
  RefinedVocabulary out;
  out.retention = rule;
  for (std::size_t i = 0; i < keep; ++i) {
    out.names.push_back(scored[i].name);
    out.scores.push_back(scored[i].score);
  }
  return out;
}

RefinedVocabulary refine(EmbeddingGateway& gateway, std::span<const std::string> candidates,
                         std::span<const ImageRecord> discovery, const RetentionRule& rule, int concurrency) {
  rule.validate();
  if (candidates.empty()) throw Error(ErrorKind::empty_vocabulary, "no candidate names to refine");
  if (discovery.empty()) throw Error(ErrorKind::empty_input, "discovery manifest is empty");
  const auto text = gateway.embed_texts(candidates);
  std::vector<std::optional<Embedding>> slots(discovery.size());
  parallel_for(discovery.size(), concurrency, [&](std::size_t i) { slots[i] = gateway.embed_image(discovery[i]); });
  std::vector<Embedding> images;
  images.reserve(slots.size());
  for (auto& s : slots) images.push_back(std::move(*s));
  RefinedVocabulary out = retain(score_candidates(candidates, text, images), rule);
  out.provider_model_id = gateway.model_id();
  return out;
}

}  // namespace findr
