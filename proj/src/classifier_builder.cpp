#include "findr/classifier_builder.hpp"

#include <map>

#include "findr/error.hpp"
#include "findr/parallel.hpp"

namespace findr {

using nlohmann::json;

std::size_t argmax_cosine(const Embedding& query, std::span<const Embedding> prototypes) {
  if (prototypes.empty()) throw Error(ErrorKind::empty_input, "argmax over no prototypes");
  std::size_t best = 0;
  double best_score = cosine(query, prototypes[0]);
  for (std::size_t c = 1; c < prototypes.size(); ++c) {
    const double s = cosine(query, prototypes[c]);
    if (s > best_score) {
      best = c;
      best_score = s;
    }
  }
  return best;
}

std::vector<PseudoLabelGroup> pseudo_label(std::span<const std::string> names,
                                           std::span<const Embedding> text_prototypes,
                                           std::span<const std::string> image_ids,
                                           std::span<const Embedding> image_embeddings) {
  if (names.empty() || names.size() != text_prototypes.size()) {
    throw Error(ErrorKind::contract, "pseudo_label needs one text prototype per name");
  }
  if (image_ids.size() != image_embeddings.size()) {
    throw Error(ErrorKind::contract, "image ids and embeddings differ in length");
  }
  std::vector<PseudoLabelGroup> groups(names.size());
  for (std::size_t c = 0; c < names.size(); ++c) groups[c].name = names[c];
  for (std::size_t i = 0; i < image_ids.size(); ++i) {
    groups[argmax_cosine(image_embeddings[i], text_prototypes)].image_ids.push_back(image_ids[i]);
  }
  return groups;
}

std::optional<Embedding> visual_prototype(std::span<const Embedding> view_embeddings, bool renormalize) {
  if (view_embeddings.empty()) return std::nullopt;
  Embedding m = mean(view_embeddings);
  return renormalize ? l2_normalize(m) : m;
}

Embedding couple(const Embedding& t, const std::optional<Embedding>& v, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorKind::configuration, "alpha must lie in [0, 1]");
  if (!v) return t;
  return weighted_sum(alpha, t, 1.0 - alpha, *v);
}

CoupledClassifier with_alpha(const CoupledClassifier& clf, double alpha) {
  CoupledClassifier out = clf;
  out.alpha = alpha;
  out.coupled.clear();
  for (std::size_t c = 0; c < clf.names.size(); ++c) {
    out.coupled.push_back(couple(clf.text_prototypes[c], clf.visual_prototypes[c], alpha));
  }
  return out;
}

namespace {

json vec_json(const Embedding& e) { return std::vector<float>(e.values().begin(), e.values().end()); }

Embedding vec_from(const json& j) { return Embedding(j.get<std::vector<float>>()); }

}  // namespace

void to_json(json& j, const CoupledClassifier& c) {
  json text = json::array(), visual = json::array(), coupled = json::array(), groups = json::array();
  for (std::size_t i = 0; i < c.names.size(); ++i) {
    text.push_back(vec_json(c.text_prototypes[i]));
    visual.push_back(c.visual_prototypes[i] ? vec_json(*c.visual_prototypes[i]) : json());
    coupled.push_back(vec_json(c.coupled[i]));
  }
  for (const auto& g : c.groups) groups.push_back(json{{"name", g.name}, {"image_ids", g.image_ids}});
  j = json{{"names", c.names},
           {"alpha", c.alpha},
           {"policy", c.policy},
           {"renormalize_visual", c.renormalize_visual},
           {"provider_model_id", c.provider_model_id},
           {"dim", c.names.empty() ? 0 : c.dim()},
           {"groups", groups},
           {"text_prototypes", text},
           {"visual_prototypes", visual},
           {"coupled_weights", coupled}};
}

void from_json(const json& j, CoupledClassifier& c) {
  try {
    c.names = j.at("names").get<std::vector<std::string>>();
    c.alpha = j.at("alpha").get<double>();
    c.policy = j.at("policy").get<AugmentationPolicy>();
    c.renormalize_visual = j.value("renormalize_visual", true);
    c.provider_model_id = j.value("provider_model_id", "");
    c.text_prototypes.clear();
    c.visual_prototypes.clear();
    c.coupled.clear();
    c.groups.clear();
    for (const auto& t : j.at("text_prototypes")) c.text_prototypes.push_back(vec_from(t));
    for (const auto& v : j.at("visual_prototypes")) {
      c.visual_prototypes.push_back(v.is_null() ? std::nullopt : std::optional<Embedding>(vec_from(v)));
    }
    for (const auto& w : j.at("coupled_weights")) c.coupled.push_back(vec_from(w));
    for (const auto& g : j.at("groups")) {
      c.groups.push_back({g.at("name").get<std::string>(), g.at("image_ids").get<std::vector<std::string>>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::validation, std::string("malformed classifier: ") + e.what());
  }
  const std::size_t n = c.names.size();
  if (n == 0 || c.text_prototypes.size() != n || c.visual_prototypes.size() != n || c.coupled.size() != n) {
    throw Error(ErrorKind::validation, "classifier arrays are not aligned with its names");
  }
}

CoupledClassifier build_classifier(EmbeddingGateway& gateway, std::span<const std::string> names,
                                   std::span<const ImageRecord> discovery, const BuildSettings& settings) {
  if (names.empty()) throw Error(ErrorKind::empty_vocabulary, "cannot build a classifier without class names");
  if (!(settings.alpha >= 0.0 && settings.alpha <= 1.0)) {
    throw Error(ErrorKind::configuration, "alpha must lie in [0, 1]");
  }
  settings.policy.validate();

  CoupledClassifier clf;
  clf.names.assign(names.begin(), names.end());
  clf.alpha = settings.alpha;
  clf.policy = settings.policy;
  clf.renormalize_visual = settings.renormalize_visual;
  clf.provider_model_id = gateway.model_id();
  clf.text_prototypes = gateway.embed_texts(names);

  std::vector<std::optional<Embedding>> slots(discovery.size());
  parallel_for(discovery.size(), settings.concurrency,
               [&](std::size_t i) { slots[i] = gateway.embed_image(discovery[i]); });
  std::vector<Embedding> image_embeddings;
  std::vector<std::string> ids;
  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < discovery.size(); ++i) {
    image_embeddings.push_back(std::move(*slots[i]));
    ids.push_back(discovery[i].id);
    position.emplace(discovery[i].id, i);
  }
  clf.groups = pseudo_label(names, clf.text_prototypes, ids, image_embeddings);

  clf.visual_prototypes.assign(names.size(), std::nullopt);
  parallel_for(names.size(), settings.concurrency, [&](std::size_t c) {
    std::vector<Embedding> views;
    for (const auto& id : clf.groups[c].image_ids) {
      for (auto& e : gateway.embed_image_augmented(discovery[position.at(id)], settings.policy)) {
        views.push_back(std::move(e));
      }
    }
    clf.visual_prototypes[c] = visual_prototype(views, settings.renormalize_visual);
  });
  for (std::size_t c = 0; c < names.size(); ++c) {
    clf.coupled.push_back(couple(clf.text_prototypes[c], clf.visual_prototypes[c], clf.alpha));
  }
  return clf;
}

}  // namespace findr
