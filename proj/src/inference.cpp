#include "findr/inference.hpp"

#include <sstream>

#include "findr/error.hpp"
#include "findr/parallel.hpp"

namespace findr {

using nlohmann::json;

void to_json(json& j, const Prediction& p) {
  j = json{{"image_id", p.image_id}, {"name", p.name}, {"class_index", p.class_index}, {"score", p.score}};
  j["runner_up"] = p.runner_up ? json{{"name", p.runner_up->name},
                                      {"class_index", p.runner_up->class_index},
                                      {"score", p.runner_up->score}}
                               : json();
}

void from_json(const json& j, Prediction& p) {
  p.image_id = j.at("image_id").get<std::string>();
  p.name = j.at("name").get<std::string>();
  p.class_index = j.at("class_index").get<std::size_t>();
  p.score = j.at("score").get<double>();
  p.runner_up.reset();
  if (j.contains("runner_up") && !j["runner_up"].is_null()) {
    const json& r = j["runner_up"];
    p.runner_up = RunnerUp{r.at("name").get<std::string>(), r.value("class_index", std::size_t{0}),
                           r.at("score").get<double>()};
  }
}

Prediction classify_embedding(const std::string& image_id, const Embedding& query, const CoupledClassifier& clf) {
  if (clf.names.empty()) throw Error(ErrorKind::contract, "classifier has no classes");
  if (query.dim() != clf.dim()) {
    throw Error(ErrorKind::provider_contract, "image embedding dim " + std::to_string(query.dim()) +
                                                  " does not match classifier dim " + std::to_string(clf.dim()));
  }
  std::vector<double> scores(clf.coupled.size());
  for (std::size_t c = 0; c < scores.size(); ++c) scores[c] = cosine(query, clf.coupled[c]);
  std::size_t best = 0;
  for (std::size_t c = 1; c < scores.size(); ++c) {
    if (scores[c] > scores[best]) best = c;
  }
  Prediction p{image_id, clf.names[best], best, scores[best], std::nullopt};
  std::optional<std::size_t> second;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (c != best && (!second || scores[c] > scores[*second])) second = c;
  }
  if (second) p.runner_up = RunnerUp{clf.names[*second], *second, scores[*second]};
  return p;
}

Prediction classify(EmbeddingGateway& gateway, const ImageRecord& image, const CoupledClassifier& clf) {
  return classify_embedding(image.id, gateway.embed_image(image), clf);
}

BatchResult classify_batch(EmbeddingGateway& gateway, std::span<const ImageRecord> images,
                           const CoupledClassifier& clf, bool strict, int concurrency) {
  std::vector<std::optional<Prediction>> slots(images.size());
  std::vector<std::optional<std::string>> failures(images.size());
  parallel_for(images.size(), concurrency, [&](std::size_t i) {
    try {
      slots[i] = classify(gateway, images[i], clf);
    } catch (const Error& e) {
      if (strict || e.kind() != ErrorKind::ingestion) throw;
      failures[i] = e.what();
    }
  });
  BatchResult out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (slots[i]) {
      out.predictions.push_back(std::move(*slots[i]));
    } else {
      out.skipped.push_back({images[i].id, *failures[i], i});
    }
  }
  return out;
}

std::string predictions_jsonl(const BatchResult& result) {
  std::string out;
  std::size_t next_pred = 0;
  std::size_t next_skip = 0;
  const std::size_t rows = result.predictions.size() + result.skipped.size();
  for (std::size_t row = 0; row < rows; ++row) {
    if (next_skip < result.skipped.size() && result.skipped[next_skip].position == row) {
      const auto& s = result.skipped[next_skip++];
      out += json{{"image_id", s.image_id}, {"skipped", s.error}}.dump() + "\n";
    } else {
      out += json(result.predictions[next_pred++]).dump() + "\n";
    }
  }
  return out;
}

BatchResult parse_predictions_jsonl(std::string_view text) {
  BatchResult out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json j = json::parse(line);
      if (j.contains("skipped")) {
        out.skipped.push_back({j.at("image_id").get<std::string>(), j.at("skipped").get<std::string>(),
                               out.predictions.size() + out.skipped.size()});
      } else {
        out.predictions.push_back(j.get<Prediction>());
      }
    } catch (const json::exception& e) {
      throw Error(ErrorKind::validation, "predictions line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace findr
