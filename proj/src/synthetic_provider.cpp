#include "findr/synthetic_provider.hpp"

#include <cmath>

#include "findr/error.hpp"
#include "findr/rng.hpp"
#include "findr/util.hpp"

namespace findr {

using nlohmann::json;

namespace {

Embedding to_unit_embedding(const std::vector<double>& v) {
  double n2 = 0.0;
  for (double x : v) n2 += x * x;
  const double n = std::sqrt(n2);
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / n);
  return Embedding(std::move(out));
}

std::vector<double> as_doubles(const Embedding& e) { return {e.values().begin(), e.values().end()}; }

void add_scaled(std::vector<double>& acc, double s, const std::vector<double>& v) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += s * v[i];
}

}  // namespace

void SyntheticPlan::validate() const {
  if (dim < 2) throw Error(ErrorKind::configuration, "synthetic provider needs dim >= 2");
  if (!(noise >= 0.0) || !(aug_jitter >= 0.0)) {
    throw Error(ErrorKind::configuration, "synthetic noise magnitudes must be non-negative");
  }
  for (const auto& [name, anchor] : anchors) {
    if (anchor.dim() != dim) {
      throw Error(ErrorKind::configuration, "anchor for '" + name + "' has dim " + std::to_string(anchor.dim()) +
                                                ", plan dim is " + std::to_string(dim));
    }
    if (std::abs(anchor.norm() - 1.0) > 1e-4) {
      throw Error(ErrorKind::configuration, "anchor for '" + name + "' is not unit-norm");
    }
  }
}

Embedding axis_vector(std::size_t dim, std::size_t i) {
  if (i >= dim) throw Error(ErrorKind::configuration, "axis " + std::to_string(i) + " out of range");
  std::vector<float> v(dim, 0.0f);
  v[i] = 1.0f;
  return Embedding(std::move(v));
}

SyntheticPlan synthetic_plan_from_json(const json& j) {
  SyntheticPlan plan;
  try {
    plan.dim = j.at("dim").get<std::size_t>();
    plan.noise = j.value("noise", plan.noise);
    plan.aug_jitter = j.value("aug_jitter", plan.aug_jitter);
    plan.seed = j.value("seed", plan.seed);
    plan.model_id = j.value("model_id", plan.model_id);
    if (j.contains("anchors")) {
      for (const auto& [name, spec] : j.at("anchors").items()) {
        if (spec.is_object() && spec.contains("axis")) {
          plan.anchors.insert_or_assign(name, axis_vector(plan.dim, spec.at("axis").get<std::size_t>()));
        } else {
          const json& arr = spec.is_object() ? spec.at("vector") : spec;
          plan.anchors.insert_or_assign(name, Embedding(arr.get<std::vector<float>>()));
        }
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::configuration, std::string("bad synthetic plan: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::configuration) throw;
    throw Error(ErrorKind::configuration, std::string("bad synthetic plan: ") + e.what());
  }
  plan.validate();
  return plan;
}

json to_json(const SyntheticPlan& plan) {
  json anchors = json::object();
  for (const auto& [name, a] : plan.anchors) {
    anchors[name] = json{{"vector", std::vector<float>(a.values().begin(), a.values().end())}};
  }
  return json{{"dim", plan.dim},         {"noise", plan.noise}, {"aug_jitter", plan.aug_jitter},
              {"seed", plan.seed},       {"model_id", plan.model_id}, {"anchors", anchors}};
}

SyntheticProvider::SyntheticProvider(SyntheticPlan plan) : plan_(std::move(plan)) {
  plan_.validate();
  namespace_ = plan_.model_id + "@" + sha256_hex(to_json(plan_).dump()).substr(0, 16);
}

ProviderInfo SyntheticProvider::info() { return {namespace_, plan_.dim, true, true}; }

std::vector<double> SyntheticProvider::random_direction(const std::string& key) const {
  DeterministicRng rng = DeterministicRng::from_key(std::to_string(plan_.seed) + ":" + key);
  std::vector<double> v(plan_.dim);
  double n2 = 0.0;
  while (n2 == 0.0) {
    n2 = 0.0;
    for (double& x : v) {
      x = rng.standard_normal();
      n2 += x * x;
    }
  }
  const double n = std::sqrt(n2);
  for (double& x : v) x /= n;
  return v;
}

Embedding SyntheticProvider::text_vector(const std::string& text) const {
  if (auto it = plan_.anchors.find(text); it != plan_.anchors.end()) return it->second;
  return to_unit_embedding(random_direction("text:" + text));
}

Embedding SyntheticProvider::image_vector(const ImagePayload& image) const {
  std::vector<double> v = image.synthetic_class ? as_doubles(text_vector(*image.synthetic_class))
                                                : random_direction("image:" + image.digest);
  if (plan_.noise > 0.0) add_scaled(v, plan_.noise, random_direction("noise:" + image.digest));
  v = as_doubles(to_unit_embedding(v));
  if (image.transform && plan_.aug_jitter > 0.0) {
    const CropTransform& t = *image.transform;
    const std::string key = "aug:" + image.digest + ":" + std::to_string(t.x) + "," + std::to_string(t.y) + "," +
                            std::to_string(t.width) + "," + std::to_string(t.height) + "," + (t.flip ? "1" : "0");
    add_scaled(v, plan_.aug_jitter, random_direction(key));
  }
  return to_unit_embedding(v);
}

std::vector<Embedding> SyntheticProvider::embed_texts(std::span<const std::string> texts) {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(text_vector(t));
  return out;
}

std::vector<Embedding> SyntheticProvider::embed_images(std::span<const ImagePayload> images) {
  std::vector<Embedding> out;
  out.reserve(images.size());
  for (const auto& im : images) out.push_back(image_vector(im));
  return out;
}

}  // namespace findr
