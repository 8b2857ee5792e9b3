#include "findr/embedding_gateway.hpp"

#include <cmath>

#include "findr/error.hpp"
#include "findr/rng.hpp"
#include "findr/util.hpp"
#include "http_endpoint.hpp"

namespace findr {

using nlohmann::json;
namespace fs = std::filesystem;

void AugmentationPolicy::validate() const {
  if (count < 1) throw Error(ErrorKind::configuration, "augmentation count must be >= 1");
  if (!(crop_scale_min > 0.0 && crop_scale_min <= 1.0)) {
    throw Error(ErrorKind::configuration, "crop_scale_min must be in (0, 1]");
  }
  if (!(flip_probability >= 0.0 && flip_probability <= 1.0)) {
    throw Error(ErrorKind::configuration, "flip_probability must be in [0, 1]");
  }
}

void to_json(json& j, const AugmentationPolicy& p) {
  j = json{{"count", p.count},
           {"crop_scale_min", p.crop_scale_min},
           {"flip_probability", p.flip_probability},
           {"seed", p.seed}};
}

void from_json(const json& j, AugmentationPolicy& p) {
  p.count = j.value("count", p.count);
  p.crop_scale_min = j.value("crop_scale_min", p.crop_scale_min);
  p.flip_probability = j.value("flip_probability", p.flip_probability);
  p.seed = j.value("seed", p.seed);
}

std::vector<CropTransform> sample_augmentations(const LoadedImage& image, const AugmentationPolicy& policy) {
  policy.validate();
  DeterministicRng rng =
      DeterministicRng::from_key("augment:" + std::to_string(policy.seed) + ":" + image.digest);
  const double area = static_cast<double>(image.width) * image.height;
  const double log_lo = std::log(3.0 / 4.0);
  const double log_hi = std::log(4.0 / 3.0);
  std::vector<CropTransform> out;
  out.reserve(static_cast<std::size_t>(policy.count));
  for (int k = 0; k < policy.count; ++k) {
    CropTransform t = full_frame(image);
    for (int attempt = 0; attempt < 10; ++attempt) {
      const double scale = rng.uniform(policy.crop_scale_min, 1.0);
      const double ratio = std::exp(rng.uniform(log_lo, log_hi));
      const int w = static_cast<int>(std::lround(std::sqrt(area * scale * ratio)));
      const int h = static_cast<int>(std::lround(std::sqrt(area * scale / ratio)));
      if (w > 0 && h > 0 && w <= image.width && h <= image.height) {
        t.width = w;
        t.height = h;
        t.x = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(image.width - w + 1)));
        t.y = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(image.height - h + 1)));
        break;
      }
    }
    t.flip = rng.uniform01() < policy.flip_probability;
    out.push_back(t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// RemoteEmbeddingProvider

namespace {

[[noreturn]] void throw_for_status(const httplib::Result& res, const std::string& what) {
  if (!res) throw Error(ErrorKind::transport, what + ": " + httplib::to_string(res.error()));
  if (detail::is_transient_status(res->status)) {
    throw Error(ErrorKind::transport, what + ": HTTP " + std::to_string(res->status));
  }
  std::string detail_msg = res->body;
  json body = json::parse(res->body, nullptr, false);
  if (!body.is_discarded() && body.is_object() && body.contains("error")) detail_msg = body["error"].dump();
  throw Error(ErrorKind::request, what + ": HTTP " + std::to_string(res->status) + " " + detail_msg);
}

Embedding embedding_from_json(const json& arr) {
  if (!arr.is_array()) throw Error(ErrorKind::provider_contract, "embedding is not an array");
  std::vector<float> v;
  v.reserve(arr.size());
  for (const auto& x : arr) {
    if (!x.is_number()) throw Error(ErrorKind::provider_contract, "embedding component is not a number");
    v.push_back(x.get<float>());
  }
  try {
    return Embedding(std::move(v));
  } catch (const Error& e) {
    throw Error(ErrorKind::provider_contract, std::string("bad embedding from provider: ") + e.what());
  }
}

json embedding_to_json(const Embedding& e) {
  json arr = json::array();
  for (float x : e.values()) arr.push_back(x);
  return arr;
}

}  // namespace

RemoteEmbeddingProvider::RemoteEmbeddingProvider(RemoteEmbeddingConfig config) : config_(std::move(config)) {
  detail::split_base_url(config_.base_url);
}

ProviderInfo RemoteEmbeddingProvider::info() {
  std::lock_guard lock(mu_);
  if (info_) return *info_;
  const auto ep = detail::split_base_url(config_.base_url);
  auto client = detail::make_client(ep, config_.timeout);
  auto res = client->Get(ep.prefix + "/v1/info");
  if (!res || res->status != 200) throw_for_status(res, "GET /v1/info");
  json body = json::parse(res->body, nullptr, false);
  if (body.is_discarded() || !body.is_object()) throw Error(ErrorKind::provider_contract, "/v1/info is not JSON");
  ProviderInfo info;
  try {
    info.model_id = body.at("model_id").get<std::string>();
    const auto dim = body.at("dim").get<long long>();
    if (dim < 1) throw Error(ErrorKind::provider_contract, "/v1/info dim must be positive");
    info.dim = static_cast<std::size_t>(dim);
    for (const auto& m : body.at("modalities")) {
      if (m == "text") info.text = true;
      if (m == "image") info.image = true;
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::provider_contract, std::string("malformed /v1/info: ") + e.what());
  }
  if (config_.model_id && *config_.model_id != info.model_id) {
    throw Error(ErrorKind::provider_contract,
                "provider serves " + info.model_id + " but configuration expects " + *config_.model_id);
  }
  info_ = info;
  return info;
}

std::string RemoteEmbeddingProvider::cache_namespace() {
  if (config_.model_id) return *config_.model_id;
  return info().model_id;
}

std::vector<Embedding> RemoteEmbeddingProvider::post_embed(const std::string& path, const json& body,
                                                           std::size_t expected) {
  const ProviderInfo pinfo = info();
  const auto ep = detail::split_base_url(config_.base_url);
  auto client = detail::make_client(ep, config_.timeout);
  auto res = client->Post(ep.prefix + path, body.dump(), "application/json");
  if (!res || res->status != 200) throw_for_status(res, "POST " + path);
  json parsed = json::parse(res->body, nullptr, false);
  if (parsed.is_discarded() || !parsed.contains("embeddings") || !parsed["embeddings"].is_array()) {
    throw Error(ErrorKind::provider_contract, path + " response lacks embeddings");
  }
  if (parsed["embeddings"].size() != expected) {
    throw Error(ErrorKind::provider_contract, path + " returned " + std::to_string(parsed["embeddings"].size()) +
                                                  " embeddings for " + std::to_string(expected) + " inputs");
  }
  if (parsed.contains("dim") && parsed["dim"].is_number_integer() &&
      parsed["dim"].get<long long>() != static_cast<long long>(pinfo.dim)) {
    throw Error(ErrorKind::provider_contract, path + " reports dim " + parsed["dim"].dump() +
                                                  " but /v1/info says " + std::to_string(pinfo.dim));
  }
  std::vector<Embedding> out;
  out.reserve(expected);
  for (const auto& e : parsed["embeddings"]) out.push_back(embedding_from_json(e));
  return out;
}

std::vector<Embedding> RemoteEmbeddingProvider::embed_texts(std::span<const std::string> texts) {
  return post_embed("/v1/embed/text", json{{"texts", std::vector<std::string>(texts.begin(), texts.end())}},
                    texts.size());
}

std::vector<Embedding> RemoteEmbeddingProvider::embed_images(std::span<const ImagePayload> images) {
  std::vector<Embedding> out;
  std::size_t i = 0;
  // One request per run of equal media type.
  while (i < images.size()) {
    std::size_t j = i;
    json b64 = json::array();
    while (j < images.size() && images[j].media_type == images[i].media_type) {
      b64.push_back(base64_encode(images[j].encoded));
      ++j;
    }
    json body = {{"images_b64", std::move(b64)}, {"media_type", media_type_string(images[i].media_type)}};
    auto part = post_embed("/v1/embed/image", body, j - i);
    for (auto& e : part) out.push_back(std::move(e));
    i = j;
  }
  return out;
}

// ---------------------------------------------------------------------------
// EmbeddingGateway

EmbeddingGateway::EmbeddingGateway(std::shared_ptr<EmbeddingProvider> provider, EmbeddingGatewayOptions options)
    : provider_(std::move(provider)), options_(std::move(options)), throttle_(options_.max_in_flight) {
  if (!provider_) throw Error(ErrorKind::configuration, "embedding gateway needs a provider");
  if (options_.input_size < 1) throw Error(ErrorKind::configuration, "input_size must be positive");
  if (options_.batch_size < 1) options_.batch_size = 1;
  if (!options_.sleeper) options_.sleeper = real_sleeper();
}

ProviderInfo EmbeddingGateway::info() {
  return with_retries(options_.retry, options_.sleeper, [&] { return provider_->info(); });
}

std::string EmbeddingGateway::model_id() {
  return with_retries(options_.retry, options_.sleeper, [&] { return provider_->cache_namespace(); });
}

Embedding EmbeddingGateway::checked(const Embedding& raw) {
  const ProviderInfo pinfo = info();
  if (raw.dim() != pinfo.dim) {
    throw Error(ErrorKind::provider_contract, "provider returned dim " + std::to_string(raw.dim()) +
                                                  ", declared " + std::to_string(pinfo.dim));
  }
  if (raw.norm() == 0.0) throw Error(ErrorKind::provider_contract, "provider returned a zero vector");
  return l2_normalize(raw);
}

std::string EmbeddingGateway::text_key(const std::string& text) {
  return sha256_hex(json{{"kind", "text"}, {"model", model_id()}, {"text", text}}.dump());
}

std::string EmbeddingGateway::image_key(const LoadedImage& image, const std::optional<CropTransform>& t) {
  json material = {{"kind", "image"},
                   {"model", model_id()},
                   {"digest", image.digest},
                   {"input_size", options_.input_size},
                   {"synthetic_class", image.record.synthetic_class ? json(*image.record.synthetic_class) : json()}};
  material["transform"] =
      t ? json{{"x", t->x}, {"y", t->y}, {"w", t->width}, {"h", t->height}, {"flip", t->flip}} : json();
  return sha256_hex(material.dump());
}

std::optional<Embedding> EmbeddingGateway::lookup(const std::string& key) {
  {
    std::lock_guard lock(mu_);
    if (auto it = memory_.find(key); it != memory_.end()) return it->second;
  }
  if (!options_.cache_dir) return std::nullopt;
  const fs::path p = *options_.cache_dir / key.substr(0, 2) / (key + ".json");
  if (!fs::exists(p)) return std::nullopt;
  json doc = json::parse(read_file(p), nullptr, false);
  if (doc.is_discarded() || !doc.contains("embedding")) return std::nullopt;
  Embedding e = embedding_from_json(doc["embedding"]);
  std::lock_guard lock(mu_);
  memory_.emplace(key, e);
  return e;
}

void EmbeddingGateway::store(const std::string& key, const json& material, const Embedding& e) {
  {
    std::lock_guard lock(mu_);
    memory_.insert_or_assign(key, e);
  }
  if (!options_.cache_dir) return;
  json doc = {{"key", key}, {"material", material}, {"embedding", embedding_to_json(e)}};
  write_file_atomic(*options_.cache_dir / key.substr(0, 2) / (key + ".json"), doc.dump() + "\n");
}

std::vector<Embedding> EmbeddingGateway::embed_texts(std::span<const std::string> texts) {
  if (texts.empty()) throw Error(ErrorKind::contract, "embed_texts needs at least one text");
  std::vector<std::optional<Embedding>> out(texts.size());
  std::vector<std::string> keys(texts.size());
  std::vector<std::size_t> missing;  // first occurrence of each uncached text
  std::map<std::string, std::size_t> first_of_key;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    keys[i] = text_key(texts[i]);
    if (auto hit = lookup(keys[i])) {
      ++cache_hits_;
      out[i] = std::move(*hit);
    } else if (first_of_key.emplace(keys[i], i).second) {
      missing.push_back(i);
    }
  }
  if (!missing.empty() && !info().text) throw Error(ErrorKind::provider_contract, "provider has no text modality");
  for (std::size_t start = 0; start < missing.size(); start += static_cast<std::size_t>(options_.batch_size)) {
    const std::size_t end = std::min(missing.size(), start + static_cast<std::size_t>(options_.batch_size));
    std::vector<std::string> batch;
    for (std::size_t k = start; k < end; ++k) batch.push_back(texts[missing[k]]);
    auto result = with_retries(options_.retry, options_.sleeper, [&] {
      auto permit = throttle_.acquire();
      ++provider_calls_;
      return provider_->embed_texts(batch);
    });
    if (result.size() != batch.size()) throw Error(ErrorKind::provider_contract, "text batch size mismatch");
    for (std::size_t k = start; k < end; ++k) {
      const std::size_t i = missing[k];
      Embedding e = checked(result[k - start]);
      store(keys[i], json{{"kind", "text"}, {"model", model_id()}, {"text", texts[i]}}, e);
      out[i] = std::move(e);
    }
  }
  std::vector<Embedding> final;
  final.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (!out[i]) out[i] = *lookup(keys[i]);  // duplicate of an earlier miss
    final.push_back(std::move(*out[i]));
  }
  return final;
}

Embedding EmbeddingGateway::embed_text(const std::string& text) {
  return embed_texts(std::span<const std::string>(&text, 1)).front();
}

std::vector<Embedding> EmbeddingGateway::embed_views(const LoadedImage& image,
                                                     std::span<const CropTransform> transforms) {
  std::vector<std::optional<Embedding>> out(transforms.size());
  std::vector<std::string> keys(transforms.size());
  std::vector<std::size_t> missing;
  std::map<std::string, std::size_t> first_of_key;
  for (std::size_t i = 0; i < transforms.size(); ++i) {
    std::optional<CropTransform> t;
    if (!is_identity(transforms[i], image)) t = transforms[i];
    keys[i] = image_key(image, t);
    if (auto hit = lookup(keys[i])) {
      ++cache_hits_;
      out[i] = std::move(*hit);
    } else if (first_of_key.emplace(keys[i], i).second) {
      missing.push_back(i);
    }
  }
  if (!missing.empty()) {
    if (!info().image) throw Error(ErrorKind::provider_contract, "provider has no image modality");
    std::vector<CropTransform> miss_transforms;
    for (auto i : missing) miss_transforms.push_back(transforms[i]);
    std::vector<std::string> rendered;
    if (provider_->wants_pixels()) rendered = render_views(image, miss_transforms, options_.input_size);
    std::vector<ImagePayload> payloads;
    for (std::size_t k = 0; k < missing.size(); ++k) {
      ImagePayload p;
      p.digest = image.digest;
      p.synthetic_class = image.record.synthetic_class;
      if (!is_identity(miss_transforms[k], image)) p.transform = miss_transforms[k];
      if (!rendered.empty()) p.encoded = std::move(rendered[k]);
      payloads.push_back(std::move(p));
    }
    auto result = with_retries(options_.retry, options_.sleeper, [&] {
      auto permit = throttle_.acquire();
      ++provider_calls_;
      return provider_->embed_images(payloads);
    });
    if (result.size() != payloads.size()) throw Error(ErrorKind::provider_contract, "image batch size mismatch");
    for (std::size_t k = 0; k < missing.size(); ++k) {
      Embedding e = checked(result[k]);
      store(keys[missing[k]], json{{"kind", "image"}, {"digest", image.digest}, {"path", image.record.path.string()}}, e);
      out[missing[k]] = std::move(e);
    }
  }
  std::vector<Embedding> final;
  final.reserve(transforms.size());
  for (std::size_t i = 0; i < transforms.size(); ++i) {
    if (!out[i]) out[i] = *lookup(keys[i]);
    final.push_back(std::move(*out[i]));
  }
  return final;
}

Embedding EmbeddingGateway::embed_image(const ImageRecord& image) {
  const LoadedImage img = load_image(image);
  const CropTransform t = full_frame(img);
  return embed_views(img, std::span<const CropTransform>(&t, 1)).front();
}

std::vector<Embedding> EmbeddingGateway::embed_image_augmented(const ImageRecord& image,
                                                               const AugmentationPolicy& policy) {
  const LoadedImage img = load_image(image);
  const auto transforms = sample_augmentations(img, policy);
  return embed_views(img, transforms);
}

}  // namespace findr
