#include "findr/run_config.hpp"

#include <set>
#include <sstream>

#include "findr/error.hpp"
#include "findr/util.hpp"

namespace findr {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::vector<json> read_jsonl(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::validation, "manifest not found: " + path.string());
  std::istringstream in(read_file(path));
  std::vector<json> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw Error(ErrorKind::validation, path.string() + ":" + std::to_string(lineno) + ": not a JSON object");
    }
    j["__line"] = lineno;
    rows.push_back(std::move(j));
  }
  return rows;
}

std::string where(const fs::path& path, const json& row) {
  return path.string() + ":" + std::to_string(row["__line"].get<std::size_t>());
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& what) {
  if (!obj.is_object()) throw Error(ErrorKind::configuration, what + " must be a JSON object");
  for (const auto& [k, v] : obj.items()) {
    if (!allowed.count(k)) throw Error(ErrorKind::configuration, "unknown key '" + k + "' in " + what);
  }
}

}  // namespace

std::vector<ImageRecord> load_manifest(const fs::path& path, bool check_paths) {
  const fs::path base = path.parent_path();
  std::vector<ImageRecord> out;
  std::set<std::string> seen;
  for (const auto& row : read_jsonl(path)) {
    if (!row.contains("id") || !row["id"].is_string() || row["id"].get<std::string>().empty()) {
      throw Error(ErrorKind::validation, where(path, row) + ": missing string id");
    }
    if (!row.contains("path") || !row["path"].is_string()) {
      throw Error(ErrorKind::validation, where(path, row) + ": missing string path");
    }
    ImageRecord rec;
    rec.id = row["id"].get<std::string>();
    if (!seen.insert(rec.id).second) {
      throw Error(ErrorKind::validation, where(path, row) + ": duplicate id '" + rec.id + "'");
    }
    rec.path = fs::path(row["path"].get<std::string>());
    if (rec.path.is_relative()) rec.path = base / rec.path;
    if (row.contains("synthetic_class") && row["synthetic_class"].is_string()) {
      rec.synthetic_class = row["synthetic_class"].get<std::string>();
    }
    if (check_paths && !fs::exists(rec.path)) {
      throw Error(ErrorKind::validation, where(path, row) + ": image not found: " + rec.path.string());
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::map<std::string, std::string> load_ground_truth(const fs::path& path) {
  std::map<std::string, std::string> out;
  std::vector<std::string> unlabeled;
  for (const auto& row : read_jsonl(path)) {
    const std::string id = row.value("id", "");
    if (row.contains("label") && row["label"].is_string() && !trim(row["label"].get<std::string>()).empty()) {
      out[id] = row["label"].get<std::string>();
    } else {
      unlabeled.push_back(id);
    }
  }
  if (!unlabeled.empty()) {
    std::string list;
    for (std::size_t i = 0; i < unlabeled.size() && i < 20; ++i) list += (i ? ", " : "") + unlabeled[i];
    throw Error(ErrorKind::evaluation, path.string() + ": rows without label: " + list);
  }
  return out;
}

json ProviderSlot::to_json() const {
  json j = {{"input_size", input_size}, {"batch_size", batch_size}};
  if (synthetic) {
    j["base_url"] = "synthetic";
    j["synthetic"] = findr::to_json(*plan);
  } else {
    j["base_url"] = base_url;
    j["timeout_s"] = timeout_s;
  }
  if (model_id) j["model_id"] = *model_id;
  return j;
}

ProviderSlot ProviderSlot::from_json(const json& j) {
  check_keys(j, {"base_url", "synthetic", "model_id", "input_size", "batch_size", "timeout_s"}, "provider slot");
  ProviderSlot s;
  try {
    const std::string url = j.at("base_url").get<std::string>();
    s.synthetic = url == "synthetic";
    if (s.synthetic) {
      if (!j.contains("synthetic")) throw Error(ErrorKind::configuration, "synthetic provider needs a 'synthetic' plan");
      s.plan = synthetic_plan_from_json(j["synthetic"]);
    } else {
      s.base_url = url;
    }
    if (j.contains("model_id")) s.model_id = j["model_id"].get<std::string>();
    s.input_size = j.value("input_size", s.input_size);
    s.batch_size = j.value("batch_size", s.batch_size);
    s.timeout_s = j.value("timeout_s", s.timeout_s);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::configuration, std::string("bad provider slot: ") + e.what());
  }
  if (s.input_size < 1 || s.batch_size < 1 || s.timeout_s < 1) {
    throw Error(ErrorKind::configuration, "provider input_size, batch_size and timeout_s must be positive");
  }
  return s;
}

AugmentationPolicy RunConfig::augmentation_policy() const {
  AugmentationPolicy p = augmentation;
  p.seed = augment_seed;
  return p;
}

RunConfig parse_config(const json& doc, const fs::path& base_dir) {
  check_keys(doc,
             {"chat", "refine_provider", "classify_provider", "judge_provider", "alpha", "augmentation",
              "renormalize_visual", "retention", "prompt", "seeds", "concurrency", "retry", "generic_blocklist",
              "context_size", "strict"},
             "config");
  RunConfig c;
  try {
    if (doc.contains("chat")) {
      const json& ch = doc["chat"];
      check_keys(ch,
                 {"base_url", "mock_session", "model_id", "options", "temperature", "api_key_env", "timeout_s",
                  "max_image_side", "max_parse_attempts"},
                 "chat");
      if (ch.contains("base_url")) c.chat.base_url = ch["base_url"].get<std::string>();
      if (ch.contains("mock_session")) {
        fs::path p = ch["mock_session"].get<std::string>();
        c.chat.mock_session = fs::absolute(p.is_relative() ? base_dir / p : p).lexically_normal();
      }
      if (c.chat.base_url && c.chat.mock_session) {
        throw Error(ErrorKind::configuration, "chat takes either base_url or mock_session, not both");
      }
      c.chat.model_id = ch.value("model_id", "");
      c.chat.options = ch.value("options", json::object());
      if (ch.contains("temperature") && !ch["temperature"].is_null()) c.chat.temperature = ch["temperature"].get<double>();
      c.chat.api_key_env = ch.value("api_key_env", c.chat.api_key_env);
      c.chat.timeout_s = ch.value("timeout_s", c.chat.timeout_s);
      c.chat.max_image_side = ch.value("max_image_side", c.chat.max_image_side);
      c.chat.max_parse_attempts = ch.value("max_parse_attempts", c.chat.max_parse_attempts);
    }
    if (!doc.contains("classify_provider")) throw Error(ErrorKind::configuration, "config needs classify_provider");
    c.classify_provider = ProviderSlot::from_json(doc["classify_provider"]);
    c.refine_provider = doc.contains("refine_provider") ? ProviderSlot::from_json(doc["refine_provider"])
                                                        : c.classify_provider;
    c.judge_provider =
        doc.contains("judge_provider") ? ProviderSlot::from_json(doc["judge_provider"]) : c.classify_provider;
    c.alpha = doc.value("alpha", c.alpha);
    if (doc.contains("augmentation")) {
      check_keys(doc["augmentation"], {"count", "crop_scale_min", "flip_probability"}, "augmentation");
      c.augmentation = doc["augmentation"].get<AugmentationPolicy>();
    }
    c.renormalize_visual = doc.value("renormalize_visual", c.renormalize_visual);
    if (doc.contains("retention")) c.retention = doc["retention"].get<RetentionRule>();
    if (doc.contains("prompt")) {
      const json& p = doc["prompt"];
      check_keys(p, {"use_meta", "use_expert", "dataset_hint"}, "prompt");
      c.prompt.use_meta = p.value("use_meta", true);
      c.prompt.use_expert = p.value("use_expert", true);
      if (p.contains("dataset_hint") && !p["dataset_hint"].is_null()) {
        c.prompt.dataset_hint = p["dataset_hint"].get<std::string>();
      }
    }
    if (doc.contains("seeds")) {
      const json& s = doc["seeds"];
      check_keys(s, {"context_seed", "augment_seed", "corruption_seed"}, "seeds");
      c.context_seed = s.value("context_seed", c.context_seed);
      c.augment_seed = s.value("augment_seed", c.augment_seed);
      c.corruption_seed = s.value("corruption_seed", c.corruption_seed);
    }
    if (doc.contains("concurrency")) {
      const json& s = doc["concurrency"];
      check_keys(s, {"max_in_flight", "rate_per_second", "burst"}, "concurrency");
      c.max_in_flight = s.value("max_in_flight", c.max_in_flight);
      c.rate_per_second = s.value("rate_per_second", c.rate_per_second);
      c.burst = s.value("burst", c.burst);
    }
    if (doc.contains("retry")) {
      const json& s = doc["retry"];
      check_keys(s, {"max_attempts", "base_delay_s"}, "retry");
      c.max_attempts = s.value("max_attempts", c.max_attempts);
      c.base_delay_s = s.value("base_delay_s", c.base_delay_s);
    }
    if (doc.contains("generic_blocklist")) {
      c.generic_blocklist = doc["generic_blocklist"].get<std::vector<std::string>>();
    }
    c.context_size = doc.value("context_size", c.context_size);
    c.strict = doc.value("strict", c.strict);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::configuration, std::string("bad config: ") + e.what());
  }
  if (!(c.alpha >= 0.0 && c.alpha <= 1.0)) throw Error(ErrorKind::configuration, "alpha must lie in [0, 1]");
  c.augmentation.validate();
  if (c.max_in_flight < 1) throw Error(ErrorKind::configuration, "max_in_flight must be >= 1");
  if (c.max_attempts < 1 || c.base_delay_s < 0.0) throw Error(ErrorKind::configuration, "bad retry settings");
  if (c.context_size < 1) throw Error(ErrorKind::configuration, "context_size must be >= 1");
  return c;
}

RunConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::configuration, "config file not found: " + path.string());
  json doc = json::parse(read_file(path), nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorKind::configuration, "config is not valid JSON: " + path.string());
  return parse_config(doc, fs::absolute(path).parent_path());
}

DiscoverySettings discovery_settings(const RunConfig& c) {
  DiscoverySettings s;
  s.context_size = c.context_size;
  s.context_seed = c.context_seed;
  s.prompt = c.prompt;
  s.chat = ChatSettings{c.chat.model_id, c.chat.temperature, c.chat.max_image_side};
  s.blocklist = c.generic_blocklist;
  s.max_parse_attempts = c.chat.max_parse_attempts;
  s.concurrency = c.max_in_flight;
  return s;
}

json to_json(const RunConfig& c) {
  json chat = {{"model_id", c.chat.model_id},
               {"options", c.chat.options},
               {"api_key_env", c.chat.api_key_env},
               {"timeout_s", c.chat.timeout_s},
               {"max_image_side", c.chat.max_image_side},
               {"max_parse_attempts", c.chat.max_parse_attempts}};
  if (c.chat.base_url) chat["base_url"] = *c.chat.base_url;
  if (c.chat.mock_session) chat["mock_session"] = c.chat.mock_session->string();
  if (c.chat.temperature) chat["temperature"] = *c.chat.temperature;
  json prompt = {{"use_meta", c.prompt.use_meta}, {"use_expert", c.prompt.use_expert}};
  if (c.prompt.dataset_hint) prompt["dataset_hint"] = *c.prompt.dataset_hint;
  json augmentation = c.augmentation;
  augmentation.erase("seed");
  return json{{"chat", chat},
              {"refine_provider", c.refine_provider.to_json()},
              {"classify_provider", c.classify_provider.to_json()},
              {"judge_provider", c.judge_provider.to_json()},
              {"alpha", c.alpha},
              {"augmentation", augmentation},
              {"renormalize_visual", c.renormalize_visual},
              {"retention", c.retention},
              {"prompt", prompt},
              {"seeds",
               {{"context_seed", c.context_seed},
                {"augment_seed", c.augment_seed},
                {"corruption_seed", c.corruption_seed}}},
              {"concurrency",
               {{"max_in_flight", c.max_in_flight}, {"rate_per_second", c.rate_per_second}, {"burst", c.burst}}},
              {"retry", {{"max_attempts", c.max_attempts}, {"base_delay_s", c.base_delay_s}}},
              {"generic_blocklist", c.generic_blocklist},
              {"context_size", c.context_size},
              {"strict", c.strict}};
}

}  // namespace findr
