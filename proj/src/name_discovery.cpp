#include "findr/name_discovery.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "findr/error.hpp"
#include "findr/parallel.hpp"
#include "findr/rng.hpp"
#include "findr/util.hpp"

namespace findr {

using nlohmann::json;

namespace {

bool is_ascii_alpha(char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z'); }
bool is_ascii_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_ascii_lower(char c) { return c >= 'a' && c <= 'z'; }
bool is_ascii_digit(char c) { return c >= '0' && c <= '9'; }
bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
char to_lower(char c) { return is_ascii_upper(c) ? static_cast<char>(c - 'A' + 'a') : c; }
char to_upper(char c) { return is_ascii_lower(c) ? static_cast<char>(c - 'a' + 'A') : c; }

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), to_lower);
  return out;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : s) {
    if (c == ' ') {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

std::string join(const std::vector<std::string>& words, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += sep;
    out += words[i];
  }
  return out;
}

// Short all-caps tokens ("BMW", "GT") are abbreviations and keep their case.
bool is_abbreviation(std::string_view word) {
  if (word.size() > 4) return false;
  bool has_letter = false;
  for (char c : word) {
    if (is_ascii_lower(c)) return false;
    has_letter = has_letter || is_ascii_upper(c);
  }
  return has_letter;
}

std::string title_case(std::string_view word) {
  std::string out(word);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = i == 0 ? to_upper(out[i]) : to_lower(out[i]);
  return out;
}

std::size_t letter_count(std::string_view s) {
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), is_ascii_alpha));
}

std::string singularize(const std::string& word) {
  const std::string lower = lowercase(word);
  static const std::set<std::string> invariant = {"species", "series"};
  if (invariant.count(lower)) return word;
  if (ends_with(lower, "ss") || ends_with(lower, "us") || ends_with(lower, "is")) return word;
  if (ends_with(lower, "ies") && lower.size() > 3) return word.substr(0, word.size() - 3) + "y";
  if (ends_with(lower, "sses") || ends_with(lower, "xes") || ends_with(lower, "ches") ||
      ends_with(lower, "shes")) {
    return word.substr(0, word.size() - 2);
  }
  if (ends_with(lower, "s") && letter_count(std::string_view(word).substr(0, word.size() - 1)) >= 3) {
    return word.substr(0, word.size() - 1);
  }
  return word;
}

// Single-line meta field: lowercase letters, spaces and hyphens.
std::string clean_meta_field(std::string_view raw) {
  std::string kept;
  for (char c : raw) {
    if (is_space(c)) {
      kept.push_back(' ');
    } else if (is_ascii_alpha(c) || c == '-') {
      kept.push_back(to_lower(c));
    }
  }
  return join(split_words(kept), " ");
}

// Index just past the '}' matching the '{' at `open`, or npos.
std::size_t matching_brace(std::string_view text, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

std::optional<json> first_json_object(std::string_view text) {
  for (auto pos = text.find('{'); pos != std::string_view::npos; pos = text.find('{', pos + 1)) {
    const auto end = matching_brace(text, pos);
    if (end == std::string_view::npos) continue;
    json parsed = json::parse(text.substr(pos, end - pos), nullptr, false);
    if (!parsed.is_discarded() && parsed.is_object()) return parsed;
  }
  return std::nullopt;
}

// Minimal reader for the flat {index: "name"} dictionaries the service prompt
// asks for. Models emit both JSON and Python dict syntax, so single quotes and
// bare integer keys are accepted.
class DictReader {
 public:
  DictReader(std::string_view text, std::size_t pos) : s_(text), i_(pos) {}

  std::optional<std::vector<std::pair<std::string, std::string>>> read() {
    std::vector<std::pair<std::string, std::string>> out;
    if (!consume('{')) return std::nullopt;
    skip_ws();
    if (consume('}')) return out;
    for (;;) {
      skip_ws();
      auto key = read_key();
      if (!key) return std::nullopt;
      skip_ws();
      if (!consume(':')) return std::nullopt;
      skip_ws();
      auto value = read_quoted();
      if (!value) return std::nullopt;
      out.emplace_back(std::move(*key), std::move(*value));
      skip_ws();
      if (consume('}')) return out;
      if (!consume(',')) return std::nullopt;
      skip_ws();
      if (consume('}')) return out;  // trailing comma
    }
  }

 private:
  void skip_ws() {
    while (i_ < s_.size() && is_space(s_[i_])) ++i_;
  }
  bool consume(char c) {
    if (i_ < s_.size() && s_[i_] == c) {
      ++i_;
      return true;
    }
    return false;
  }
  std::optional<std::string> read_key() {
    if (i_ < s_.size() && (s_[i_] == '"' || s_[i_] == '\'')) return read_quoted();
    std::string digits;
    while (i_ < s_.size() && is_ascii_digit(s_[i_])) digits.push_back(s_[i_++]);
    if (digits.empty()) return std::nullopt;
    return digits;
  }
  std::optional<std::string> read_quoted() {
    if (i_ >= s_.size() || (s_[i_] != '"' && s_[i_] != '\'')) return std::nullopt;
    const char quote = s_[i_++];
    std::string out;
    while (i_ < s_.size()) {
      const char c = s_[i_++];
      if (c == quote) return out;
      if (c == '\\' && i_ < s_.size()) {
        const char e = s_[i_++];
        switch (e) {
          case 'n': out.push_back('\n'); break;
          case 't': out.push_back('\t'); break;
          case 'u':
            // Non-ASCII code points cannot survive normalization anyway.
            i_ = std::min(s_.size(), i_ + 4);
            break;
          default: out.push_back(e);
        }
        continue;
      }
      if (c == '\n') return std::nullopt;
      out.push_back(c);
    }
    return std::nullopt;
  }

  std::string_view s_;
  std::size_t i_;
};

ImagePart image_part(const ImageRecord& record, int max_image_side) {
  const LoadedImage img = load_image(record);
  return ImagePart{downscale_for_upload(img, max_image_side), img.media_type};
}

ChatRequest text_request(const ChatSettings& settings, std::vector<Part> parts) {
  ChatRequest req;
  req.model_id = settings.model_id;
  req.temperature = settings.temperature;
  req.messages.push_back(Message{Role::user, std::move(parts)});
  return req;
}

}  // namespace

void to_json(json& j, const MetaInfo& m) {
  j = json{{"category_singular", m.category_singular},
           {"category_plural", m.category_plural},
           {"unit_singular", m.unit_singular},
           {"unit_plural", m.unit_plural},
           {"expert_name", m.expert_name}};
}

void from_json(const json& j, MetaInfo& m) {
  j.at("category_singular").get_to(m.category_singular);
  j.at("category_plural").get_to(m.category_plural);
  j.at("unit_singular").get_to(m.unit_singular);
  j.at("unit_plural").get_to(m.unit_plural);
  j.at("expert_name").get_to(m.expert_name);
}

const std::vector<std::string>& default_generic_blocklist() {
  static const std::vector<std::string> list = {"Object", "Animal", "Plant", "Vehicle", "Unknown",
                                                "Item",   "Thing",  "Image", "Photo"};
  return list;
}

// Prompt wording (typos included) is kept exactly as it was used to produce
// the reference outputs.
std::string meta_prompt_text() {
  return "You are given a set of images representing a specific object category. "
         "Analyze these images and provide information about the main object in the images:\n"
         "1. The category describing these specific objects (sungular and plural forms).\n"
         "2. The word typically used to describe a unit (or a sub-category) of this category, "
         "to distinct such specific similar objects (singular and plural forms).\n"
         "3. The word typically used to describe a recognised expert or professional who studied "
         "this category and is able to easily distinct its units.\n"
         "\n"
         "Please provide this information in this specific format as a JSON object with the "
         "following fields:\n"
         "{\n"
         "    \"category_singular\": \"<category_singular>\",\n"
         "    \"category_plural\": \"<category_plural>\",\n"
         "    \"unit_singular\": \"<unit_singular>\",\n"
         "    \"unit_plural\": \"<unit_plural>\",\n"
         "    \"expert_name\": \"<expert_name>\"\n"
         "}\n"
         "\n"
         "Do not provide any additional word or information.";
}

std::string main_prompt_text(const MetaInfo& meta, const PromptOptions& options) {
  std::vector<std::string> pieces;
  if (options.use_expert) {
    pieces.push_back("You are a professional " + meta.expert_name + " and an expert in " +
                     meta.category_singular + " classification.");
  }
  if (options.use_meta) {
    pieces.push_back("What is the exact " + meta.category_singular + " " + meta.unit_singular +
                     " in the provided image?");
  } else {
    pieces.push_back("What is the main object in the image?");
  }
  if (options.dataset_hint && !trim(*options.dataset_hint).empty()) pieces.push_back(*options.dataset_hint);
  return join(pieces, "\n\n");
}

std::string service_prompt_text(const MetaInfo& meta) {
  const std::string one = meta.category_singular + " " + meta.unit_singular;
  const std::string many = meta.category_singular + " " + meta.unit_plural;
  return "Convert the below text containing suggested " + many +
         " to a Python dictionary object, where a key is an index and the value is a suggestion of the "
         "specific " + one + ".\n"
         "Only use the final " + one + " prediction(s), do not use any intermediate suggestions.\n"
         "Remove duplicated suggestions and unsepcific " + many + ".\n"
         "Also keep the numbered order of the suggestions with 1 as a starting index.\n"
         "Make sure to only use English letters.\n"
         "Add a space between seprate words if not done in the suggested " + many +
         " and capitalize abbreviations and first letters of normal words.";
}

ChatRequest build_meta_prompt(std::span<const ImageRecord> context_images, std::size_t context_size,
                              const ChatSettings& settings) {
  if (context_images.size() != context_size) {
    throw Error(ErrorKind::contract, "meta prompt needs exactly " + std::to_string(context_size) +
                                         " context images, got " + std::to_string(context_images.size()));
  }
  std::vector<Part> parts;
  for (const auto& rec : context_images) parts.emplace_back(image_part(rec, settings.max_image_side));
  parts.emplace_back(TextPart{meta_prompt_text()});
  return text_request(settings, std::move(parts));
}

MetaInfo parse_meta(const ChatResponse& response) {
  const auto obj = first_json_object(response.text);
  if (!obj) throw Error(ErrorKind::parse, "no JSON object in meta response");
  MetaInfo meta;
  const auto field = [&](const char* name) {
    const auto it = obj->find(name);
    if (it == obj->end() || !it->is_string()) {
      throw Error(ErrorKind::parse, std::string("meta response lacks field ") + name);
    }
    std::string v = clean_meta_field(it->get<std::string>());
    if (v.empty()) throw Error(ErrorKind::parse, std::string("meta field ") + name + " is empty");
    return v;
  };
  meta.category_singular = field("category_singular");
  meta.category_plural = field("category_plural");
  meta.unit_singular = field("unit_singular");
  meta.unit_plural = field("unit_plural");
  meta.expert_name = field("expert_name");
  return meta;
}

ChatRequest build_main_prompt(const ImageRecord& image, const MetaInfo& meta, const PromptOptions& options,
                              const ChatSettings& settings) {
  std::vector<Part> parts;
  parts.emplace_back(image_part(image, settings.max_image_side));
  parts.emplace_back(TextPart{main_prompt_text(meta, options)});
  return text_request(settings, std::move(parts));
}

ChatRequest build_service_prompt(const RawPrediction& raw, const MetaInfo& meta, const ChatSettings& settings) {
  if (trim(raw.text).empty()) throw Error(ErrorKind::contract, "raw prediction text is empty");
  std::vector<Part> parts;
  parts.emplace_back(TextPart{service_prompt_text(meta) + "\n\n" + raw.text});
  return text_request(settings, std::move(parts));
}

std::optional<std::vector<std::pair<std::string, std::string>>> parse_service(const ChatResponse& response) {
  const std::string_view text = response.text;
  for (auto pos = text.find('{'); pos != std::string_view::npos; pos = text.find('{', pos + 1)) {
    if (auto dict = DictReader(text, pos).read()) return dict;
  }
  return std::nullopt;
}

std::optional<std::string> first_suggestion(const std::vector<std::pair<std::string, std::string>>& suggestions) {
  if (suggestions.empty()) return std::nullopt;
  const std::pair<std::string, std::string>* best = nullptr;
  long best_index = 0;
  for (const auto& s : suggestions) {
    const std::string key = trim(s.first);
    if (key == "1") return s.second;
    if (!key.empty() && std::all_of(key.begin(), key.end(), is_ascii_digit) && key.size() < 10) {
      const long idx = std::stol(key);
      if (!best || idx < best_index) {
        best = &s;
        best_index = idx;
      }
    }
  }
  return best ? best->second : suggestions.front().second;
}

std::optional<std::string> normalize_name(std::string_view name) {
  std::string kept;
  kept.reserve(name.size());
  for (char c : name) {
    if (is_space(c)) {
      kept.push_back(' ');
    } else if (is_ascii_alpha(c) || is_ascii_digit(c) || c == '-' || c == '\'' || c == '.') {
      kept.push_back(c);
    }
  }
  std::vector<std::string> words = split_words(kept);
  if (words.empty()) return std::nullopt;
  std::vector<bool> abbreviation(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    abbreviation[i] = is_abbreviation(words[i]);
    if (!abbreviation[i]) words[i] = title_case(words[i]);
  }
  if (!abbreviation.back()) words.back() = singularize(words.back());
  return join(words, " ");
}

std::vector<std::string> filter_generic(std::span<const std::string> names, const MetaInfo& meta,
                                        std::span<const std::string> blocklist) {
  std::set<std::string> generic;
  for (const auto& b : blocklist) generic.insert(lowercase(b));
  for (const auto* field : {&meta.category_singular, &meta.category_plural, &meta.unit_singular, &meta.unit_plural}) {
    generic.insert(lowercase(*field));
    if (auto n = normalize_name(*field)) generic.insert(lowercase(*n));
  }
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& name : names) {
    const std::string key = lowercase(name);
    if (generic.count(key) || !seen.insert(key).second) continue;
    out.push_back(name);
  }
  if (out.empty()) {
    throw Error(ErrorKind::empty_vocabulary,
                "every candidate name was generic or unusable; inspect candidates.jsonl and the raw model "
                "outputs in cache/chat");
  }
  return out;
}

std::vector<std::size_t> select_context(std::size_t manifest_size, std::size_t k, std::uint64_t seed) {
  if (k > manifest_size) {
    throw Error(ErrorKind::contract, "context set of " + std::to_string(k) + " needs at least that many images");
  }
  DeterministicRng rng(seed);
  return rng.sample_without_replacement(manifest_size, k);
}

MetaInfo extract_meta(ChatGateway& gateway, const ChatRequest& request, int max_attempts) {
  const int attempts = std::max(1, max_attempts);
  for (int attempt = 1;; ++attempt) {
    const ChatResponse resp = gateway.complete(request, gateway.retry_policy(), attempt > 1);
    try {
      return parse_meta(resp);
    } catch (const Error& e) {
      if (attempt >= attempts) {
        throw Error(ErrorKind::parse, std::string(e.what()) + " after " + std::to_string(attempt) +
                                          " attempt(s); discovery aborted");
      }
    }
  }
}

DiscoveryResult run_discovery(ChatGateway& gateway, std::span<const ImageRecord> images,
                              const DiscoverySettings& settings) {
  DiscoveryResult result;
  result.seed = settings.context_seed;
  const auto context_idx = select_context(images.size(), settings.context_size, settings.context_seed);
  std::vector<ImageRecord> context;
  for (auto i : context_idx) {
    context.push_back(images[i]);
    result.context_ids.push_back(images[i].id);
  }
  result.meta = extract_meta(gateway, build_meta_prompt(context, settings.context_size, settings.chat),
                             settings.max_parse_attempts);

  std::vector<CandidateEntry> entries(images.size());
  parallel_for(images.size(), settings.concurrency, [&](std::size_t i) {
    CandidateEntry& entry = entries[i];
    entry.image_id = images[i].id;
    const auto main_req = build_main_prompt(images[i], result.meta, settings.prompt, settings.chat);
    const std::string raw = gateway.complete(main_req).text;
    entry.raw_text_sha256 = sha256_hex(raw);
    if (trim(raw).empty()) return;
    const auto service_req = build_service_prompt(RawPrediction{images[i].id, raw}, result.meta, settings.chat);
    for (int attempt = 1; attempt <= std::max(1, settings.max_parse_attempts); ++attempt) {
      const auto resp = gateway.complete(service_req, gateway.retry_policy(), attempt > 1);
      if (auto suggestions = parse_service(resp)) {
        if (auto first = first_suggestion(*suggestions)) entry.name = normalize_name(*first);
        return;
      }
    }
  });

  std::vector<std::string> names;
  for (const auto& e : entries) {
    if (e.name) names.push_back(*e.name);
  }
  result.vocabulary.names = filter_generic(names, result.meta, settings.blocklist);
  result.vocabulary.entries = std::move(entries);
  return result;
}

}  // namespace findr
