#include "fixtures.hpp"

#include <opencv2/imgcodecs.hpp>

#include <random>
#include <sstream>

#include "findr/cli.hpp"
#include "findr/name_discovery.hpp"
#include "findr/run_config.hpp"
#include "findr/util.hpp"

namespace findr::testing {

using nlohmann::json;

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  std::random_device rd;
  path = fs::temp_directory_path() /
         ("findr-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
  fs::create_directories(path);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path, ec);
}

namespace {

cv::Mat noise_image(int width, int height, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  cv::Mat m(height, width, CV_8UC3);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const auto v = gen();
      m.at<cv::Vec3b>(y, x) = cv::Vec3b(v & 0xff, (v >> 8) & 0xff, (v >> 16) & 0xff);
    }
  }
  return m;
}

std::string encode(const cv::Mat& m, const std::string& ext) {
  std::vector<unsigned char> buf;
  cv::imencode(ext, m, buf);
  return std::string(buf.begin(), buf.end());
}

}  // namespace

std::string make_png(int width, int height, std::uint64_t seed) {
  return encode(noise_image(width, height, seed), ".png");
}

std::string make_jpeg(int width, int height, std::uint64_t seed) {
  return encode(noise_image(width, height, seed), ".jpg");
}

Corpus make_corpus(const fs::path& root, const std::vector<std::string>& classes, int disc_per_class,
                   int test_per_class) {
  Corpus c;
  c.classes = classes;
  fs::create_directories(root / "images");
  c.disc_manifest = root / "disc.jsonl";
  c.test_manifest = root / "test.jsonl";
  std::string disc_lines, test_lines;
  std::uint64_t seed = 1000;
  auto emit = [&](const std::string& cls, const std::string& id, std::string& lines,
                  std::vector<ImageRecord>& records, std::map<std::string, std::string>& truth) {
    const std::string bytes = make_png(24, 20, seed++);
    const fs::path file = root / "images" / (id + ".png");
    write_file_atomic(file, bytes);
    c.class_of_digest[sha256_hex(bytes)] = cls;
    lines += json{{"id", id}, {"path", "images/" + id + ".png"}, {"label", cls}, {"synthetic_class", cls}}.dump() +
             "\n";
    records.push_back(ImageRecord{id, file, cls});
    truth[id] = cls;
  };
  // Interleave classes so manifest order is not grouped by label.
  for (int k = 0; k < disc_per_class; ++k) {
    for (std::size_t i = 0; i < classes.size(); ++i) {
      emit(classes[i], "d" + std::to_string(i) + "_" + std::to_string(k), disc_lines, c.disc, c.disc_truth);
    }
  }
  for (int k = 0; k < test_per_class; ++k) {
    for (std::size_t i = 0; i < classes.size(); ++i) {
      emit(classes[i], "t" + std::to_string(i) + "_" + std::to_string(k), test_lines, c.test, c.truth);
    }
  }
  write_file_atomic(c.disc_manifest, disc_lines);
  write_file_atomic(c.test_manifest, test_lines);
  return c;
}

const std::vector<std::string>& bird_names() {
  static const std::vector<std::string> names{"Northern Cardinal", "Blue Jay",      "American Robin", "Mallard",
                                              "Barn Owl",          "Snowy Egret",   "House Sparrow",  "Bald Eagle",
                                              "Common Raven",      "Rock Pigeon"};
  return names;
}

std::string bird_meta_reply() {
  return "{\n"
         "    \"category_singular\": \"bird\",\n"
         "    \"category_plural\": \"birds\",\n"
         "    \"unit_singular\": \"species\",\n"
         "    \"unit_plural\": \"species\",\n"
         "    \"expert_name\": \"ornithologist\"\n"
         "}";
}

ScriptedChatProvider::ScriptedChatProvider(std::map<std::string, std::string> class_of_digest,
                                           std::map<std::string, std::string> renames)
    : class_of_digest_(std::move(class_of_digest)), renames_(std::move(renames)) {}

std::size_t ScriptedChatProvider::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

ChatResponse ScriptedChatProvider::send(const ChatRequest& request) {
  {
    std::lock_guard lock(mu_);
    ++calls_;
  }
  std::string text;
  std::vector<const ImagePart*> images;
  for (const auto& m : request.messages) {
    for (const auto& p : m.parts) {
      if (auto* t = std::get_if<TextPart>(&p)) text += t->text;
      if (auto* i = std::get_if<ImagePart>(&p)) images.push_back(i);
    }
  }
  ChatResponse resp;
  if (text.find("category_singular") != std::string::npos) {
    resp.text = "Here is the information:\n" + bird_meta_reply();
  } else if (images.size() == 1) {
    const std::string cls = class_of_digest_.at(sha256_hex(images.front()->bytes));
    auto it = renames_.find(cls);
    resp.text = "The bird in this photo is most likely a " + (it == renames_.end() ? cls : it->second) +
                ", judging by its plumage.";
  } else if (text.rfind("Convert the below text", 0) == 0) {
    const std::string raw = text.substr(text.rfind("\n\n") + 2);
    const std::string prefix = "most likely a ";
    const auto start = raw.find(prefix) + prefix.size();
    const std::string name = raw.substr(start, raw.find(',', start) - start);
    resp.text = "{1: '" + name + "'}";
  } else {
    throw Error(ErrorKind::request, "scripted provider cannot answer this request");
  }
  return resp;
}

json synthetic_slot(const std::vector<std::string>& classes, std::size_t dim, double noise, std::uint64_t seed) {
  json anchors = json::object();
  for (std::size_t i = 0; i < classes.size(); ++i) anchors[classes[i]] = json{{"axis", i}};
  return json{{"base_url", "synthetic"},
              {"synthetic", {{"dim", dim}, {"noise", noise}, {"seed", seed}, {"anchors", anchors}}}};
}

json base_config(const fs::path& mock_session, const json& slot) {
  return json{{"chat", {{"mock_session", mock_session.string()}, {"model_id", "scripted-lmm"}}},
              {"classify_provider", slot},
              {"alpha", 0.7},
              {"augmentation", {{"count", 10}}},
              {"seeds", {{"context_seed", 11}, {"augment_seed", 12}, {"corruption_seed", 13}}},
              {"retry", {{"max_attempts", 1}, {"base_delay_s", 0.0}}}};
}

void record_session(const Corpus& corpus, const json& config, const fs::path& session_path,
                    std::map<std::string, std::string> renames) {
  const RunConfig rc = parse_config(config, session_path.parent_path());
  auto scripted = std::make_shared<ScriptedChatProvider>(corpus.class_of_digest, std::move(renames));
  auto recorder = std::make_shared<RecordingChatProvider>(scripted);
  ChatGatewayOptions opts;
  opts.retry.max_attempts = 1;
  ChatGateway gateway(recorder, opts);
  try {
    run_discovery(gateway, corpus.disc, discovery_settings(rc));
  } catch (const Error& e) {
    // An all-generic session is still worth replaying.
    if (e.kind() != ErrorKind::empty_vocabulary) throw;
  }
  recorder->save_session(session_path);
}

void write_json(const fs::path& path, const json& doc) { write_file_atomic(path, doc.dump(2) + "\n"); }

CliResult cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  CliResult r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  std::istringstream lines(r.out);
  std::string line, last;
  while (std::getline(lines, line)) {
    if (!line.empty()) last = line;
  }
  r.summary = last.empty() ? json() : json::parse(last, nullptr, false);
  return r;
}

}  // namespace findr::testing
