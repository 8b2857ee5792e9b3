#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "findr/chat_gateway.hpp"
#include "findr/image.hpp"

namespace findr::testing {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  fs::path path;
};

/// Small image whose pixels (and therefore digest) depend on `seed`.
std::string make_png(int width, int height, std::uint64_t seed);
std::string make_jpeg(int width, int height, std::uint64_t seed);

struct Corpus {
  std::vector<std::string> classes;
  fs::path disc_manifest;
  fs::path test_manifest;
  std::vector<ImageRecord> disc;
  std::vector<ImageRecord> test;
  std::map<std::string, std::string> truth;       // test id -> class
  std::map<std::string, std::string> disc_truth;  // discovery id -> class
  std::map<std::string, std::string> class_of_digest;
};

/// Writes unique PNGs and JSONL manifests (labels and synthetic_class on
/// every row) under `root`.
Corpus make_corpus(const fs::path& root, const std::vector<std::string>& classes, int disc_per_class,
                   int test_per_class);

const std::vector<std::string>& bird_names();

/// The meta-prompt answer for a bird dataset, as printed in the published
/// prompt examples.
std::string bird_meta_reply();

/// Plays a cooperative chat model: answers the meta prompt with
/// bird_meta_reply(), names each image by its digest and converts its own
/// answers to a Python dictionary.
class ScriptedChatProvider final : public ChatProvider {
 public:
  explicit ScriptedChatProvider(std::map<std::string, std::string> class_of_digest,
                                std::map<std::string, std::string> renames = {});
  ChatResponse send(const ChatRequest& request) override;
  std::size_t calls() const;

 private:
  std::map<std::string, std::string> class_of_digest_;
  std::map<std::string, std::string> renames_;  // class -> name the model reports
  mutable std::mutex mu_;
  std::size_t calls_ = 0;
};

/// {"base_url":"synthetic", ...} slot with axis anchors for `classes`.
nlohmann::json synthetic_slot(const std::vector<std::string>& classes, std::size_t dim, double noise,
                              std::uint64_t seed = 7);

/// Config document using a mock session file and the given provider slot.
nlohmann::json base_config(const fs::path& mock_session, const nlohmann::json& slot);

/// Runs discovery against a ScriptedChatProvider with the settings the CLI
/// derives from `config`, and saves the exchange as a mock session.
void record_session(const Corpus& corpus, const nlohmann::json& config, const fs::path& session_path,
                    std::map<std::string, std::string> renames = {});

void write_json(const fs::path& path, const nlohmann::json& doc);

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
  nlohmann::json summary;  // parsed last stdout line, null if none
};

CliResult cli(const std::vector<std::string>& args);

}  // namespace findr::testing
