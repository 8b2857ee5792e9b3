#include "findr/cli.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>

#include "findr/chat_gateway.hpp"
#include "findr/classifier_builder.hpp"
#include "findr/embedding_gateway.hpp"
#include "findr/error.hpp"
#include "findr/evaluation.hpp"
#include "findr/inference.hpp"
#include "findr/name_discovery.hpp"
#include "findr/parallel.hpp"
#include "findr/refinement.hpp"
#include "findr/run_config.hpp"
#include "findr/synthetic_provider.hpp"
#include "findr/util.hpp"

namespace findr {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Advisory, fail-fast ownership of a run directory.
class RunLock {
 public:
  explicit RunLock(const fs::path& path) {
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error(ErrorKind::validation, "cannot open lock file " + path.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      throw Error(ErrorKind::busy, "run directory is in use by another command (" + path.string() + ")");
    }
  }
  ~RunLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  int fd_ = -1;
};

std::string pretty(const json& j) { return j.dump(2) + "\n"; }

class Run {
 public:
  Run(const fs::path& dir, const std::string& config_flag) : dir_(dir) {
    fs::create_directories(dir_);
    lock_ = std::make_unique<RunLock>(dir_ / ".lock");
    const fs::path lock_file = dir_ / "config.lock.json";
    if (!config_flag.empty()) {
      config_ = load_config(config_flag);
      const std::string snapshot = pretty(to_json(config_));
      if (fs::exists(lock_file) && read_file(lock_file) != snapshot) {
        throw Error(ErrorKind::configuration,
                    "run directory is locked to a different configuration (config.lock.json); use a new --run");
      }
      write_file_atomic(lock_file, snapshot);
    } else {
      if (!fs::exists(lock_file)) {
        throw Error(ErrorKind::missing_artifact,
                    "missing config.lock.json in " + dir_.string() + "; pass --config on the first command");
      }
      json doc = json::parse(read_file(lock_file), nullptr, false);
      if (doc.is_discarded()) throw Error(ErrorKind::configuration, "config.lock.json is not valid JSON");
      config_ = parse_config(doc, dir_);
    }
  }

  const RunConfig& config() const { return config_; }

  fs::path path(const std::string& name) const { return dir_ / name; }

  fs::path require(const std::string& name) const {
    const fs::path p = path(name);
    if (!fs::exists(p)) {
      throw Error(ErrorKind::missing_artifact, "missing upstream artifact " + name + " in " + dir_.string());
    }
    return p;
  }

  json read_json(const std::string& name) const {
    json doc = json::parse(read_file(require(name)), nullptr, false);
    if (doc.is_discarded()) throw Error(ErrorKind::validation, name + " is not valid JSON");
    return doc;
  }

  void write(const std::string& name, std::string_view content) const { write_file_atomic(path(name), content); }

  RetryPolicy retry() const {
    RetryPolicy p;
    p.max_attempts = config_.max_attempts;
    p.base_delay = std::chrono::milliseconds(static_cast<long long>(config_.base_delay_s * 1000.0));
    return p;
  }

  ChatGateway& chat() {
    if (chat_) return *chat_;
    const ChatConfig& c = config_.chat;
    std::shared_ptr<ChatProvider> provider;
    if (c.mock_session) {
      provider = MockChatProvider::from_session_file(*c.mock_session);
    } else if (c.base_url) {
      const char* key = std::getenv(c.api_key_env.c_str());
      if (!key || !*key) throw Error(ErrorKind::configuration, "environment variable " + c.api_key_env + " is not set");
      HttpChatConfig http{*c.base_url, key, c.options, std::chrono::seconds(c.timeout_s)};
      provider = std::make_shared<HttpChatProvider>(std::move(http));
      chat_is_remote_ = true;
    } else {
      throw Error(ErrorKind::configuration, "chat needs base_url or mock_session");
    }
    ChatGatewayOptions opts;
    opts.cache_dir = dir_ / "cache" / "chat";
    opts.retry = retry();
    opts.max_in_flight = config_.max_in_flight;
    opts.rate_per_second = config_.rate_per_second;
    opts.burst = config_.burst;
    chat_ = std::make_unique<ChatGateway>(std::move(provider), std::move(opts));
    return *chat_;
  }

  EmbeddingGateway& embed(const ProviderSlot& slot) {
    const std::string key = slot.to_json().dump();
    if (auto it = embed_.find(key); it != embed_.end()) return *it->second.gateway;
    std::shared_ptr<EmbeddingProvider> provider;
    if (slot.synthetic) {
      provider = std::make_shared<SyntheticProvider>(*slot.plan);
    } else {
      provider = std::make_shared<RemoteEmbeddingProvider>(
          RemoteEmbeddingConfig{slot.base_url, slot.model_id, std::chrono::seconds(slot.timeout_s)});
    }
    EmbeddingGatewayOptions opts;
    opts.cache_dir = dir_ / "cache" / "embed";
    opts.input_size = slot.input_size;
    opts.batch_size = slot.batch_size;
    opts.max_in_flight = config_.max_in_flight;
    opts.retry = retry();
    auto& entry = embed_[key];
    entry.gateway = std::make_unique<EmbeddingGateway>(std::move(provider), std::move(opts));
    entry.remote = !slot.synthetic;
    return *entry.gateway;
  }

  /// Call counters merged into every summary line.
  void add_counters(json& summary) const {
    const std::size_t chat_calls = chat_ ? chat_->network_calls() : 0;
    std::size_t embed_calls = 0;
    std::size_t network = chat_is_remote_ ? chat_calls : 0;
    for (const auto& [key, entry] : embed_) {
      embed_calls += entry.gateway->provider_calls();
      if (entry.remote) network += entry.gateway->provider_calls();
    }
    summary["chat_calls"] = chat_calls;
    summary["embed_calls"] = embed_calls;
    summary["network_calls"] = network;
  }

 private:
  struct EmbedEntry {
    std::unique_ptr<EmbeddingGateway> gateway;
    bool remote = false;
  };

  fs::path dir_;
  std::unique_ptr<RunLock> lock_;
  RunConfig config_;
  std::unique_ptr<ChatGateway> chat_;
  bool chat_is_remote_ = false;
  std::map<std::string, EmbedEntry> embed_;
};

struct Options {
  std::string images;
  std::string discovery;
  std::string run;
  std::string config;
  std::optional<std::size_t> context_size;
  std::optional<std::uint64_t> seed;
  bool lenient = false;
  double from = 0.0;
  double to = 1.0;
  double step = 0.1;
  std::vector<double> fractions;
  std::vector<std::string> modes;
};

std::vector<std::string> read_names(const json& doc, const std::string& file) {
  if (!doc.contains("names") || !doc["names"].is_array() || doc["names"].empty()) {
    throw Error(ErrorKind::validation, file + " has no names");
  }
  return doc["names"].get<std::vector<std::string>>();
}

BuildSettings build_settings(const RunConfig& c) {
  BuildSettings s;
  s.alpha = c.alpha;
  s.policy = c.augmentation_policy();
  s.renormalize_visual = c.renormalize_visual;
  s.concurrency = c.max_in_flight;
  return s;
}

json cmd_discover(Run& run, const Options& o) {
  const RunConfig& c = run.config();
  const auto images = load_manifest(o.images);
  DiscoverySettings s = discovery_settings(c);
  if (o.context_size) s.context_size = *o.context_size;
  if (o.seed) s.context_seed = *o.seed;
  const DiscoveryResult r = run_discovery(run.chat(), images, s);

  run.write("meta.json", pretty(json{{"meta", r.meta},
                                     {"context_ids", r.context_ids},
                                     {"context_seed", r.seed},
                                     {"context_size", s.context_size}}));
  std::string jsonl;
  std::size_t unnamed = 0;
  for (const auto& e : r.vocabulary.entries) {
    jsonl += json{{"image_id", e.image_id},
                  {"raw_text_sha256", e.raw_text_sha256},
                  {"name", e.name ? json(*e.name) : json()}}
                 .dump() +
             "\n";
    if (!e.name) ++unnamed;
  }
  run.write("candidates.jsonl", jsonl);
  run.write("vocabulary.json", pretty(json{{"names", r.vocabulary.names}, {"meta", r.meta}}));
  return json{{"images", images.size()}, {"names", r.vocabulary.names.size()}, {"unnamed_images", unnamed}};
}

json cmd_refine(Run& run, const Options& o) {
  const auto names = read_names(run.read_json("vocabulary.json"), "vocabulary.json");
  const auto disc = load_manifest(o.images);
  const RunConfig& c = run.config();
  const RefinedVocabulary v = refine(run.embed(c.refine_provider), names, disc, c.retention, c.max_in_flight);
  run.write("refined.json", pretty(json(v)));
  return json{{"candidates", names.size()}, {"retained", v.names.size()}};
}

json cmd_build(Run& run, const Options& o) {
  const RefinedVocabulary v = run.read_json("refined.json").get<RefinedVocabulary>();
  const auto disc = load_manifest(o.images);
  const RunConfig& c = run.config();
  const CoupledClassifier clf = build_classifier(run.embed(c.classify_provider), v.names, disc, build_settings(c));
  json doc = clf;
  doc["provenance"] = {{"refine_provider_model_id", v.provider_model_id},
                       {"classify_provider_model_id", clf.provider_model_id},
                       {"augment_seed", c.augment_seed},
                       {"discovery_images", disc.size()}};
  run.write("classifier.json", pretty(doc));
  std::size_t empty = 0;
  for (const auto& g : clf.groups) empty += g.image_ids.empty() ? 1 : 0;
  return json{{"classes", clf.names.size()}, {"empty_groups", empty}, {"alpha", clf.alpha}};
}

CoupledClassifier load_classifier(const Run& run) { return run.read_json("classifier.json").get<CoupledClassifier>(); }

json cmd_classify(Run& run, const Options& o) {
  const CoupledClassifier clf = load_classifier(run);
  const auto test = load_manifest(o.images, false);
  const RunConfig& c = run.config();
  const bool strict = c.strict && !o.lenient;
  const BatchResult r = classify_batch(run.embed(c.classify_provider), test, clf, strict, c.max_in_flight);
  run.write("predictions.jsonl", predictions_jsonl(r));
  return json{{"predictions", r.predictions.size()}, {"skipped", r.skipped.size()}};
}

json cmd_evaluate(Run& run, const Options& o) {
  const BatchResult preds = parse_predictions_jsonl(read_file(run.require("predictions.jsonl")));
  const auto truth = load_ground_truth(o.images);
  EvaluationReport report = evaluate(preds.predictions, truth, run.embed(run.config().judge_provider));
  report.n_skipped = preds.skipped.size();
  run.write("report.json", pretty(report_json(report)));
  return json{{"cacc", report.cacc}, {"sacc", report.sacc}, {"n_images", report.n_images}};
}

json cmd_ablate_alpha(Run& run, const Options& o) {
  const CoupledClassifier clf = load_classifier(run);
  const auto test = load_manifest(o.images);
  const auto truth = load_ground_truth(o.images);
  const auto grid = alpha_grid(o.from, o.to, o.step);
  const RunConfig& c = run.config();
  EmbeddingGateway& gw = run.embed(c.classify_provider);
  std::vector<std::optional<Embedding>> slots(test.size());
  parallel_for(test.size(), c.max_in_flight, [&](std::size_t i) { slots[i] = gw.embed_image(test[i]); });
  std::vector<Embedding> embeddings;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < test.size(); ++i) {
    embeddings.push_back(std::move(*slots[i]));
    ids.push_back(test[i].id);
  }
  const auto points = alpha_sweep(clf, ids, embeddings, truth, run.embed(c.judge_provider), grid);
  run.write("ablate_alpha.csv", alpha_csv(points));
  return json{{"rows", points.size()}};
}

json cmd_ablate_robustness(Run& run, const Options& o) {
  const RefinedVocabulary v = run.read_json("refined.json").get<RefinedVocabulary>();
  const MetaInfo meta = run.read_json("meta.json").at("meta").get<MetaInfo>();
  const auto disc = load_manifest(o.discovery);
  const auto test = load_manifest(o.images);
  const auto truth = load_ground_truth(o.images);
  const RunConfig& c = run.config();
  RobustnessSettings s;
  if (!o.fractions.empty()) s.fractions = o.fractions;
  if (!o.modes.empty()) {
    s.modes.clear();
    for (const auto& m : o.modes) s.modes.push_back(corruption_mode_from(m));
  }
  s.seed = c.corruption_seed;
  s.generic_word = normalize_name(meta.category_singular).value_or(meta.category_singular);
  s.build = build_settings(c);
  const auto rows =
      robustness_sweep(run.embed(c.classify_provider), run.embed(c.judge_provider), v.names, disc, test, truth, s);
  run.write("ablate_robustness.csv", robustness_csv(rows));
  return json{{"rows", rows.size()}};
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Vocabulary-free image classification pipeline", "findr"};
  app.require_subcommand(1);
  Options o;

  auto add_run = [&](CLI::App* cmd) {
    cmd->add_option("--run", o.run, "Run directory")->required();
    cmd->add_option("--config", o.config, "Config file (snapshotted to config.lock.json)");
  };
  auto add_images = [&](CLI::App* cmd, const std::string& help) {
    cmd->add_option("--images", o.images, help)->required();
  };

  auto* discover = app.add_subcommand("discover", "Induce the candidate vocabulary from unlabeled images");
  add_images(discover, "Discovery manifest (JSONL)");
  add_run(discover);
  discover->add_option("--context-size", o.context_size, "Images shown with the meta prompt");
  discover->add_option("--seed", o.seed, "Context selection seed");

  auto* refine_cmd = app.add_subcommand("refine", "Rank candidate names against the discovery images");
  add_images(refine_cmd, "Discovery manifest (JSONL)");
  add_run(refine_cmd);

  auto* build = app.add_subcommand("build", "Build the coupled vision-language classifier");
  add_images(build, "Discovery manifest (JSONL)");
  add_run(build);

  auto* classify_cmd = app.add_subcommand("classify", "Classify test images");
  add_images(classify_cmd, "Test manifest (JSONL)");
  add_run(classify_cmd);
  classify_cmd->add_flag("--lenient", o.lenient, "Record unreadable images instead of aborting");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score predictions against manifest labels");
  add_images(evaluate_cmd, "Labeled test manifest (JSONL)");
  add_run(evaluate_cmd);

  auto* ablate = app.add_subcommand("ablate", "Ablation sweeps");
  ablate->require_subcommand(1);
  auto* alpha = ablate->add_subcommand("alpha", "Sweep the coupling coefficient");
  add_images(alpha, "Labeled test manifest (JSONL)");
  add_run(alpha);
  alpha->add_option("--from", o.from, "First alpha")->capture_default_str();
  alpha->add_option("--to", o.to, "Last alpha")->capture_default_str();
  alpha->add_option("--step", o.step, "Grid step")->capture_default_str();
  auto* robustness = ablate->add_subcommand("robustness", "Corrupt the vocabulary and rebuild");
  robustness->add_option("--discovery", o.discovery, "Discovery manifest (JSONL)")->required();
  add_images(robustness, "Labeled test manifest (JSONL)");
  add_run(robustness);
  robustness->add_option("--fractions", o.fractions, "Corruption fractions")->delimiter(',');
  robustness->add_option("--modes", o.modes, "generic, mispredict, noise")->delimiter(',');

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  std::string name;
  json (*fn)(Run&, const Options&) = nullptr;
  if (discover->parsed()) {
    name = "discover", fn = cmd_discover;
  } else if (refine_cmd->parsed()) {
    name = "refine", fn = cmd_refine;
  } else if (build->parsed()) {
    name = "build", fn = cmd_build;
  } else if (classify_cmd->parsed()) {
    name = "classify", fn = cmd_classify;
  } else if (evaluate_cmd->parsed()) {
    name = "evaluate", fn = cmd_evaluate;
  } else if (alpha->parsed()) {
    name = "ablate alpha", fn = cmd_ablate_alpha;
  } else {
    name = "ablate robustness", fn = cmd_ablate_robustness;
  }

  try {
    Run run(o.run, o.config);
    json summary = {{"command", name}, {"status", "ok"}, {"run", o.run}};
    try {
      summary.update(fn(run, o));
    } catch (const Error&) {
      json counters;
      run.add_counters(counters);
      err << "findr: calls before failure: " << counters.dump() << "\n";
      throw;
    }
    run.add_counters(summary);
    out << summary.dump() << "\n";
    return 0;
  } catch (const Error& e) {
    err << "findr " << name << ": " << to_string(e.kind()) << " error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "findr " << name << ": " << e.what() << "\n";
    return 1;
  }
}

}  // namespace findr
