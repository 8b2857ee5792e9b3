// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "findr/classifier_builder.hpp"
#include "findr/embedding_gateway.hpp"
#include "findr/evaluation.hpp"
#include "findr/inference.hpp"
#include "findr/name_discovery.hpp"
#include "findr/refinement.hpp"
#include "findr/run_config.hpp"
#include "findr/synthetic_provider.hpp"
#include "findr/util.hpp"
#include "support/fixtures.hpp"

using namespace findr;
using namespace findr::testing;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;
using Table = std::vector<std::vector<long long>>;

struct Outcome {
  bool ok = true;
  std::ostringstream why;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      why << what;
    }
  }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string secs(double s) {
  std::ostringstream out;
  out.precision(3);
  out << std::fixed << s;
  return out.str();
}

EmbeddingGateway gateway_for(SyntheticPlan plan) {
  EmbeddingGatewayOptions opts;
  opts.sleeper = [](std::chrono::milliseconds) {};
  return EmbeddingGateway(std::make_shared<SyntheticProvider>(std::move(plan)), opts);
}

// ---------------------------------------------------------------------------

long long brute_force(const Table& w) {
  const std::size_t r = w.size(), c = w[0].size(), n = std::max(r, c);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  long long best = 0;
  do {
    long long s = 0;
    for (std::size_t i = 0; i < r; ++i) {
      if (perm[i] < c) s += w[i][perm[i]];
    }
    best = std::max(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

bool check_table(const Table& w, Outcome& o) {
  ContingencyTable t;
  for (std::size_t i = 0; i < w.size(); ++i) {
    t.rows.push_back("p" + std::to_string(i));
    t.row_class_index.push_back(i);
  }
  for (std::size_t j = 0; j < w[0].size(); ++j) t.cols.push_back("g" + std::to_string(j));
  t.counts = w;
  const long long total = t.total();
  const long long best = brute_force(w);
  if (total == 0) return true;
  const auto res = clustering_accuracy(t);
  long long mapped = 0;
  for (const auto& [i, j] : res.mapping.pairs) mapped += w[i][j];
  const bool ok = res.cacc == static_cast<double>(best) / static_cast<double>(total) && mapped == best;
  o.require(ok, "mismatch against brute force");
  return ok;
}

Outcome assignment_oracle() {
  Outcome o;
  const auto t0 = Clock::now();
  Table w(3, std::vector<long long>(4));
  for (int mask = 0; mask < (1 << 12) && o.ok; ++mask) {
    for (int k = 0; k < 12; ++k) w[k / 4][k % 4] = (mask >> k) & 1;
    check_table(w, o);
  }
  std::mt19937 gen(500);
  std::uniform_int_distribution<int> size(1, 5), v(0, 4);
  for (int trial = 0; trial < 500 && o.ok; ++trial) {
    Table r(size(gen), std::vector<long long>(size(gen)));
    for (auto& row : r)
      for (auto& x : row) x = v(gen);
    check_table(r, o);
  }
  const double s = seconds_since(t0);
  o.require(s < 30.0, "took " + std::to_string(s) + " s");
  o.why << (o.ok ? "4096 binary 3x4 + 500 random tables in " + secs(s) + " s" : "");
  return o;
}

// ---------------------------------------------------------------------------

Outcome score_oracle() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937 gen(200);
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::uniform_int_distribution<int> cands(1, 8), imgs(1, 16);
  const std::size_t dims[] = {3, 8, 512};
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = dims[trial % 3];
    auto draw = [&] {
      std::vector<float> v(d);
      for (auto& x : v) x = n(gen);
      return Embedding(std::move(v));
    };
    std::vector<std::string> names;
    std::vector<Embedding> t, v;
    for (int c = cands(gen); c > 0; --c) {
      names.push_back("c" + std::to_string(c));
      t.push_back(draw());
    }
    for (int j = imgs(gen); j > 0; --j) v.push_back(draw());
    const auto got = score_candidates(names, t, v);
    for (std::size_t c = 0; c < t.size(); ++c) {
      double total = 0;
      for (std::size_t j = 0; j < v.size(); ++j) {
        double dd = 0, a = 0, b = 0;
        for (std::size_t k = 0; k < d; ++k) {
          dd += double(t[c][k]) * double(v[j][k]);
          a += double(t[c][k]) * double(t[c][k]);
          b += double(v[j][k]) * double(v[j][k]);
        }
        total += dd / std::sqrt(a * b);
      }
      worst = std::max(worst, std::abs(got[c].score - total / double(v.size())));
      o.require(got[c].name == names[c], "output not aligned with candidates");
    }
  }
  const double s = seconds_since(t0);
  o.require(worst <= 1e-6, "max deviation " + std::to_string(worst));
  o.require(s < 5.0, "took " + std::to_string(s) + " s");
  if (o.ok) o.why << "200 instances, max deviation " << worst << ", " << secs(s) << " s";
  return o;
}

// ---------------------------------------------------------------------------

struct EndToEnd {
  TempDir dir;
  Corpus corpus;
  fs::path run;
  fs::path config;
  std::vector<CliResult> results;
  double seconds = 0;

  bool stage(const std::vector<std::string>& args) {
    results.push_back(cli(args));
    if (results.back().code != 0) std::cerr << results.back().err;
    return results.back().code == 0;
  }

  bool chain() {
    const std::string r = run.string(), d = corpus.disc_manifest.string(), t = corpus.test_manifest.string();
    return stage({"discover", "--run", r, "--images", d, "--config", config.string()}) &&
           stage({"refine", "--run", r, "--images", d}) && stage({"build", "--run", r, "--images", d}) &&
           stage({"classify", "--run", r, "--images", t}) && stage({"evaluate", "--run", r, "--images", t});
  }

  long long sum(const char* counter, std::size_t from) const {
    long long s = 0;
    for (std::size_t i = from; i < results.size(); ++i) s += results[i].summary.value(counter, 0LL);
    return s;
  }
};

EndToEnd& e2e() {
  static EndToEnd* run = [] {
    auto* e = new EndToEnd;
    e->corpus = make_corpus(e->dir.path, bird_names(), 3, 10);
    const json cfg = base_config(e->dir.path / "session.json", synthetic_slot(bird_names(), 32, 0.05));
    record_session(e->corpus, cfg, e->dir.path / "session.json");
    e->config = e->dir.path / "config.json";
    write_json(e->config, cfg);
    e->run = e->dir.path / "run";
    return e;
  }();
  return *run;
}

Outcome end_to_end() {
  Outcome o;
  EndToEnd& e = e2e();
  const auto t0 = Clock::now();
  const bool ran = e.chain();
  e.seconds = seconds_since(t0);
  o.require(ran, "a pipeline stage failed");
  if (!ran) return o;
  const json report = json::parse(read_file(e.run / "report.json"));
  const json cfg = json::parse(read_file(e.run / "config.lock.json"));
  o.require(cfg["alpha"] == 0.7 && cfg["augmentation"]["count"] == 10, "unexpected alpha or K");
  o.require(report["cacc"].get<double>() == 1.0, "cacc " + report["cacc"].dump());
  o.require(report["sacc"].get<double>() == 1.0, "sacc " + report["sacc"].dump());
  o.require(report["n_images"] == 100, "n_images " + report["n_images"].dump());
  o.require(e.sum("network_calls", 0) == 0, "network calls made");
  o.require(e.seconds < 10.0, "took " + std::to_string(e.seconds) + " s");
  if (o.ok) o.why << "cacc=1 sacc=1 on 100 test images, 0 network calls, " << secs(e.seconds) << " s";
  return o;
}

Outcome alpha_endpoints() {
  Outcome o;
  EndToEnd& e = e2e();
  if (!fs::exists(e.run / "classifier.json")) {
    o.require(false, "no built run");
    return o;
  }
  const auto clf = json::parse(read_file(e.run / "classifier.json")).get<CoupledClassifier>();
  const RunConfig rc = load_config(e.run / "config.lock.json");
  auto gw = gateway_for(*rc.classify_provider.plan);
  std::vector<std::string> ids;
  std::vector<Embedding> embs;
  for (const auto& r : e.corpus.test) {
    ids.push_back(r.id);
    embs.push_back(gw.embed_image(r));
  }
  std::vector<Embedding> visual;
  bool any_visual = false;
  for (std::size_t c = 0; c < clf.names.size(); ++c) {
    visual.push_back(clf.visual_prototypes[c] ? *clf.visual_prototypes[c] : clf.text_prototypes[c]);
    any_visual = any_visual || clf.visual_prototypes[c].has_value();
  }
  o.require(any_visual, "classifier has no visual prototypes");
  const std::vector<double> grid{0.0, 1.0};
  const auto points = alpha_sweep(clf, ids, embs, e.corpus.truth, gw, grid);
  std::size_t compared = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    o.require(points[0].predictions[i].class_index == argmax_cosine(embs[i], visual), "alpha=0 differs at " + ids[i]);
    o.require(points[1].predictions[i].class_index == argmax_cosine(embs[i], clf.text_prototypes),
              "alpha=1 differs at " + ids[i]);
    ++compared;
  }
  // The CLI sweep reports the same endpoint metrics.
  CliResult r = cli({"ablate", "alpha", "--run", e.run.string(), "--images", e.corpus.test_manifest.string(), "--from",
                     "0", "--to", "1", "--step", "1"});
  o.require(r.code == 0, "ablate alpha failed: " + r.err);
  if (r.code == 0) o.require(read_file(e.run / "ablate_alpha.csv") == alpha_csv(points), "CLI csv differs");
  if (o.ok) o.why << compared << " images agree at both endpoints";
  return o;
}

// ---------------------------------------------------------------------------

Outcome coupling_rescue() {
  Outcome o;
  const auto t0 = Clock::now();
  TempDir dir;
  std::vector<std::string> classes;
  for (int i = 0; i < 10; ++i) classes.push_back("Class " + std::string(1, char('A' + i)));

  // Part 1: slot 0 carries class B's name. Noise 0 makes the text-only
  // confusion exact: A and B test images tie on slots 0 and 1.
  {
    const auto corpus = make_corpus(dir.path / "rescue", classes, 3, 10);
    auto gw = gateway_for(synthetic_plan_from_json(synthetic_slot(classes, 32, 0.0)["synthetic"]));
    auto vocab = classes;
    vocab[0] = classes[1];
    const auto clf = build_classifier(gw, vocab, corpus.disc, BuildSettings{});
    std::vector<std::string> ids;
    std::vector<Embedding> embs;
    for (const auto& r : corpus.test) {
      ids.push_back(r.id);
      embs.push_back(gw.embed_image(r));
    }
    const std::vector<double> grid{0.7, 1.0};
    const auto pts = alpha_sweep(clf, ids, embs, corpus.truth, gw, grid);
    o.require(pts[0].report.cacc > pts[1].report.cacc, "no rescue: cacc(0.7)=" + format_real(pts[0].report.cacc) +
                                                           " cacc(1.0)=" + format_real(pts[1].report.cacc));
    o.why << "rescue cacc(0.7)=" << format_real(pts[0].report.cacc) << " > cacc(1)=" << format_real(pts[1].report.cacc);
  }

  // Part 2: three synonyms per class share its anchor, so losing one name
  // costs nothing; the generic word sits at the centroid of all anchors.
  {
    SyntheticPlan plan;
    plan.dim = 32;
    plan.noise = 0.0;
    plan.seed = 7;
    std::vector<std::string> names;
    std::vector<float> centroid(32, 0.0f);
    for (std::size_t i = 0; i < classes.size(); ++i) {
      for (const char* suffix : {"", " Major", " Minor"}) {
        names.push_back(classes[i] + suffix);
        plan.anchors.emplace(names.back(), axis_vector(32, i));
      }
      centroid[i] = 1.0f;
    }
    plan.anchors.emplace("Thing", l2_normalize(Embedding(centroid)));
    const auto corpus = make_corpus(dir.path / "robust", classes, 3, 10);
    auto gw = gateway_for(plan);
    RobustnessSettings s;
    s.fractions = {0.0, 0.5};
    s.seed = 13;
    s.generic_word = "Thing";
    s.build.policy.count = 10;
    s.build.policy.seed = 12;
    const auto rows = robustness_sweep(gw, gw, names, corpus.disc, corpus.test, corpus.truth, s);
    for (auto mode : s.modes) {
      double base = -1, half = -1;
      for (const auto& r : rows) {
        if (r.mode != mode) continue;
        (r.fraction == 0.0 ? base : half) = r.cacc;
      }
      // The instance must actually be damaged: half the names replaced.
      const auto corrupted = corrupt_vocabulary(names, mode, 0.5, s.seed, s.generic_word);
      std::size_t replaced = 0, lost = 0;
      for (std::size_t k = 0; k < names.size(); ++k) replaced += corrupted[k] != names[k] ? 1 : 0;
      for (std::size_t i = 0; i < classes.size(); ++i) {
        bool survives = false;
        for (std::size_t k = 3 * i; k < 3 * i + 3; ++k) survives = survives || corrupted[k] == names[k];
        lost += survives ? 0 : 1;
      }
      o.require(replaced == 15, std::string(to_string(mode)) + " replaced " + std::to_string(replaced) + " names");
      o.require(base > 0 && half >= 0.8 * base, std::string(to_string(mode)) + ": cacc(0.5)=" + format_real(half) +
                                                    " cacc(0)=" + format_real(base));
      if (o.ok) {
        o.why << "; " << to_string(mode) << " " << format_real(half) << "/" << format_real(base) << " (" << lost
              << " classes lost every name)";
      }
    }
  }
  const double s = seconds_since(t0);
  if (o.ok) o.why << "; " << secs(s) << " s";
  return o;
}

// ---------------------------------------------------------------------------

Outcome normalization() {
  Outcome o;
  const std::vector<std::pair<std::string, std::string>> golden{
      {"  northern   cardinal ", "Northern Cardinal"},
      {"blue\tjay\n", "Blue Jay"},
      {"AMERICAN GOLDFINCH", "American Goldfinch"},
      {"BMW M3 coupe", "BMW M3 Coupe"},
      {"Audi TT RS", "Audi TT RS"},
      {"Ford F-150 SUV", "Ford F-150 SUV"},
      {"sunflowers", "Sunflower"},
      {"Daisies", "Daisy"},
      {"arctic foxes", "Arctic Fox"},
      {"house finches", "House Finch"},
      {"wood thrushes", "Wood Thrush"},
      {"sea grasses", "Sea Grass"},
      {"Bird Species", "Bird Species"},
      {"hibiscus", "Hibiscus"},
      {"bearded iris", "Bearded Iris"},
      {"Anna's Hummingbird!", "Anna's Hummingbird"},
      {"Great-tailed Grackle", "Great-tailed Grackle"},
      {"Rose (Rosa canina)", "Rose Rosa Canina"},
      {"Mr. Lincoln rose", "Mr. Lincoln Rose"},
      {"Boeing 747", "Boeing 747"},
  };
  for (const auto& [in, want] : golden) {
    const auto got = normalize_name(in);
    o.require(got == want, "'" + in + "' -> '" + got.value_or("<none>") + "'");
  }
  std::mt19937_64 gen(20240501);
  const std::string alphabet = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 -'.\t!()_,sS";
  std::uniform_int_distribution<std::size_t> len(0, 24), pick(0, alphabet.size() - 1);
  for (int i = 0; i < 1000; ++i) {
    std::string s;
    for (std::size_t n = len(gen); n > 0; --n) s.push_back(alphabet[pick(gen)]);
    const auto once = normalize_name(s);
    if (once) o.require(normalize_name(*once) == once, "not idempotent on '" + s + "'");
  }
  if (o.ok) o.why << "20 golden pairs, 1000 fuzzed strings idempotent";
  return o;
}

Outcome determinism() {
  Outcome o;
  EndToEnd& e = e2e();
  const char* files[] = {"vocabulary.json", "refined.json", "classifier.json", "predictions.jsonl"};
  std::vector<std::string> before;
  for (const char* f : files) {
    if (!fs::exists(e.run / f)) {
      o.require(false, std::string("missing ") + f);
      return o;
    }
    before.push_back(read_file(e.run / f));
  }
  const std::size_t mark = e.results.size();
  const std::string r = e.run.string(), d = e.corpus.disc_manifest.string(), t = e.corpus.test_manifest.string();
  const bool ran = e.stage({"discover", "--run", r, "--images", d, "--config", e.config.string()}) &&
                   e.stage({"refine", "--run", r, "--images", d}) && e.stage({"build", "--run", r, "--images", d}) &&
                   e.stage({"classify", "--run", r, "--images", t});
  o.require(ran, "second pass failed");
  for (std::size_t i = 0; i < 4 && ran; ++i) o.require(read_file(e.run / files[i]) == before[i], std::string(files[i]) + " changed");
  o.require(e.sum("network_calls", mark) == 0, "network calls on second pass");
  o.require(e.sum("chat_calls", mark) == 0 && e.sum("embed_calls", mark) == 0, "provider calls on second pass");
  if (o.ok) o.why << "4 artifacts byte-identical, 0 provider calls on warm pass";
  return o;
}

Outcome prompt_fidelity() {
  Outcome o;
  TempDir dir;
  write_file_atomic(dir.path / "a.png", make_png(16, 16, 1));
  const std::vector<ImageRecord> imgs{{"a", dir.path / "a.png", std::nullopt}};
  auto text_of = [](const ChatRequest& r) {
    std::string s;
    for (const auto& m : r.messages)
      for (const auto& p : m.parts)
        if (const auto* t = std::get_if<TextPart>(&p)) s += t->text;
    return s;
  };
  ChatSettings cs{"m", std::nullopt, 0};
  const MetaInfo bird{"bird", "birds", "species", "species", "ornithologist"};
  o.require(text_of(build_meta_prompt(imgs, 1, cs)).find("category_singular") != std::string::npos,
            "meta prompt lacks category_singular");
  o.require(text_of(build_service_prompt(RawPrediction{"a", "It is a Blue Jay."}, bird, cs))
                    .find("Convert the below text containing") != std::string::npos,
            "service prompt lacks its key phrase");
  o.require(parse_meta(ChatResponse{bird_meta_reply(), {}}) == bird, "published meta block parsed differently");
  if (o.ok) o.why << "key phrases present, published meta block parses to the ornithologist meta";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"assignment-oracle", assignment_oracle},
      {"score-oracle", score_oracle},
      {"end-to-end-synthetic-recovery", end_to_end},
      {"alpha-endpoints", alpha_endpoints},
      {"coupling-rescue-and-robustness", coupling_rescue},
      {"normalization-golden", normalization},
      {"determinism", determinism},
      {"prompt-protocol-fidelity", prompt_fidelity},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& ex) {
      o.ok = false;
      o.why << "threw: " << ex.what();
    }
    std::cout << (o.ok ? "PASS " : "FAIL ") << name << ": " << o.why.str() << std::endl;
    failed += o.ok ? 0 : 1;
  }
  std::cout << (failed == 0 ? "all acceptance criteria passed" : std::to_string(failed) + " criteria failed")
            << std::endl;
  return failed == 0 ? 0 : 1;
}
