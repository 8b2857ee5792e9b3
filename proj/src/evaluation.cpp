#include "findr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "findr/error.hpp"
#include "findr/name_discovery.hpp"
#include "findr/rng.hpp"
#include "findr/util.hpp"

namespace findr {

using nlohmann::json;

Assignment max_weight_assignment(const std::vector<std::vector<long long>>& weights) {
  const std::size_t rows = weights.size();
  const std::size_t cols = rows == 0 ? 0 : weights.front().size();
  for (const auto& r : weights) {
    if (r.size() != cols) throw Error(ErrorKind::contract, "ragged weight matrix");
  }
  const std::size_t n = std::max(rows, cols);
  Assignment out;
  if (n == 0) return out;
  // Minimize the negated weights; padding cells cost 0.
  auto cost = [&](std::size_t i, std::size_t j) -> long long {
    return (i < rows && j < cols) ? -weights[i][j] : 0;
  };
  constexpr long long inf = std::numeric_limits<long long>::max() / 4;
  std::vector<long long> u(n + 1, 0), v(n + 1, 0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      long long delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const long long cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t i = p[j] - 1;
    if (i < rows && j - 1 < cols) {
      out.pairs.emplace_back(i, j - 1);
      out.total += weights[i][j - 1];
    }
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  return out;
}

long long ContingencyTable::total() const {
  long long t = 0;
  for (const auto& r : counts) {
    for (long long c : r) t += c;
  }
  return t;
}

void to_json(json& j, const ContingencyTable& t) {
  j = json{{"rows", t.rows}, {"row_class_index", t.row_class_index}, {"cols", t.cols}, {"counts", t.counts}};
}

void from_json(const json& j, ContingencyTable& t) {
  t.rows = j.at("rows").get<std::vector<std::string>>();
  t.row_class_index = j.at("row_class_index").get<std::vector<std::size_t>>();
  t.cols = j.at("cols").get<std::vector<std::string>>();
  t.counts = j.at("counts").get<std::vector<std::vector<long long>>>();
}

ContingencyTable contingency(std::span<const Prediction> predictions, const std::map<std::string, std::string>& truth) {
  std::vector<std::string> missing;
  std::map<std::size_t, std::string> slots;
  std::set<std::string> labels;
  for (const auto& p : predictions) {
    auto it = truth.find(p.image_id);
    if (it == truth.end()) {
      missing.push_back(p.image_id);
      continue;
    }
    slots.emplace(p.class_index, p.name);
    labels.insert(it->second);
  }
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) list += (i ? ", " : "") + missing[i];
    if (missing.size() > 20) list += ", ...";
    throw Error(ErrorKind::evaluation, std::to_string(missing.size()) + " prediction(s) lack ground truth: " + list);
  }
  ContingencyTable t;
  std::map<std::size_t, std::size_t> row_of;
  for (const auto& [idx, name] : slots) {
    row_of[idx] = t.rows.size();
    t.rows.push_back(name);
    t.row_class_index.push_back(idx);
  }
  t.cols.assign(labels.begin(), labels.end());
  t.counts.assign(t.rows.size(), std::vector<long long>(t.cols.size(), 0));
  for (const auto& p : predictions) {
    const auto col = std::lower_bound(t.cols.begin(), t.cols.end(), truth.at(p.image_id)) - t.cols.begin();
    ++t.counts[row_of.at(p.class_index)][static_cast<std::size_t>(col)];
  }
  return t;
}

ClusteringResult clustering_accuracy(const ContingencyTable& table) {
  const long long total = table.total();
  if (total <= 0) throw Error(ErrorKind::empty_input, "contingency table has no images");
  ClusteringResult r;
  r.mapping = max_weight_assignment(table.counts);
  r.cacc = static_cast<double>(r.mapping.total) / static_cast<double>(total);
  return r;
}

namespace {

std::string judge_form(const std::string& name) { return normalize_name(name).value_or(trim(name)); }

}  // namespace

double semantic_accuracy(std::span<const Prediction> predictions, const std::map<std::string, std::string>& truth,
                         EmbeddingGateway& judge) {
  if (predictions.empty()) throw Error(ErrorKind::empty_input, "no predictions to evaluate");
  std::vector<std::string> missing;
  std::vector<std::string> distinct;
  std::map<std::string, std::size_t> index;
  auto intern = [&](const std::string& s) {
    auto [it, fresh] = index.emplace(judge_form(s), distinct.size());
    if (fresh) distinct.push_back(it->first);
    return it->second;
  };
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& p : predictions) {
    auto it = truth.find(p.image_id);
    if (it == truth.end()) {
      missing.push_back(p.image_id);
      continue;
    }
    const std::size_t a = intern(p.name);
    const std::size_t b = intern(it->second);
    pairs.emplace_back(a, b);
  }
  if (!missing.empty()) {
    throw Error(ErrorKind::evaluation, std::to_string(missing.size()) + " prediction(s) lack ground truth, first: " +
                                           missing.front());
  }
  const auto vecs = judge.embed_texts(distinct);
  double sum = 0.0;
  for (const auto& [a, b] : pairs) sum += cosine(vecs[a], vecs[b]);
  return sum / static_cast<double>(pairs.size());
}

EvaluationReport evaluate(std::span<const Prediction> predictions, const std::map<std::string, std::string>& truth,
                          EmbeddingGateway& judge) {
  EvaluationReport r;
  r.table = contingency(predictions, truth);
  r.clustering = clustering_accuracy(r.table);
  r.cacc = r.clustering.cacc;
  r.sacc = semantic_accuracy(predictions, truth, judge);
  r.n_images = predictions.size();
  r.n_pred_classes = r.table.rows.size();
  r.n_gt_classes = r.table.cols.size();
  r.judge_model_id = judge.model_id();
  return r;
}

json report_json(const EvaluationReport& r) {
  json mapping = json::array();
  std::map<std::size_t, std::size_t> row_for_col;
  for (const auto& [row, col] : r.clustering.mapping.pairs) {
    row_for_col[col] = row;
    mapping.push_back(json{{"predicted", r.table.rows[row]},
                           {"class_index", r.table.row_class_index[row]},
                           {"ground_truth", r.table.cols[col]},
                           {"count", r.table.counts[row][col]}});
  }
  json per_class = json::array();
  for (std::size_t c = 0; c < r.table.cols.size(); ++c) {
    long long n = 0;
    for (const auto& row : r.table.counts) n += row[c];
    json entry = {{"ground_truth", r.table.cols[c]}, {"n_images", n}};
    if (auto it = row_for_col.find(c); it != row_for_col.end()) {
      entry["predicted"] = r.table.rows[it->second];
      entry["correct"] = r.table.counts[it->second][c];
    } else {
      entry["predicted"] = nullptr;
      entry["correct"] = 0;
    }
    entry["accuracy"] = n == 0 ? 0.0 : static_cast<double>(entry["correct"].get<long long>()) / n;
    per_class.push_back(std::move(entry));
  }
  return json{{"cacc", r.cacc},
              {"sacc", r.sacc},
              {"n_images", r.n_images},
              {"n_skipped", r.n_skipped},
              {"n_pred_classes", r.n_pred_classes},
              {"n_gt_classes", r.n_gt_classes},
              {"judge_model_id", r.judge_model_id},
              {"mapping", mapping},
              {"per_class", per_class},
              {"contingency", r.table}};
}

std::string_view to_string(CorruptionMode mode) {
  switch (mode) {
    case CorruptionMode::generic: return "generic";
    case CorruptionMode::mispredict: return "mispredict";
    case CorruptionMode::noise: return "noise";
  }
  return "?";
}

CorruptionMode corruption_mode_from(std::string_view name) {
  if (name == "generic") return CorruptionMode::generic;
  if (name == "mispredict") return CorruptionMode::mispredict;
  if (name == "noise") return CorruptionMode::noise;
  throw Error(ErrorKind::configuration, "unknown corruption mode '" + std::string(name) + "'");
}

std::vector<std::string> corrupt_vocabulary(std::span<const std::string> names, CorruptionMode mode,
                                            double fraction, std::uint64_t seed, const std::string& generic_word) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw Error(ErrorKind::configuration, "fraction must lie in [0, 1]");
  if (names.empty()) throw Error(ErrorKind::empty_vocabulary, "cannot corrupt an empty vocabulary");
  std::vector<std::string> out(names.begin(), names.end());
  const auto k = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(names.size())));
  if (k == 0) return out;
  if (mode == CorruptionMode::generic && generic_word.empty()) {
    throw Error(ErrorKind::configuration, "generic corruption needs the category word");
  }
  if (mode == CorruptionMode::mispredict && names.size() < 2) {
    throw Error(ErrorKind::configuration, "mispredict corruption needs at least two names");
  }
  const std::string stream = "corrupt:" + std::to_string(seed) + ":" + std::string(to_string(mode));
  // Full permutation, so smaller fractions corrupt a prefix of the same order.
  const auto order = DeterministicRng::from_key(stream).sample_without_replacement(names.size(), names.size());
  for (std::size_t r = 0; r < k; ++r) {
    const std::size_t pos = order[r];
    DeterministicRng rng = DeterministicRng::from_key(stream + ":" + std::to_string(pos));
    switch (mode) {
      case CorruptionMode::generic:
        out[pos] = generic_word;
        break;
      case CorruptionMode::mispredict: {
        std::size_t other = static_cast<std::size_t>(rng.uniform_index(names.size() - 1));
        if (other >= pos) ++other;
        out[pos] = names[other];
        break;
      }
      case CorruptionMode::noise: {
        std::string s(8, 'a');
        for (char& c : s) c = static_cast<char>('a' + rng.uniform_index(26));
        out[pos] = s;
        break;
      }
    }
  }
  return out;
}

std::vector<double> alpha_grid(double from, double to, double step) {
  if (!(from >= 0.0 && to <= 1.0 && from <= to)) {
    throw Error(ErrorKind::configuration, "alpha grid must satisfy 0 <= from <= to <= 1");
  }
  if (!(step > 0.0)) throw Error(ErrorKind::configuration, "alpha step must be positive");
  const auto count = static_cast<std::size_t>(std::floor((to - from) / step + 1e-9)) + 1;
  std::vector<double> grid;
  for (std::size_t i = 0; i < count; ++i) {
    const double a = std::round((from + static_cast<double>(i) * step) * 1e9) / 1e9;
    grid.push_back(std::min(a, 1.0));
  }
  return grid;
}

std::vector<AlphaPoint> alpha_sweep(const CoupledClassifier& clf, std::span<const std::string> image_ids,
                                    std::span<const Embedding> image_embeddings,
                                    const std::map<std::string, std::string>& truth, EmbeddingGateway& judge,
                                    std::span<const double> grid) {
  if (image_ids.size() != image_embeddings.size()) {
    throw Error(ErrorKind::contract, "image ids and embeddings differ in length");
  }
  std::vector<AlphaPoint> out;
  for (double alpha : grid) {
    const CoupledClassifier at = with_alpha(clf, alpha);
    AlphaPoint point;
    point.alpha = alpha;
    for (std::size_t i = 0; i < image_ids.size(); ++i) {
      point.predictions.push_back(classify_embedding(image_ids[i], image_embeddings[i], at));
    }
    point.report = evaluate(point.predictions, truth, judge);
    out.push_back(std::move(point));
  }
  return out;
}

std::string alpha_csv(std::span<const AlphaPoint> points) {
  std::string out = "alpha,cacc,sacc\n";
  for (const auto& p : points) {
    out += format_real(p.alpha) + "," + format_real(p.report.cacc) + "," + format_real(p.report.sacc) + "\n";
  }
  return out;
}

std::vector<RobustnessRow> robustness_sweep(EmbeddingGateway& gateway, EmbeddingGateway& judge,
                                            std::span<const std::string> names,
                                            std::span<const ImageRecord> discovery,
                                            std::span<const ImageRecord> test,
                                            const std::map<std::string, std::string>& truth,
                                            const RobustnessSettings& settings) {
  std::vector<RobustnessRow> rows;
  for (CorruptionMode mode : settings.modes) {
    for (double fraction : settings.fractions) {
      const auto corrupted = corrupt_vocabulary(names, mode, fraction, settings.seed, settings.generic_word);
      const CoupledClassifier clf = build_classifier(gateway, corrupted, discovery, settings.build);
      const BatchResult batch = classify_batch(gateway, test, clf, true, settings.build.concurrency);
      const EvaluationReport report = evaluate(batch.predictions, truth, judge);
      rows.push_back({mode, fraction, report.cacc, report.sacc});
    }
  }
  return rows;
}

std::string robustness_csv(std::span<const RobustnessRow> rows) {
  std::string out = "mode,fraction,cacc,sacc\n";
  for (const auto& r : rows) {
    out += std::string(to_string(r.mode)) + "," + format_real(r.fraction) + "," + format_real(r.cacc) + "," +
           format_real(r.sacc) + "\n";
  }
  return out;
}

}  // namespace findr
