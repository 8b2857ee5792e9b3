#include "findr/vectorcore.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "findr/error.hpp"

namespace findr {

namespace {

void require_same_dim(const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorKind::contract, "embedding dimension mismatch: " + std::to_string(a.dim()) +
                                         " vs " + std::to_string(b.dim()));
  }
}

double squared_norm(const Embedding& a) {
  double acc = 0.0;
  for (float x : a.values()) acc += static_cast<double>(x) * x;
  return acc;
}

}  // namespace

Embedding::Embedding(std::vector<float> values) : values_(std::move(values)) {
  if (values_.empty()) throw Error(ErrorKind::contract, "embedding must have dim >= 1");
  for (float x : values_) {
    if (!std::isfinite(x)) throw Error(ErrorKind::contract, "embedding has non-finite component");
  }
}

Embedding::Embedding(std::initializer_list<float> values)
    : Embedding(std::vector<float>(values)) {}

double Embedding::norm() const { return std::sqrt(squared_norm(*this)); }

double dot(const Embedding& a, const Embedding& b) {
  require_same_dim(a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

double cosine(const Embedding& a, const Embedding& b) {
  require_same_dim(a, b);
  const double na = squared_norm(a);
  const double nb = squared_norm(b);
  if (na == 0.0 || nb == 0.0) throw Error(ErrorKind::degenerate_vector, "cosine of zero-norm vector");
  // sqrt(na * nb) rather than sqrt(na) * sqrt(nb): identical operands then
  // give exactly 1.0.
  const double c = dot(a, b) / std::sqrt(na * nb);
  return std::clamp(c, -1.0, 1.0);
}

Embedding l2_normalize(const Embedding& a) {
  const double n = a.norm();
  if (n == 0.0) throw Error(ErrorKind::degenerate_vector, "cannot normalize zero-norm vector");
  return scaled(a, 1.0 / n);
}

Embedding mean(std::span<const Embedding> vs) {
  if (vs.empty()) throw Error(ErrorKind::empty_input, "mean of empty sequence");
  std::vector<double> acc(vs.front().dim(), 0.0);
  for (const auto& v : vs) {
    require_same_dim(vs.front(), v);
    for (std::size_t i = 0; i < v.dim(); ++i) acc[i] += v[i];
  }
  std::vector<float> out(acc.size());
  const double n = static_cast<double>(vs.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i] / n);
  return Embedding(std::move(out));
}

Embedding weighted_sum(double wa, const Embedding& a, double wb, const Embedding& b) {
  require_same_dim(a, b);
  std::vector<float> out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) {
    out[i] = static_cast<float>(wa * a[i] + wb * b[i]);
  }
  return Embedding(std::move(out));
}

Embedding scaled(const Embedding& a, double s) {
  std::vector<float> out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = static_cast<float>(a[i] * s);
  return Embedding(std::move(out));
}

}  // namespace findr
