#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace findr {

/// A dense embedding vector. Always non-empty with finite components;
/// construction from anything else throws a contract error.
class Embedding {
 public:
  explicit Embedding(std::vector<float> values);
  Embedding(std::initializer_list<float> values);

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const float> values() const noexcept { return values_; }
  float operator[](std::size_t i) const { return values_[i]; }

  /// Euclidean norm, accumulated in double.
  double norm() const;

  friend bool operator==(const Embedding&, const Embedding&) = default;

 private:
  std::vector<float> values_;
};

/// Dot product accumulated in double. Throws on dimension mismatch.
double dot(const Embedding& a, const Embedding& b);

/// a.b / (|a| |b|). Throws contract on dim mismatch, degenerate_vector on a
/// zero-norm operand.
double cosine(const Embedding& a, const Embedding& b);

Embedding l2_normalize(const Embedding& a);

/// Componentwise arithmetic mean.
Embedding mean(std::span<const Embedding> vs);

/// wa * a + wb * b, computed in double and rounded once to float.
Embedding weighted_sum(double wa, const Embedding& a, double wb, const Embedding& b);

Embedding scaled(const Embedding& a, double s);

}  // namespace findr
