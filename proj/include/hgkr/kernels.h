#pragma once

#include <cstdint>
#include <span>
#include <vector>

// Data-parallel inner loops. Each OpenMP kernel has a serial counterpart in
// hgkr::serial with bit-identical results.

namespace hgkr {

struct Scored {
  std::int64_t id = 0;
  double score = 0.0;
  std::size_t row = 0;
};

// Orders by score descending, then id ascending.
inline bool ranks_before(const Scored& a, const Scored& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

// Sequential dot product with double accumulation.
double dot(std::span<const double> q, std::span<const float> row);
double dot(std::span<const double> a, std::span<const double> b);

// scores[r] = dot(query, rows[r*dim .. (r+1)*dim)).
void score_rows(std::span<const double> query, std::span<const float> rows, std::size_t dim,
                std::span<double> scores);

// Top k of (ids[r], scores[r]) by ranks_before; k is clamped to the row count.
std::vector<Scored> select_top_k(std::span<const double> scores, std::span<const std::int64_t> ids, std::size_t k);

int max_threads();
void set_num_threads(int n);

namespace serial {
void score_rows(std::span<const double> query, std::span<const float> rows, std::size_t dim,
                std::span<double> scores);
// Full argsort, then prefix.
std::vector<Scored> select_top_k(std::span<const double> scores, std::span<const std::int64_t> ids, std::size_t k);
}  // namespace serial

}  // namespace hgkr
