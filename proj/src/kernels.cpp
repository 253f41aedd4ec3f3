#include "hgkr/kernels.h"

#include <omp.h>

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace hgkr {

double dot(std::span<const double> q, std::span<const float> row) {
  double s = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) s += q[i] * static_cast<double>(row[i]);
  return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void score_rows(std::span<const double> query, std::span<const float> rows, std::size_t dim,
                std::span<double> scores) {
  if (query.size() != dim || rows.size() != scores.size() * dim) throw std::invalid_argument("score_rows: shape mismatch");
  const auto n = static_cast<std::int64_t>(scores.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < n; ++r) {
    const auto ur = static_cast<std::size_t>(r);
    scores[ur] = dot(query, rows.subspan(ur * dim, dim));
  }
}

std::vector<Scored> select_top_k(std::span<const double> scores, std::span<const std::int64_t> ids, std::size_t k) {
  const std::size_t n = scores.size();
  k = std::min(k, n);
  if (k == 0) return {};
  const int nt = std::max(1, std::min<int>(omp_get_max_threads(), static_cast<int>(n / 4096) + 1));
  std::vector<std::vector<Scored>> partial(static_cast<std::size_t>(nt));
#pragma omp parallel for schedule(static) num_threads(nt)
  for (int c = 0; c < nt; ++c) {
    const auto t = static_cast<std::size_t>(c);
    const std::size_t lo = n * t / static_cast<std::size_t>(nt);
    const std::size_t hi = n * (t + 1) / static_cast<std::size_t>(nt);
    auto& local = partial[t];
    local.reserve(hi - lo);
    for (std::size_t r = lo; r < hi; ++r) local.push_back({ids[r], scores[r], r});
    if (local.size() > k) {
      std::nth_element(local.begin(), local.begin() + static_cast<std::ptrdiff_t>(k), local.end(), ranks_before);
      local.resize(k);
    }
  }
  std::vector<Scored> merged;
  merged.reserve(k * static_cast<std::size_t>(nt));
  for (auto& p : partial) merged.insert(merged.end(), p.begin(), p.end());
  std::partial_sort(merged.begin(), merged.begin() + static_cast<std::ptrdiff_t>(k), merged.end(), ranks_before);
  merged.resize(k);
  return merged;
}

int max_threads() { return omp_get_max_threads(); }

void set_num_threads(int n) {
  if (n > 0) omp_set_num_threads(n);
}

namespace serial {

void score_rows(std::span<const double> query, std::span<const float> rows, std::size_t dim,
                std::span<double> scores) {
  if (query.size() != dim || rows.size() != scores.size() * dim) throw std::invalid_argument("score_rows: shape mismatch");
  for (std::size_t r = 0; r < scores.size(); ++r) scores[r] = dot(query, rows.subspan(r * dim, dim));
}

std::vector<Scored> select_top_k(std::span<const double> scores, std::span<const std::int64_t> ids, std::size_t k) {
  std::vector<Scored> all(scores.size());
  for (std::size_t r = 0; r < scores.size(); ++r) all[r] = {ids[r], scores[r], r};
  std::sort(all.begin(), all.end(), ranks_before);
  all.resize(std::min(k, all.size()));
  return all;
}

}  // namespace serial

}  // namespace hgkr
