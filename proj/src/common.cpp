#include "dqnmesh/common.hpp"

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace dqnmesh {

Vector random_normal(Rng& rng, Eigen::Index n) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

Matrix random_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  // Fill row by row so the draw order matches the serialized layout.
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  return m;
}

void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  const int workers = std::min(threads, count);
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (int i = w; i < count; i += workers) fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace dqnmesh
