#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>

namespace dqnmesh {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
// One row per agent.
using Stack = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Rng = std::mt19937_64;

/// Caller handed in something that violates a documented precondition.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A dense factorization failed; the message names the offending block.
class FactorizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative solve hit its cap without meeting tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : std::runtime_error(what + " (final residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Iterates diverged (non-finite or exploding); the run loop catches this.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// splitmix64 finalizer, used to derive independent sub-seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Vector random_normal(Rng& rng, Eigen::Index n);
Matrix random_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols);

/// Runs fn(i) for i in [0, count). With threads <= 1 this is a plain loop.
/// Each index must touch only its own output slot.
void parallel_for(int count, int threads, const std::function<void(int)>& fn);

}  // namespace dqnmesh
