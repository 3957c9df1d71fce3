#pragma once

// Shared bookkeeping for the run loops. Not installed.

#include "dqnmesh/netdqn.hpp"

#include <chrono>

namespace dqnmesh::detail {

const Vector& require_reference(const SeparableProblem& problem);

RunTrace start_trace(Algorithm algo, const SyncNetwork& network, int dim, int payloads,
                     double alpha);

struct Snapshot {
  const Stack* x = nullptr;
  const Stack* v = nullptr;
  const Stack* z = nullptr;  // may be null
  const Stack* g = nullptr;
  const Stack* beta = nullptr;  // EC-DQN only
};

/// Appends a record for the current round and returns max RSE over agents.
double record_round(RunTrace& trace, const SeparableProblem& problem, const SyncNetwork& network,
                    const Snapshot& snap);

/// Sets trace.status from the most recent max RSE; returns true when the loop should stop.
bool update_status(RunTrace& trace, double max_rse, const RunConfig& config);

class WallClock {
 public:
  WallClock() : start_(std::chrono::steady_clock::now()) {}
  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace dqnmesh::detail
