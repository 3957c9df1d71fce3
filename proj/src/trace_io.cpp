#include "dqnmesh/harness.hpp"
#include "dqnmesh/json_io.hpp"

#include <cmath>
#include <sstream>

namespace dqnmesh {

std::string trace_csv(const RunTrace& trace) {
  const bool constrained = is_constrained_algorithm(trace.algo);
  std::ostringstream out;
  out << kTraceHeader;
  if (constrained) out << ",feasibility,beta_norm";
  out << '\n';
  for (const auto& r : trace.records) {
    for (std::size_t i = 0; i < r.rse.size(); ++i) {
      out << r.round << ',' << i << ',' << format_double(r.rse[i]) << ','
          << format_double(r.x_consensus_err) << ',' << format_double(r.v_consensus_err) << ','
          << format_double(r.mean_grad_norm) << ',' << format_double(r.objective) << ','
          << r.bytes_sent[i];
      if (constrained) {
        out << ',' << (r.feasibility.empty() ? "" : format_double(r.feasibility[i])) << ','
            << (r.beta_norm.empty() ? "" : format_double(r.beta_norm[i]));
      }
      out << '\n';
    }
  }
  return out.str();
}

nlohmann::json trace_summary_json(const RunTrace& trace) {
  nlohmann::json gaps = nlohmann::json::array();
  nlohmann::json z_err = nlohmann::json::array();
  for (const auto& r : trace.records) {
    gaps.push_back(r.tracking_gap);
    z_err.push_back(r.z_consensus_err);
  }
  return {{"algo", to_string(trace.algo)},
          {"converged", trace.converged()},
          {"status", to_string(trace.status)},
          {"message", trace.message},
          {"rounds", trace.rounds()},
          {"alpha", trace.alpha},
          {"n_agents", trace.n_agents},
          {"dim", trace.dim},
          {"payloads_per_round", trace.payloads_per_round},
          {"degrees", trace.degrees},
          {"final_max_rse", trace.final_max_rse()},
          {"total_bytes_per_agent_mean", trace.total_bytes_mean()},
          {"total_bytes_per_agent_max", trace.total_bytes_max()},
          {"curvature_skips", trace.curvature_skips},
          {"safeguard_clamps", trace.safeguard_clamps},
          {"kkt_residual_max", trace.kkt_residual_max},
          {"tracking_gap", gaps},
          {"z_consensus_err", z_err},
          {"wall_time_ms", trace.wall_time_ms}};
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

ValidationReport validate_trace(const std::string& csv_text, const nlohmann::json& summary) {
  ValidationReport rep;
  auto fail = [&](std::string what) {
    rep.ok = false;
    if (rep.failures.size() < 50) rep.failures.push_back(std::move(what));
  };

  int n_agents = 0, dim = 0, payloads = 0, rounds = 0;
  std::vector<int> degrees;
  std::vector<double> gaps;
  try {
    n_agents = summary.at("n_agents").get<int>();
    dim = summary.at("dim").get<int>();
    payloads = summary.at("payloads_per_round").get<int>();
    rounds = summary.at("rounds").get<int>();
    degrees = summary.at("degrees").get<std::vector<int>>();
    gaps = summary.at("tracking_gap").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& ex) {
    fail(std::string("summary JSON missing fields: ") + ex.what());
    return rep;
  }
  if (static_cast<int>(degrees.size()) != n_agents) fail("degree list does not match n_agents");
  if (static_cast<int>(gaps.size()) != rounds + 1) fail("tracking_gap length is not rounds + 1");

  std::istringstream in(csv_text);
  std::string line;
  if (!std::getline(in, line) || line.rfind(kTraceHeader, 0) != 0) {
    fail("CSV header mismatch");
    return rep;
  }
  std::vector<std::uint64_t> last_bytes(n_agents, 0);
  int expected_round = 0, expected_agent = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() < 8) {
      fail("short CSV row: " + line);
      continue;
    }
    ++rep.rows;
    int round = 0, agent = 0;
    std::uint64_t bytes = 0;
    double grad_norm = 0.0;
    try {
      round = std::stoi(cells[0]);
      agent = std::stoi(cells[1]);
      grad_norm = std::stod(cells[5]);
      bytes = std::stoull(cells[7]);
    } catch (const std::exception&) {
      fail("unparseable CSV row: " + line);
      continue;
    }
    if (round != expected_round || agent != expected_agent)
      fail("unexpected (round, agent) = (" + cells[0] + ", " + cells[1] + ")");
    if (agent >= 0 && agent < n_agents && static_cast<std::size_t>(agent) < degrees.size()) {
      const std::uint64_t closed = static_cast<std::uint64_t>(payloads) * kBytesPerScalar *
                                   static_cast<std::uint64_t>(dim) *
                                   static_cast<std::uint64_t>(degrees[agent]) *
                                   static_cast<std::uint64_t>(round);
      if (bytes != closed)
        fail("ledger mismatch at round " + cells[0] + " agent " + cells[1] + ": " +
             std::to_string(bytes) + " != " + std::to_string(closed));
      if (bytes < last_bytes[agent]) fail("byte counter decreased for agent " + cells[1]);
      last_bytes[agent] = bytes;
    }
    if (agent == 0 && round >= 0 && round < static_cast<int>(gaps.size())) {
      if (!(gaps[round] <= 1e-12 * (1.0 + grad_norm)))
        fail("mean-tracking identity violated at round " + cells[0]);
    }
    if (++expected_agent == n_agents) {
      expected_agent = 0;
      ++expected_round;
    }
  }
  if (rep.rows != (rounds + 1) * n_agents)
    fail("row count " + std::to_string(rep.rows) + " != (rounds + 1) * agents");
  return rep;
}

}  // namespace dqnmesh
