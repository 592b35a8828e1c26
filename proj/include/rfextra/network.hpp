#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rfextra/matops.hpp"

namespace rfextra {

enum class TopologyKind { ring, star, complete, erdos_renyi };

TopologyKind topology_kind_from_string(const std::string& name);

/// Undirected simple graph over n agents. Edges are stored canonically
/// (first < second, sorted, unique).
struct Topology {
  int n = 0;
  std::vector<std::pair<int, int>> edges;

  std::vector<int> degrees() const;
  std::vector<std::vector<int>> adjacency() const;
  bool connected() const;
};

/// Builds a connected topology. Erdos-Renyi graphs sample every pair with
/// probability p and are resampled wholesale (fresh seed stream per attempt)
/// until connected, capped at 100 attempts.
Topology build_topology(TopologyKind kind, int n, double p = 0.0,
                        std::uint64_t seed = 0);

/// Plain edge-list format: first line `n`, then one `i j` pair per line.
void save_topology(const Topology& t, const std::string& path);
Topology load_topology(const std::string& path);

/// Metropolis-Hastings weights: w_ij = 1/(1 + max(deg_i, deg_j)) on edges,
/// diagonal fills the remaining mass. Symmetric doubly stochastic with
/// sigma_2 < 1 on any connected graph.
Matrix metropolis_weights(const Topology& t);

/// Mixing matrix W together with its correction matrix V = θI + (1−θ)W.
struct MixingPair {
  Matrix W;
  Matrix V;
  double theta = 0.5;
  double sigma2 = 0.0;

  int n() const { return static_cast<int>(W.rows()); }
};

/// Validates W (symmetry, stochasticity, nonnegativity) and attaches
/// V = θI + (1−θ)W for θ ∈ (0, 1/2].
MixingPair with_correction(const Matrix& w, double theta);

/// Agent-level joint-error transition matrix
///   P = [ W − J   I   ]
///       [ W − V   I − J ]
/// with J = (1/n)𝟙𝟙ᵀ; size 2n × 2n.
Matrix build_joint_transition(const MixingPair& mp);

}  // namespace rfextra
