#include "rfextra/network.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <queue>
#include <sstream>
#include <stdexcept>

#include "rfextra/rng.hpp"

namespace rfextra {

TopologyKind topology_kind_from_string(const std::string& name) {
  if (name == "ring") return TopologyKind::ring;
  if (name == "star") return TopologyKind::star;
  if (name == "complete") return TopologyKind::complete;
  if (name == "erdos_renyi") return TopologyKind::erdos_renyi;
  throw std::invalid_argument("unknown topology kind '" + name + "'");
}

std::vector<int> Topology::degrees() const {
  std::vector<int> deg(n, 0);
  for (const auto& [i, j] : edges) {
    ++deg[i];
    ++deg[j];
  }
  return deg;
}

std::vector<std::vector<int>> Topology::adjacency() const {
  std::vector<std::vector<int>> adj(n);
  for (const auto& [i, j] : edges) {
    adj[i].push_back(j);
    adj[j].push_back(i);
  }
  return adj;
}

bool Topology::connected() const {
  if (n <= 0) return false;
  const auto adj = adjacency();
  std::vector<char> seen(n, 0);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = 1;
  int reached = 1;
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    for (int v : adj[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++reached;
        frontier.push(v);
      }
    }
  }
  return reached == n;
}

static void canonicalize(Topology& t) {
  for (auto& e : t.edges)
    if (e.first > e.second) std::swap(e.first, e.second);
  std::sort(t.edges.begin(), t.edges.end());
  t.edges.erase(std::unique(t.edges.begin(), t.edges.end()), t.edges.end());
}

Topology build_topology(TopologyKind kind, int n, double p, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("build_topology: need n >= 2");
  Topology t;
  t.n = n;
  switch (kind) {
    case TopologyKind::ring:
      for (int i = 0; i < n; ++i) t.edges.emplace_back(i, (i + 1) % n);
      break;
    case TopologyKind::star:
      for (int i = 1; i < n; ++i) t.edges.emplace_back(0, i);
      break;
    case TopologyKind::complete:
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) t.edges.emplace_back(i, j);
      break;
    case TopologyKind::erdos_renyi: {
      if (!(p > 0.0 && p <= 1.0))
        throw std::invalid_argument("build_topology: erdos_renyi needs p in (0, 1]");
      for (int attempt = 0; attempt < 100; ++attempt) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(attempt)));
        t.edges.clear();
        for (int i = 0; i < n; ++i)
          for (int j = i + 1; j < n; ++j)
            if (rng.uniform() < p) t.edges.emplace_back(i, j);
        if (t.connected()) {
          canonicalize(t);
          return t;
        }
      }
      throw std::runtime_error(
          "build_topology: failed to sample a connected erdos_renyi graph in 100 attempts");
    }
  }
  canonicalize(t);
  return t;
}

void save_topology(const Topology& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_topology: cannot open '" + path + "'");
  out << t.n << "\n";
  for (const auto& [i, j] : t.edges) out << i << " " << j << "\n";
  if (!out) throw std::runtime_error("save_topology: write failed for '" + path + "'");
}

Topology load_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_topology: cannot open '" + path + "'");
  Topology t;
  if (!(in >> t.n) || t.n < 2)
    throw std::runtime_error("load_topology: bad agent count in '" + path + "'");
  int i = 0, j = 0;
  while (in >> i >> j) {
    if (i < 0 || j < 0 || i >= t.n || j >= t.n || i == j)
      throw std::runtime_error("load_topology: bad edge in '" + path + "'");
    t.edges.emplace_back(i, j);
  }
  if (!in.eof()) throw std::runtime_error("load_topology: trailing garbage in '" + path + "'");
  const std::size_t raw = t.edges.size();
  canonicalize(t);
  if (t.edges.size() != raw)
    throw std::runtime_error("load_topology: duplicate edges in '" + path + "'");
  if (!t.connected())
    throw std::runtime_error("load_topology: graph in '" + path + "' is not connected");
  return t;
}

Matrix metropolis_weights(const Topology& t) {
  if (!t.connected()) throw std::invalid_argument("metropolis_weights: graph must be connected");
  const auto deg = t.degrees();
  Matrix w = Matrix::Zero(t.n, t.n);
  for (const auto& [i, j] : t.edges) {
    const double wij = 1.0 / (1.0 + std::max(deg[i], deg[j]));
    w(i, j) = wij;
    w(j, i) = wij;
  }
  for (int i = 0; i < t.n; ++i) w(i, i) = 1.0 - w.row(i).sum();
  return w;
}

MixingPair with_correction(const Matrix& w, double theta) {
  if (!(theta > 0.0 && theta <= 0.5))
    throw std::invalid_argument("with_correction: theta must lie in (0, 1/2]");
  if (w.rows() != w.cols())
    throw std::invalid_argument("with_correction: W must be square");
  const double asym = (w - w.transpose()).cwiseAbs().maxCoeff();
  const double row_err = (w.rowwise().sum().array() - 1.0).abs().maxCoeff();
  if (asym > 1e-10 || row_err > 1e-10 || w.minCoeff() < -1e-12)
    throw std::invalid_argument("with_correction: W is not a valid mixing matrix");
  MixingPair mp;
  mp.W = w;
  mp.V = theta * Matrix::Identity(w.rows(), w.cols()) + (1.0 - theta) * w;
  mp.theta = theta;
  mp.sigma2 = second_largest_singular_value(w);
  return mp;
}

Matrix build_joint_transition(const MixingPair& mp) {
  const int n = mp.n();
  const Matrix j = Matrix::Constant(n, n, 1.0 / n);
  const Matrix eye = Matrix::Identity(n, n);
  Matrix p(2 * n, 2 * n);
  p.topLeftCorner(n, n) = mp.W - j;
  p.topRightCorner(n, n) = eye;
  p.bottomLeftCorner(n, n) = mp.W - mp.V;
  p.bottomRightCorner(n, n) = eye - j;
  return p;
}

}  // namespace rfextra
