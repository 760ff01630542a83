#include "stjm/graph.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "stjm/rng.hpp"

namespace stjm {

namespace {

int find_root(std::vector<int>& parent, int x) {
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return x;
}

}  // namespace

AdjacencyGraph::AdjacencyGraph(int n_areas, std::vector<std::pair<int, int>> neighbour_pairs)
    : n_areas_(n_areas) {
  if (n_areas <= 0) throw std::invalid_argument("AdjacencyGraph: n_areas must be positive");
  std::set<std::pair<int, int>> seen;
  for (auto [a, b] : neighbour_pairs) {
    if (a == b) throw std::invalid_argument("AdjacencyGraph: self-pair for area " + std::to_string(a));
    if (a < 1 || b < 1 || a > n_areas || b > n_areas)
      throw std::invalid_argument("AdjacencyGraph: area id out of range");
    if (a > b) std::swap(a, b);
    if (!seen.insert({a, b}).second)
      throw std::invalid_argument("AdjacencyGraph: duplicate pair (" + std::to_string(a) + "," + std::to_string(b) + ")");
  }
  pairs_.assign(seen.begin(), seen.end());

  neighbours_.assign(n_areas_, {});
  for (auto [a, b] : pairs_) {
    neighbours_[a - 1].push_back(b - 1);
    neighbours_[b - 1].push_back(a - 1);
  }
  for (auto& nb : neighbours_) std::sort(nb.begin(), nb.end());

  std::vector<int> parent(n_areas_);
  std::iota(parent.begin(), parent.end(), 0);
  for (auto [a, b] : pairs_) {
    int ra = find_root(parent, a - 1);
    int rb = find_root(parent, b - 1);
    if (ra != rb) parent[ra] = rb;
  }
  std::set<int> roots;
  for (int i = 0; i < n_areas_; ++i) roots.insert(find_root(parent, i));
  n_components_ = static_cast<int>(roots.size());
}

AdjacencyGraph AdjacencyGraph::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open adjacency file: " + path);
  std::string tag;
  int n_areas = 0;
  if (!(in >> tag >> n_areas) || tag != "AREAS")
    throw std::runtime_error("adjacency file must start with 'AREAS <A>': " + path);
  std::vector<std::pair<int, int>> pairs;
  int a, b;
  while (in >> a >> b) pairs.emplace_back(a, b);
  return AdjacencyGraph(n_areas, std::move(pairs));
}

void AdjacencyGraph::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write adjacency file: " + path);
  out << "AREAS " << n_areas_ << "\n";
  for (auto [a, b] : pairs_) out << a << "\t" << b << "\n";
}

AdjacencyGraph AdjacencyGraph::lattice(int rows, int cols) {
  std::vector<std::pair<int, int>> pairs;
  auto id = [cols](int r, int c) { return r * cols + c + 1; };
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      if (c + 1 < cols) pairs.emplace_back(id(r, c), id(r, c + 1));
      if (r + 1 < rows) pairs.emplace_back(id(r, c), id(r + 1, c));
    }
  return AdjacencyGraph(rows * cols, std::move(pairs));
}

AdjacencyGraph AdjacencyGraph::random_connected(int n_areas, double extra_edge_prob, Rng& rng) {
  std::set<std::pair<int, int>> edges;
  for (int v = 2; v <= n_areas; ++v) {
    int u = static_cast<int>(rng.below(static_cast<std::uint64_t>(v - 1))) + 1;
    edges.insert({std::min(u, v), std::max(u, v)});
  }
  for (int a = 1; a <= n_areas; ++a)
    for (int b = a + 1; b <= n_areas; ++b)
      if (rng.bernoulli(extra_edge_prob)) edges.insert({a, b});
  return AdjacencyGraph(n_areas, {edges.begin(), edges.end()});
}

}  // namespace stjm
