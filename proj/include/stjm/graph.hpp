#pragma once

#include <string>
#include <utility>
#include <vector>

namespace stjm {

class Rng;

// Area adjacency from shared borders. Area ids are 1-based in files and in
// the pair list; degree and component queries use 0-based indices.
class AdjacencyGraph {
 public:
  AdjacencyGraph(int n_areas, std::vector<std::pair<int, int>> neighbour_pairs);

  int n_areas() const { return n_areas_; }
  const std::vector<std::pair<int, int>>& pairs() const { return pairs_; }

  int degree(int area0) const { return static_cast<int>(neighbours_[area0].size()); }
  const std::vector<int>& neighbours(int area0) const { return neighbours_[area0]; }

  int n_components() const { return n_components_; }

  static AdjacencyGraph load(const std::string& path);
  void save(const std::string& path) const;

  // a x b grid with rook adjacency; used by the simulator and tests.
  static AdjacencyGraph lattice(int rows, int cols);

  // Random connected graph: spanning tree plus extra edges.
  static AdjacencyGraph random_connected(int n_areas, double extra_edge_prob, Rng& rng);

 private:
  int n_areas_;
  std::vector<std::pair<int, int>> pairs_;          // 1-based, a < a'
  std::vector<std::vector<int>> neighbours_;        // 0-based adjacency lists
  int n_components_;
};

}  // namespace stjm
