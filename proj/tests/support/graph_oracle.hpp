#pragma once

// Brute-force reference for k_tuples: scans the raw edge list per center and
// picks neighbours by repeated selection of the best remaining candidate.

#include <random>
#include <set>
#include <string>
#include <vector>

#include "cryptosynth/graph/graph.hpp"

namespace cryptosynth::testing {

inline graph::EntityGraph random_graph(std::mt19937& rng, std::size_t max_nodes = 50) {
  const std::size_t n = 2 + rng() % (max_nodes - 1);
  std::vector<graph::EntityNode> nodes;
  for (std::size_t i = 0; i < n; ++i) {
    nodes.push_back({"e" + std::to_string(rng() % 1000) + "_" + std::to_string(i), EntityType::Person,
                     1 + rng() % 5, {"d"}});
  }
  const double density = 0.05 + (rng() % 60) / 100.0;
  std::vector<graph::WeightedEdge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if ((rng() % 1000) / 1000.0 < density) {
        // Two decimals, so ties are common.
        edges.push_back({nodes[i].entity_id, nodes[j].entity_id, (rng() % 101) / 100.0, ""});
      }
    }
  }
  return graph::build_graph(nodes, edges, 0.0);
}

inline std::vector<graph::EntityTuple> oracle_k_tuples(const graph::EntityGraph& g, std::size_t k,
                                                       std::size_t* skipped = nullptr) {
  std::vector<std::string> ids;
  for (const auto& nd : g.nodes) ids.push_back(nd.entity_id);
  std::sort(ids.begin(), ids.end());
  std::vector<graph::EntityTuple> out;
  std::vector<std::set<std::string>> emitted;
  std::size_t skip = 0;
  for (const auto& c : ids) {
    std::vector<std::pair<std::string, double>> cand;
    for (const auto& e : g.edges) {
      if (e.a == c) cand.emplace_back(e.b, e.score);
      if (e.b == c) cand.emplace_back(e.a, e.score);
    }
    if (cand.size() + 1 < k) {
      ++skip;
      continue;
    }
    graph::EntityTuple t;
    t.members.push_back(c);
    while (t.members.size() < k) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < cand.size(); ++i) {
        const bool better = cand[i].second > cand[best].second ||
                            (cand[i].second == cand[best].second && cand[i].first < cand[best].first);
        if (better) best = i;
      }
      t.members.push_back(cand[best].first);
      cand.erase(cand.begin() + static_cast<std::ptrdiff_t>(best));
    }
    const std::set<std::string> as_set(t.members.begin(), t.members.end());
    bool dup = false;
    for (const auto& s : emitted) dup = dup || s == as_set;
    if (dup) continue;
    emitted.push_back(as_set);
    out.push_back(std::move(t));
  }
  if (skipped) *skipped = skip;
  return out;
}

}  // namespace cryptosynth::testing
