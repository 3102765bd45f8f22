#include "cryptosynth/llm/backend.hpp"

#include <algorithm>
#include <numeric>

namespace cryptosynth::llm {

ChatRequest ChatRequest::user(std::string content, std::string tag) {
  ChatRequest r;
  r.messages.push_back({"user", std::move(content)});
  r.tag = std::move(tag);
  return r;
}

std::vector<RerankHit> top_hits(const std::vector<double>& scores, std::size_t top_k) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(std::min(top_k, order.size()));
  std::vector<RerankHit> hits;
  hits.reserve(order.size());
  for (auto i : order) hits.push_back({i, scores[i]});
  return hits;
}

}  // namespace cryptosynth::llm
