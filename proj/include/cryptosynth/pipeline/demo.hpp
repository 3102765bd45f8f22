#pragma once

#include <map>
#include <memory>
#include <string>

#include "cryptosynth/llm/mock.hpp"

namespace cryptosynth::pipeline {

// Offline chat backend for demo and test runs. Dispatches on the request tag:
//   graph.extract  -> no proposals
//   graph.score*   -> "Score: 0.xx" from a hash of the entity pair
//   synth.*        -> a Question/Answer (or analysis) naming every listed entity
//   rag.answer     -> per `answers`: "oracle" looks up `gold` by question text,
//                     "first" always answers A, "gibberish" answers nothing usable
// `gold` maps question text to its gold label.
std::shared_ptr<llm::MockChatBackend> demo_chat_backend(const std::string& answers = "oracle",
                                                        std::map<std::string, char> gold = {});

// Score the demo backend assigns to an unordered entity pair.
double demo_pair_score(const std::string& a, const std::string& b);

}  // namespace cryptosynth::pipeline
