#pragma once

// A small encrypted corpus with a 20-item multiple-choice set about it, plus
// oracle and gibberish answerers.

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cryptosynth/detcrypt/cipher.hpp"
#include "cryptosynth/llm/mock.hpp"
#include "cryptosynth/rag/rag.hpp"

namespace cryptosynth::testing {

struct RagFixture {
  corpus::Corpus corpus;
  std::vector<rag::McqItem> items;
};

inline RagFixture rag_fixture(const detcrypt::EntityCipher& cipher) {
  static const char* people[] = {"Alice Moreau", "Bruno Lenz", "Chen Wei", "Dana Ortiz", "Emeka Obi"};
  static const char* cities[] = {"Lyon", "Graz", "Chengdu", "Quito", "Enugu"};
  static const char* jobs[] = {"a baker", "a pilot", "a judge", "a nurse", "a welder"};
  std::vector<corpus::Document> docs;
  std::vector<rag::McqItem> items;
  for (int i = 0; i < 5; ++i) {
    const auto p = cipher.encrypt(people[i], EntityType::Person).rendering();
    const auto c = cipher.encrypt(cities[i], EntityType::Location).rendering();
    corpus::Document d;
    d.doc_id = "doc" + std::to_string(i);
    d.text = p + " was born in " + c + ". " + p + " works as " + jobs[i] + ".\n\n" + "In " + std::to_string(1990 + i) +
             ", " + p + " moved away from " + c + " for good. Friends of " + p + " still visit " + c +
             " every spring.";
    docs.push_back(std::move(d));
    const std::string who = p;
    for (int q = 0; q < 4; ++q) {
      rag::McqItem item;
      item.item_id = "q" + std::to_string(i * 4 + q);
      item.encrypted = true;
      const char gold = static_cast<char>('A' + (i + q) % 4);
      std::vector<std::string> pool;
      switch (q) {
        case 0:
          item.question = "Where was " + who + " born?";
          for (int k = 0; k < 4; ++k) pool.push_back(cipher.encrypt(cities[(i + k) % 5], EntityType::Location).rendering());
          break;
        case 1:
          item.question = "What does " + who + " work as?";
          for (int k = 0; k < 4; ++k) pool.push_back(jobs[(i + k) % 5]);
          break;
        case 2:
          item.question = "In which year did " + who + " move away?";
          for (int k = 0; k < 4; ++k) pool.push_back(std::to_string(1990 + (i + k) % 5));
          break;
        default:
          item.question = "When do friends of " + who + " visit?";
          pool = {"every spring", "every winter", "never", "every week"};
      }
      // pool[0] is the true answer; rotate it into the gold slot.
      for (int k = 0; k < 4; ++k) item.options[static_cast<std::size_t>((gold - 'A' + k) % 4)] = pool[static_cast<std::size_t>(k)];
      item.gold = gold;
      items.push_back(std::move(item));
    }
  }
  return {corpus::Corpus(std::move(docs)), std::move(items)};
}

// Answers with the gold label of the item whose question appears in the prompt.
inline std::shared_ptr<llm::MockChatBackend> oracle_answerer(const std::vector<rag::McqItem>& items) {
  std::map<std::string, char> gold;
  for (const auto& i : items) gold["Question: " + i.question + "\n"] = i.gold;
  return std::make_shared<llm::MockChatBackend>(std::map<std::string, std::string>{}, [gold](const llm::ChatRequest& r) {
    for (const auto& [q, g] : gold) {
      if (r.messages[0].content.find(q) != std::string::npos) return "Answer: " + std::string(1, g);
    }
    return std::string("no idea");
  });
}

inline std::shared_ptr<llm::MockChatBackend> gibberish_answerer() {
  return std::make_shared<llm::MockChatBackend>(std::map<std::string, std::string>{},
                                                [](const llm::ChatRequest&) { return std::string("zxq lorem ipsum."); });
}

inline llm::Backends mock_backends(std::shared_ptr<llm::ChatBackend> chat) {
  return {std::move(chat), std::make_shared<llm::HashEmbedder>(), std::make_shared<llm::OverlapReranker>()};
}

}  // namespace cryptosynth::testing
