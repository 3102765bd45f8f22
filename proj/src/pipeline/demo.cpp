#include "cryptosynth/pipeline/demo.hpp"

#include <algorithm>
#include <cstdio>
#include <vector>

#include "cryptosynth/common/io.hpp"

namespace cryptosynth::pipeline {

namespace {

// Value of the last "\n<label>" line in `text`.
std::string line_value(const std::string& text, const std::string& label) {
  const auto at = text.rfind("\n" + label);
  if (at == std::string::npos) return {};
  const auto begin = at + 1 + label.size();
  const auto end = text.find('\n', begin);
  return text.substr(begin, end == std::string::npos ? std::string::npos : end - begin);
}

std::vector<std::string> listed_entities(const std::string& prompt) {
  std::vector<std::string> out;
  const auto at = prompt.find("Entities:\n");
  if (at == std::string::npos) return out;
  for (const auto& line : io::split_lines(std::string_view(prompt).substr(at + 10))) {
    if (line.rfind("- ", 0) != 0) break;
    out.push_back(line.substr(2));
  }
  return out;
}

std::string synth_reply(const std::string& tag, const std::vector<std::string>& ents) {
  std::string joined;
  for (std::size_t i = 0; i < ents.size(); ++i) joined += (i == 0 ? "" : (i + 1 == ents.size() ? " and " : ", ")) + ents[i];
  if (tag == "synth.relation_analysis") {
    std::string text = "The excerpts tie together " + joined + ".";
    for (std::size_t i = 1; i < ents.size(); ++i) {
      text += " " + ents[0] + " is linked to " + ents[i] + " through the events described.";
    }
    return text;
  }
  std::string chain;
  for (std::size_t i = 0; i < ents.size(); ++i) chain += (i == 0 ? "" : " is connected with ") + ents[i];
  return "Question: How are " + joined + " related in the article?\nAnswer: " + chain +
         "; they appear in the same account.";
}

}  // namespace

double demo_pair_score(const std::string& a, const std::string& b) {
  const auto& lo = std::min(a, b);
  const auto& hi = std::max(a, b);
  return static_cast<double>(io::fnv1a64(lo + '\x1f' + hi) % 101) / 100.0;
}

std::shared_ptr<llm::MockChatBackend> demo_chat_backend(const std::string& answers, std::map<std::string, char> gold) {
  return std::make_shared<llm::MockChatBackend>(
      std::map<std::string, std::string>{}, [answers, gold = std::move(gold)](const llm::ChatRequest& req) {
        const std::string& prompt = req.messages.empty() ? std::string() : req.messages.back().content;
        if (req.tag == "graph.extract") return std::string();
        if (req.tag.rfind("graph.score", 0) == 0) {
          char buf[32];
          std::snprintf(buf, sizeof buf, "%.2f", demo_pair_score(line_value(prompt, "E1: "), line_value(prompt, "E2: ")));
          return "### Summary\n\nBoth entities appear in the article.\n\nScore: " + std::string(buf);
        }
        if (req.tag.rfind("synth.", 0) == 0) return synth_reply(req.tag, listed_entities(prompt));
        if (req.tag == "rag.answer") {
          if (answers == "gibberish") return std::string("zxq lorem ipsum.");
          if (answers == "first") return std::string("Answer: A");
          const auto q = line_value(prompt, "Question: ");
          const auto it = gold.find(q);
          return it == gold.end() ? std::string("I cannot tell.") : "Answer: " + std::string(1, it->second);
        }
        throw llm::BackendFailure("demo backend has no reply for tag '" + req.tag + "'");
      });
}

}  // namespace cryptosynth::pipeline
