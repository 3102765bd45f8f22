#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cryptosynth/pipeline/config.hpp"
#include "cryptosynth/pipeline/stages.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cryptosynth;

namespace {

enum Exit { kOk = 0, kConfig = 2, kStage = 3, kExhausted = 4 };

int report(const std::string& kind, const std::string& stage, const std::string& message, int code) {
  std::cerr << json{{"error", kind}, {"stage", stage}, {"message", message}}.dump() << "\n";
  return code;
}

// Flag values collected before the config is loaded.
struct Overrides {
  std::vector<std::tuple<std::string, std::string, json>> values;

  template <class T>
  void add(const std::string& section, const std::string& key, const std::optional<T>& v) {
    if (v) values.emplace_back(section, key, json(*v));
  }
  void add_path(const std::string& section, const std::string& key, const std::optional<std::string>& v) {
    if (v) values.emplace_back(section, key, json(fs::absolute(*v).lexically_normal().string()));
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cryptosynth: encrypt PII, build entity graphs, synthesize, audit and evaluate"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::string> config_path, out_dir, manifest_path;
  app.add_option("-c,--config", config_path, "TOML config file")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "Output directory (overrides paths.out)");
  app.add_option("--from-manifest", manifest_path, "Rerun the stage recorded in a manifest")->check(CLI::ExistingFile);

  std::optional<std::string> key_file, crypto_mode, sidecar, review_file, synth_mode, decrypt_input,
      leak_inventory, leak_target, responses, group_key;
  std::optional<double> threshold;
  std::optional<std::size_t> pair_budget, k_max, max_tuples, budget_tokens, chunk_size, top_k, retrieve_k;
  bool casefold = false, sweep = false;
  std::vector<std::string> kinds;

  auto add_crypto = [&](CLI::App* sub) {
    sub->add_option("--key-file", key_file, "Hex key file");
    sub->add_option("--mode", crypto_mode, "Cipher mode")->check(CLI::IsMember({"ecb", "siv"}));
    sub->add_flag("--canonical-casefold", casefold, "Case-fold surfaces before encryption");
  };

  std::map<std::string, CLI::App*> subs;
  auto* detect = subs["detect"] = app.add_subcommand("detect", "Detect PII spans and export a review file");
  detect->add_option("--sidecar", sidecar, "none, mock, stdio or http")
      ->check(CLI::IsMember({"none", "mock", "stdio", "http"}));
  auto* review = subs["review"] = app.add_subcommand("review", "Import an edited review file");
  review->add_option("--review-file", review_file, "Edited review JSONL")->check(CLI::ExistingFile);
  auto* encrypt = subs["encrypt"] = app.add_subcommand("encrypt", "Encrypt detected spans");
  add_crypto(encrypt);
  auto* graph = subs["graph"] = app.add_subcommand("graph", "Build the weighted entity graph");
  graph->add_option("--threshold", threshold, "Edge threshold")->check(CLI::Range(0.0, 1.0));
  graph->add_option("--pair-budget", pair_budget, "Pairs to score");
  auto* tuples = subs["tuples"] = app.add_subcommand("tuples", "Emit entity tuples for k = 2..k_max");
  tuples->add_option("--k-max", k_max, "Largest tuple size");
  tuples->add_option("--max-tuples", max_tuples, "Cap per k (0 = none)");
  auto* synth = subs["synth"] = app.add_subcommand("synth", "Generate synthetic records");
  synth->add_option("--kind", kinds, "qa or relation (repeatable)")
      ->check(CLI::IsMember({"qa", "relation", "qa_pair", "relation_analysis"}));
  synth->add_option("--budget-tokens", budget_tokens, "Token budget per kind");
  synth->add_option("--mode", synth_mode, "enc-first or enc-after")->check(CLI::IsMember({"enc-first", "enc-after"}));
  auto* decrypt = subs["decrypt"] = app.add_subcommand("decrypt", "Decrypt a corpus");
  add_crypto(decrypt);
  decrypt->add_option("--input", decrypt_input, "Corpus to decrypt (default: synthetic.jsonl)")
      ->check(CLI::ExistingFile);
  auto* leak = subs["audit-leakage"] = app.add_subcommand("audit-leakage", "Count plaintext PII left in a corpus");
  leak->add_option("--inventory", leak_inventory, "Plaintext inventory JSONL")->check(CLI::ExistingFile);
  leak->add_option("--target", leak_target, "Corpus to audit (default: synthetic.jsonl)")->check(CLI::ExistingFile);
  auto* hall = subs["audit-hallucination"] =
      app.add_subcommand("audit-hallucination", "Classify cipher citations in model responses");
  hall->add_option("--responses", responses, "Responses JSONL")->check(CLI::ExistingFile);
  hall->add_option("--group-key", group_key, "Article key field");
  add_crypto(hall);
  auto* rag = subs["rag-eval"] = app.add_subcommand("rag-eval", "Multiple-choice RAG evaluation");
  rag->add_option("--chunk-size", chunk_size, "Approximate tokens per chunk");
  rag->add_option("--top-k", top_k, "Chunks passed to the answerer");
  rag->add_option("--retrieve-k", retrieve_k, "Cosine pool before reranking");
  rag->add_flag("--sweep", sweep, "Run the chunk-size x top-k grid");
  subs["pipeline"] = app.add_subcommand("pipeline", "Run every stage in order");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Usage errors share the config exit status.
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  std::string stage;
  for (const auto& [name, sub] : subs) {
    if (sub->parsed()) stage = name;
  }

  std::optional<pipeline::Runner> runner;
  try {
    if (manifest_path) {
      runner.emplace(pipeline::Runner::from_manifest(*manifest_path));
      if (runner->manifest_stage() != stage) {
        throw pipeline::ConfigInvalid("<manifest>", "manifest records stage '" + runner->manifest_stage() +
                                                        "', not '" + stage + "'");
      }
    } else {
      if (!config_path) throw pipeline::ConfigInvalid("<config>", "--config is required");
      auto cfg = pipeline::PipelineConfig::load_toml(*config_path);
      Overrides o;
      o.add_path("paths", "out", out_dir);
      o.add_path("crypto", "key_file", key_file);
      o.add("crypto", "mode", crypto_mode);
      if (casefold) o.add("crypto", "casefold", std::optional<bool>(true));
      o.add("detect", "sidecar", sidecar);
      o.add_path("paths", "review", review_file);
      o.add("graph", "threshold", threshold);
      o.add("graph", "pair_budget", pair_budget);
      o.add("graph", "k_max", k_max);
      o.add("graph", "max_tuples", max_tuples);
      if (!kinds.empty()) o.values.emplace_back("synthesis", "kind", json(kinds));
      o.add("synthesis", "budget_tokens", budget_tokens);
      o.add("synthesis", "mode", synth_mode);
      o.add_path("paths", "responses", responses);
      o.add("audit", "group_key", group_key);
      o.add("rag", "chunk_size", chunk_size);
      o.add("rag", "top_k", top_k);
      o.add("rag", "retrieve_k", retrieve_k);
      if (sweep) o.add("rag", "sweep", std::optional<bool>(true));
      for (const auto& [section, key, value] : o.values) cfg.override_value(section, key, value);

      pipeline::RunOptions opts;
      auto abs = [](const std::optional<std::string>& p) -> std::optional<fs::path> {
        if (!p) return std::nullopt;
        return fs::absolute(*p).lexically_normal();
      };
      opts.decrypt_input = abs(decrypt_input);
      opts.leakage_inventory = abs(leak_inventory);
      opts.leakage_target = abs(leak_target);
      runner.emplace(std::move(cfg), std::move(opts));
    }
    const auto result = runner->run(stage);
    std::cout << json{{"stage", result.stage}, {"summary", result.summary}}.dump(2) << "\n";
    return kOk;
  } catch (const pipeline::ConfigInvalid& e) {
    return report("ConfigInvalid", stage, e.what(), kConfig);
  } catch (const pipeline::StageFailure& e) {
    return report(e.cause_kind(), e.stage(), e.what(), e.cause_kind() == "Exhausted" ? kExhausted : kStage);
  } catch (const std::exception& e) {
    return report("Internal", stage, e.what(), kStage);
  }
}
