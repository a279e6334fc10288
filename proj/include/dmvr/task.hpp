#pragma once

#include <filesystem>
#include <string>

#include "dmvr/json_io.hpp"
#include "dmvr/policy.hpp"
#include "dmvr/verifier.hpp"

namespace dmvr {

/// A verifiable-reward task: base model, verifier and the contexts they
/// are defined on.
struct Task {
  std::string name;
  TabularPolicy base;
  Verifier verifier;
  Json definition;

  std::size_t context_count() const { return base.contexts().size(); }
};

/// Task file schema:
///   {"name", "vocab": [...], "eos": token name (optional), "max_len",
///    "contexts": [...], "verifier": {"kind", "params"},
///    "base_logits": {context name or "*": {prefix: [logits...]}}}
/// Prefixes are space-separated token names, "" for the first token.
Task load_task(const Json& definition);
Task load_task_file(const std::filesystem::path& path);

/// Built-in "skewed-multi-answer" task: vocab {a, b, c, eos}, max_len 6.
/// Each context accepts a handful of answers whose base probabilities span
/// two orders of magnitude, so a mode-seeking learner can reach high reward
/// while dropping the rare correct answers.
Json skewed_multi_answer_definition();
Task skewed_multi_answer_task();

/// Resolves a --task argument: a built-in name or a JSON file path.
Task resolve_task(const std::string& name_or_path);

}  // namespace dmvr
