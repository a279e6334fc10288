#include "dmvr/task.hpp"

#include "dmvr/errors.hpp"

namespace dmvr {

Task load_task(const Json& def) {
  try {
    Vocabulary vocab;
    vocab.tokens = def.at("vocab").get<std::vector<std::string>>();
    if (def.contains("eos") && !def.at("eos").is_null()) {
      vocab.eos = vocab.id_of(def.at("eos").get<std::string>());
    } else if (!def.contains("eos")) {
      auto it = std::find(vocab.tokens.begin(), vocab.tokens.end(), "eos");
      if (it != vocab.tokens.end()) vocab.eos = static_cast<TokenId>(it - vocab.tokens.begin());
    }
    TabularPolicy base(std::move(vocab), def.at("max_len").get<int>(),
                       def.at("contexts").get<std::vector<std::string>>());
    if (def.contains("base_logits")) {
      const auto& bl = def.at("base_logits");
      auto apply = [&](ContextId ctx, const Json& states) {
        for (auto it = states.begin(); it != states.end(); ++it) {
          std::vector<double> logits;
          for (const auto& v : it.value()) logits.push_back(json_to_double(v));
          base.set_logits(ctx, base.parse_sequence(it.key()), std::move(logits));
        }
      };
      if (bl.contains("*")) {
        for (ContextId c = 0; c < base.contexts().size(); ++c) apply(c, bl.at("*"));
      }
      for (auto it = bl.begin(); it != bl.end(); ++it) {
        if (it.key() == "*") continue;
        apply(base.context_index(it.key()), it.value());
      }
    }
    Verifier verifier = make_verifier(def.at("verifier"), base);
    return Task{def.value("name", std::string("task")), std::move(base), std::move(verifier), def};
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("malformed task definition: ") + e.what());
  }
}

Task load_task_file(const std::filesystem::path& path) { return load_task(read_json_file(path)); }

Json skewed_multi_answer_definition() {
  return Json::parse(R"({
    "name": "skewed-multi-answer",
    "vocab": ["a", "b", "c", "eos"],
    "eos": "eos",
    "max_len": 6,
    "contexts": ["q1", "q2", "q3", "q4"],
    "base_logits": {
      "q1": {"": [2.0, 0.0, 0.0, 0.0]},
      "q2": {"": [0.0, 2.0, 0.0, 0.0]},
      "q3": {"": [0.0, 0.0, 2.0, 0.0]},
      "q4": {"": [2.0, 0.0, 0.0, 0.0]}
    },
    "verifier": {
      "kind": "membership",
      "params": {
        "accept": {
          "q1": ["a eos", "b b eos", "c a c eos", "c c b a eos"],
          "q2": ["b eos", "a c eos", "c b a eos", "a a c b eos"],
          "q3": ["a a eos", "c eos", "b c b eos", "b a c c eos"],
          "q4": ["c c eos", "a b eos", "b b a eos", "c a a b c eos"]
        }
      }
    }
  })");
}

Task skewed_multi_answer_task() { return load_task(skewed_multi_answer_definition()); }

Task resolve_task(const std::string& name_or_path) {
  if (name_or_path == "skewed-multi-answer") return skewed_multi_answer_task();
  return load_task_file(name_or_path);
}

}  // namespace dmvr
