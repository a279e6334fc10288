#include "dmvr/verifier.hpp"

#include <set>

#include "dmvr/errors.hpp"

namespace dmvr {
namespace {

// Per-context value lookup: either one value for all contexts, or an object
// keyed by context name.
template <typename T, typename Parse>
std::vector<T> per_context(const Json& value, const TabularPolicy& shape, Parse parse) {
  std::vector<T> out(shape.contexts().size());
  if (value.is_object()) {
    for (auto it = value.begin(); it != value.end(); ++it) out[shape.context_index(it.key())] = parse(it.value());
  } else {
    const T shared = parse(value);
    std::fill(out.begin(), out.end(), shared);
  }
  return out;
}

Verifier make_membership(const Json& params, const TabularPolicy& shape) {
  auto sets = per_context<std::set<Sequence>>(params.at("accept"), shape, [&](const Json& list) {
    std::set<Sequence> s;
    for (const auto& e : list) {
      auto y = shape.parse_sequence(e.get<std::string>());
      shape.validate_sequence(y);
      s.insert(std::move(y));
    }
    return s;
  });
  return Verifier("membership", [sets = std::move(sets)](const Sequence& y, ContextId ctx) {
    return ctx < sets.size() && sets[ctx].count(y) > 0;
  });
}

Verifier make_sum_mod(const Json& params, const TabularPolicy& shape) {
  const long k = params.at("k").get<long>();
  if (k < 1) throw Error(ErrorCode::InvalidConfig, "sum_mod needs k >= 1");
  std::vector<long> values(shape.vocab().size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<long>(i);
  if (params.contains("values")) {
    for (auto it = params.at("values").begin(); it != params.at("values").end(); ++it) {
      values[static_cast<std::size_t>(shape.vocab().id_of(it.key()))] = it.value().get<long>();
    }
  }
  const Json& target_json = params.contains("targets") ? params.at("targets") : params.at("target");
  auto targets = per_context<long>(target_json, shape, [](const Json& v) { return v.get<long>(); });
  const auto eos = shape.vocab().eos;
  return Verifier("sum_mod", [=](const Sequence& y, ContextId ctx) {
    long sum = 0;
    for (TokenId t : y) {
      if (eos && t == *eos) continue;
      sum += values[static_cast<std::size_t>(t)];
    }
    return ((sum % k) + k) % k == ((targets.at(ctx) % k) + k) % k;
  });
}

Verifier make_balanced_parens(const Json& params, const TabularPolicy& shape) {
  const TokenId open = shape.vocab().id_of(params.value("open", std::string("(")));
  const TokenId close = shape.vocab().id_of(params.value("close", std::string(")")));
  const bool allow_empty = params.value("allow_empty", false);
  const auto eos = shape.vocab().eos;
  return Verifier("balanced_parens", [=](const Sequence& y, ContextId) {
    long depth = 0;
    std::size_t content = 0;
    for (TokenId t : y) {
      if (eos && t == *eos) continue;
      ++content;
      if (t == open) {
        ++depth;
      } else if (t == close) {
        if (--depth < 0) return false;
      } else {
        return false;
      }
    }
    return depth == 0 && (allow_empty || content > 0);
  });
}

std::mutex& registry_mutex() {
  static std::mutex mu;
  return mu;
}

std::map<std::string, VerifierFactory>& registry() {
  static std::map<std::string, VerifierFactory> r{
      {"membership", make_membership},
      {"sum_mod", make_sum_mod},
      {"balanced_parens", make_balanced_parens},
  };
  return r;
}

}  // namespace

Verifier::Verifier(std::string name, Judge judge)
    : name_(std::move(name)), judge_(std::move(judge)), cache_(std::make_shared<Cache>()) {}

bool Verifier::operator()(const Sequence& y, ContextId context) const {
  auto key = std::make_pair(context, y);
  {
    std::lock_guard<std::mutex> lock(cache_->mu);
    auto it = cache_->memo.find(key);
    if (it != cache_->memo.end()) return it->second;
  }
  const bool bit = judge_(y, context);
  cache_->calls.fetch_add(1);
  std::lock_guard<std::mutex> lock(cache_->mu);
  cache_->memo[std::move(key)] = bit;
  return bit;
}

std::size_t Verifier::memo_size() const {
  std::lock_guard<std::mutex> lock(cache_->mu);
  return cache_->memo.size();
}

void register_verifier(const std::string& kind, VerifierFactory factory) {
  std::lock_guard<std::mutex> lock(registry_mutex());
  registry()[kind] = std::move(factory);
}

Verifier make_verifier(const Json& spec, const TabularPolicy& shape) {
  const auto kind = spec.at("kind").get<std::string>();
  VerifierFactory factory;
  {
    std::lock_guard<std::mutex> lock(registry_mutex());
    auto it = registry().find(kind);
    if (it == registry().end()) throw Error(ErrorCode::InvalidConfig, "unknown verifier kind '" + kind + "'");
    factory = it->second;
  }
  const Json params = spec.contains("params") ? spec.at("params") : Json::object();
  try {
    return factory(params, shape);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, "verifier '" + kind + "': " + e.what());
  }
}

std::vector<std::string> registered_verifiers() {
  std::lock_guard<std::mutex> lock(registry_mutex());
  std::vector<std::string> out;
  for (const auto& [k, v] : registry()) out.push_back(k);
  return out;
}

}  // namespace dmvr
