#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>

#include "dmvr/json_io.hpp"
#include "dmvr/policy.hpp"

namespace dmvr {

/// Deterministic binary judge v(y, x). Results are memoized per
/// (context, sequence); copies of a Verifier share one memo table. Safe to
/// call from several threads: identical keys always produce identical bits,
/// so concurrent inserts are benign.
class Verifier {
 public:
  using Judge = std::function<bool(const Sequence&, ContextId)>;

  Verifier(std::string name, Judge judge);

  bool operator()(const Sequence& y, ContextId context) const;

  const std::string& name() const noexcept { return name_; }
  /// Number of times the underlying judge actually ran.
  std::size_t judge_calls() const noexcept { return cache_->calls.load(); }
  std::size_t memo_size() const;

 private:
  struct Cache {
    mutable std::mutex mu;
    std::map<std::pair<ContextId, Sequence>, bool> memo;
    std::atomic<std::size_t> calls{0};
  };

  std::string name_;
  Judge judge_;
  std::shared_ptr<Cache> cache_;
};

/// Builds a verifier from {"kind": ..., "params": {...}}. `shape` supplies
/// the vocabulary and context names the params refer to.
using VerifierFactory = std::function<Verifier(const Json& params, const TabularPolicy& shape)>;

void register_verifier(const std::string& kind, VerifierFactory factory);
Verifier make_verifier(const Json& spec, const TabularPolicy& shape);
std::vector<std::string> registered_verifiers();

}  // namespace dmvr
