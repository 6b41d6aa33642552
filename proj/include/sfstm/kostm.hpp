#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>

#include "sfstm/history.hpp"
#include "sfstm/livelist.hpp"
#include "sfstm/rb_lazy_list.hpp"
#include "sfstm/timestamps.hpp"
#include "sfstm/txn.hpp"
#include "sfstm/version_store.hpp"

namespace sfstm {

// Shared counters for liveness diagnostics. A transaction's status moves to
// aborted either by its own commit logic or by a competing committer; the
// starvation argument rests on victims always being younger (larger its).
struct KillStats {
  std::atomic<std::uint64_t> kills{0};
  std::atomic<std::uint64_t> older_victim_kills{0};  // must stay 0
};

// Multi-version object store: every key holds up to k committed versions
// (unbounded when k == 0), readers pick the newest version below their wts,
// and commits settle a real-time range [lower_limit, upper_limit] that fixes
// the transaction's place among its conflicts. Aborted incarnations retry
// with a fresh cts but keep their its; wts grows with the retry count, so an
// old transaction eventually outranks every competitor.
class KostmStore {
 public:
  KostmStore(const TxnConfig& cfg, GlobalCounter& counter, LiveList& live, Recorder* rec,
             KillStats* kills);

  OpResult lookup(const TxnPtr& txn, Key key, std::optional<Value>& out);
  OpResult insert(const TxnPtr& txn, Key key, Value value);
  OpResult remove(const TxnPtr& txn, Key key, std::optional<Value>& out);
  CommitResult try_commit(const TxnPtr& txn);

  // One full sweep with the current minimum live wts. Returns versions freed.
  std::size_t run_gc();

  std::int64_t version_count() const { return version_count_.load(std::memory_order_acquire); }
  std::size_t max_versions_per_key();

  // Test hook: newest visible value of a key, read under the node lock.
  std::optional<Value> peek(Key key);

 private:
  using List = RbLazyList<VersionList>;
  using Node = List::Node;
  using Window = List::Window;

  OpResult read_phase(const TxnPtr& txn, Key key, OpKind op, std::optional<Value>& out);
  OpResult serve_from_log(const TxnPtr& txn, LogEntry& entry, Key key, OpKind op,
                          std::optional<Value>& out);
  CommitResult abort_self(const TxnPtr& txn);
  void record(const TxnPtr& txn, Method m, std::optional<Key> key, std::optional<Value> value,
              std::optional<Timestamp> version_ts, std::uint64_t lp);
  void maybe_auto_gc();

  TxnConfig cfg_;
  GlobalCounter& counter_;
  LiveList& live_;
  Recorder* rec_;
  KillStats* kills_;
  List list_;
  std::atomic<std::int64_t> version_count_{0};
  std::atomic<std::uint64_t> commits_since_gc_{0};
};

}  // namespace sfstm
