#pragma once

#include <atomic>
#include <cstdint>
#include <optional>

#include "sfstm/history.hpp"
#include "sfstm/kostm.hpp"  // KillStats
#include "sfstm/livelist.hpp"
#include "sfstm/rb_lazy_list.hpp"
#include "sfstm/timestamps.hpp"
#include "sfstm/txn.hpp"
#include "sfstm/version_store.hpp"

namespace sfstm {

// Single-version object store: each node carries the current value and the
// readers that observed it since the last write. A committing writer settles
// with those readers by its-priority: live younger readers are aborted, a
// live older reader aborts the writer, and the writer retries with a fresh
// cts until it is the oldest party left standing.
class SvostmStore {
 public:
  SvostmStore(const TxnConfig& cfg, LiveList& live, Recorder* rec, KillStats* kills);

  OpResult lookup(const TxnPtr& txn, Key key, std::optional<Value>& out);
  OpResult insert(const TxnPtr& txn, Key key, Value value);
  OpResult remove(const TxnPtr& txn, Key key, std::optional<Value>& out);
  CommitResult try_commit(const TxnPtr& txn);

  // Test hook: current visible value of a key, read under the node lock.
  std::optional<Value> peek(Key key);

 private:
  using List = RbLazyList<SvCell>;
  using Node = List::Node;
  using Window = List::Window;

  OpResult read_phase(const TxnPtr& txn, Key key, OpKind op, std::optional<Value>& out);
  CommitResult abort_self(const TxnPtr& txn);
  void record(const TxnPtr& txn, Method m, std::optional<Key> key, std::optional<Value> value,
              std::optional<Timestamp> version_ts, std::uint64_t lp);

  TxnConfig cfg_;
  LiveList& live_;
  Recorder* rec_;
  KillStats* kills_;
  List list_;
};

}  // namespace sfstm
