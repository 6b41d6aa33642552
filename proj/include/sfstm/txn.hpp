#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>

#include "sfstm/timestamps.hpp"

namespace sfstm {

enum class Mode { svostm, kostm, mvostm, mvostm_gc };

enum class TxnStatus { live, committed, aborted };

enum class OpKind { lookup, insert, remove };

// Outcome of a single transactional method. `aborted` ends the transaction;
// the caller is expected to start a new incarnation with the same initial_ts.
enum class OpResult { ok, aborted };

enum class CommitResult { committed, aborted };

// Unbounded version retention (mvostm / mvostm-gc).
inline constexpr unsigned kUnboundedVersions = 0;

struct TxnConfig {
  Mode mode = Mode::kostm;
  unsigned k_versions = 5;      // kUnboundedVersions keeps every version
  CFactor c_factor{1, 10};      // wts drift factor, exact decimal
  std::size_t buckets = 16;     // hash table width, key % buckets
  bool gc_enabled = false;      // only meaningful with unbounded versions
  unsigned gc_interval = 128;   // commits between automatic collection sweeps

  void validate() const {
    if (mode == Mode::svostm) return;
    if (!c_factor.positive()) throw std::invalid_argument("c factor must be positive");
    if (mode == Mode::kostm && k_versions == kUnboundedVersions)
      throw std::invalid_argument("bounded mode requires k >= 1");
    if (mode == Mode::mvostm || mode == Mode::mvostm_gc) {
      if (k_versions != kUnboundedVersions)
        throw std::invalid_argument("unbounded modes keep every version");
    }
    if (gc_enabled && k_versions != kUnboundedVersions)
      throw std::invalid_argument("gc requires unbounded version retention");
  }
};

// Per-key redo/undo record. Later update methods on the same key overwrite
// op and value; lookups only fill the observed value.
struct LogEntry {
  OpKind op = OpKind::lookup;
  std::optional<Value> value;    // insert payload, or the value a read observed
  bool observed_present = false; // the read phase (or own insert) saw a value
};

// One transaction incarnation. The state mutex guards status and both commit
// range limits; other transactions mutate them (kill, upper-limit clamp) while
// holding it, and the owner re-reads them at its gates under the same lock.
struct TxnDescriptor {
  const Timestamp initial_ts;
  const Timestamp current_ts;
  const Timestamp working_ts;  // == current_ts under svostm

  std::mutex state_lock;
  TxnStatus status = TxnStatus::live;
  bool killed_by_peer = false;   // set only by another transaction's commit
  Timestamp lower_limit;         // tltl: non-decreasing while live
  Timestamp upper_limit = kInfinity;  // tutl: non-increasing while live

  std::map<Key, LogEntry> log;   // owner thread only

  TxnDescriptor(Timestamp its, Timestamp cts, Timestamp wts)
      : initial_ts(its), current_ts(cts), working_ts(wts), lower_limit(cts) {}

  // (wts, cts) lexicographic priority; cts uniqueness makes it total.
  bool ts_less(const TxnDescriptor& other) const {
    if (working_ts != other.working_ts) return working_ts < other.working_ts;
    return current_ts < other.current_ts;
  }
};

using TxnPtr = std::shared_ptr<TxnDescriptor>;

}  // namespace sfstm
