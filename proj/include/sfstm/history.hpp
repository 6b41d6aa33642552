#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "sfstm/timestamps.hpp"

namespace sfstm {

enum class Method { begin, lookup, insert_log, remove, tryc_commit, tryc_abort };

const char* method_name(Method m);
std::optional<Method> method_from_name(const std::string& name);

// One recorded event. lp_seq is drawn from a dedicated counter at the method's
// linearization point: immediately before its first unlock for methods that
// touched shared memory, at return for methods served from the transaction's
// own log. Every analysis is a pure function of these records.
struct HistoryEvent {
  Timestamp txn_id = 0;  // the incarnation's cts; globally unique
  Timestamp its = 0;
  Timestamp cts = 0;
  Timestamp wts = 0;
  Method method = Method::begin;
  std::optional<Key> key;
  std::optional<Value> value;        // value observed (reads) or written (inserts)
  std::optional<Timestamp> version_ts;  // creator cts of the version read; 0 = initial
  std::uint64_t lp_seq = 0;

  std::string to_line() const;
  static HistoryEvent from_line(const std::string& line);
};

using History = std::vector<HistoryEvent>;

// Sorts by lp_seq; recording order is arbitrary because threads flush
// independently.
void sort_history(History& h);

History load_history(const std::string& path);
void save_history(const History& h, const std::string& path);

// Thread-safe append log. next_lp() is called at the linearization point
// itself (under the method's locks); append may happen later.
class Recorder {
 public:
  std::uint64_t next_lp() { return lp_.fetch_add(1, std::memory_order_acq_rel) + 1; }

  void append(HistoryEvent ev) {
    std::lock_guard<std::mutex> g(lock_);
    events_.push_back(std::move(ev));
  }

  History take() {
    std::lock_guard<std::mutex> g(lock_);
    History out = std::move(events_);
    events_.clear();
    sort_history(out);
    return out;
  }

  History snapshot() const {
    std::lock_guard<std::mutex> g(lock_);
    History out = events_;
    sort_history(out);
    return out;
  }

 private:
  std::atomic<std::uint64_t> lp_{0};
  mutable std::mutex lock_;
  std::vector<HistoryEvent> events_;
};

}  // namespace sfstm
