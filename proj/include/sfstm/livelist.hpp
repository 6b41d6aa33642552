#pragma once

#include <mutex>
#include <optional>
#include <set>

#include "sfstm/timestamps.hpp"

namespace sfstm {

// Working timestamps of transactions that have begun and not yet terminated.
// The garbage collector reclaims only versions no entry here can still read.
// Duplicate wts values are possible across incarnation chains, hence multiset.
class LiveList {
 public:
  void add(Timestamp wts) {
    std::lock_guard<std::mutex> g(lock_);
    live_.insert(wts);
  }

  void remove(Timestamp wts) {
    std::lock_guard<std::mutex> g(lock_);
    auto it = live_.find(wts);
    if (it != live_.end()) live_.erase(it);
  }

  // Smallest live wts; infinity when nothing is live (collect everything but
  // the newest version of each key).
  Timestamp min_live_wts() const {
    std::lock_guard<std::mutex> g(lock_);
    return live_.empty() ? kInfinity : *live_.begin();
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> g(lock_);
    return live_.size();
  }

 private:
  mutable std::mutex lock_;
  std::multiset<Timestamp> live_;
};

}  // namespace sfstm
