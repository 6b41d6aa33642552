#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "sfstm/history.hpp"
#include "sfstm/stm.hpp"

namespace sfstm {

// insert/delete/lookup percentages
enum class Workload { w1, w2, w3 };

const char* workload_name(Workload w);
Workload workload_from_name(const std::string& name);

constexpr unsigned kNoSlowThread = std::numeric_limits<unsigned>::max();

struct BenchOptions {
  Mode mode = Mode::kostm;
  unsigned threads = 8;
  Key keys = 30;  // keys are drawn uniformly from [1, keys]
  unsigned k_versions = 5;
  CFactor c_factor{1, 10};
  std::size_t buckets = 16;
  unsigned gc_interval = 128;
  Workload workload = Workload::w3;
  unsigned ops_per_txn = 10;
  std::uint64_t txns_per_thread = 0;  // committed chains per thread; 0 = run by time
  double duration_s = 0.0;
  double warmup_s = 0.0;
  double interval_s = 5.0;
  std::uint64_t seed = 42;  // thread i draws from seed + i
  bool record = false;      // collect a full history for offline checking
  bool timing = true;       // false: no clocks, zeroed latencies, no intervals
  unsigned slow_thread = kNoSlowThread;
  unsigned slow_delay_us = 0;  // injected before every operation of that thread

  TxnConfig txn_config() const;
};

struct ThreadMetrics {
  std::uint64_t commits = 0;
  std::uint64_t aborts = 0;
  std::uint64_t kills_suffered = 0;    // aborts where a competitor killed us
  std::uint64_t incarnations = 0;      // committed chains + every retry
  std::uint64_t max_incarnations = 0;  // longest retry chain
  double avg_chain_us = 0.0;           // begin of first incarnation to commit
  double worst_chain_us = 0.0;
};

struct IntervalMetrics {
  double start_s = 0.0;  // relative to end of warmup
  std::uint64_t commits = 0;
};

struct BenchResult {
  std::vector<ThreadMetrics> threads;
  ThreadMetrics total;
  std::vector<IntervalMetrics> intervals;
  std::uint64_t version_count_end = 0;
  std::size_t max_versions_seen = 0;  // sampled during the run and at the end
  History history;                    // only when options.record
};

BenchResult run_bench(const BenchOptions& opt);

// One row per thread, a summary row, then one row per elapsed interval.
std::string to_csv(const BenchOptions& opt, const BenchResult& r);

}  // namespace sfstm
