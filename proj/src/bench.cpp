#include "sfstm/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace sfstm {

const char* workload_name(Workload w) {
  switch (w) {
    case Workload::w1: return "w1";
    case Workload::w2: return "w2";
    case Workload::w3: return "w3";
  }
  return "?";
}

Workload workload_from_name(const std::string& name) {
  if (name == "w1") return Workload::w1;
  if (name == "w2") return Workload::w2;
  if (name == "w3") return Workload::w3;
  throw std::invalid_argument("unknown workload: " + name);
}

TxnConfig BenchOptions::txn_config() const {
  TxnConfig cfg;
  cfg.mode = mode;
  switch (mode) {
    case Mode::svostm: cfg.k_versions = 1; break;
    case Mode::kostm: cfg.k_versions = k_versions; break;
    case Mode::mvostm:
    case Mode::mvostm_gc: cfg.k_versions = kUnboundedVersions; break;
  }
  cfg.c_factor = c_factor;
  cfg.buckets = buckets;
  cfg.gc_enabled = (mode == Mode::mvostm_gc);
  cfg.gc_interval = gc_interval;
  return cfg;
}

namespace {

struct ScriptOp {
  OpKind kind;
  Key key;
  Value value;
};

struct MixPct {
  unsigned insert;
  unsigned remove;
};

MixPct mix_of(Workload w) {
  switch (w) {
    case Workload::w1: return {5, 5};    // 90% lookups
    case Workload::w2: return {25, 25};  // 50% lookups
    case Workload::w3: return {45, 45};  // 10% lookups
  }
  return {45, 45};
}

using Clock = std::chrono::steady_clock;

double us_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::micro>(b - a).count();
}

struct WorkerShared {
  Stm* stm = nullptr;
  const BenchOptions* opt = nullptr;
  std::atomic<bool> stop{false};
  std::atomic<std::uint64_t> commits{0};
  std::atomic<unsigned> done{0};
};

void worker(WorkerShared& sh, unsigned index, ThreadMetrics& out) {
  const BenchOptions& opt = *sh.opt;
  std::mt19937_64 rng(opt.seed + index);
  MixPct mix = mix_of(opt.workload);
  bool slow = (index == opt.slow_thread) && opt.slow_delay_us > 0;

  double chain_us_sum = 0.0;
  std::vector<ScriptOp> script(opt.ops_per_txn);

  for (std::uint64_t done_chains = 0;; ++done_chains) {
    if (opt.txns_per_thread > 0) {
      if (done_chains >= opt.txns_per_thread) break;
    } else if (sh.stop.load(std::memory_order_relaxed)) {
      break;
    }

    // One logical transaction: the same operations replay on every retry.
    for (ScriptOp& op : script) {
      unsigned pct = static_cast<unsigned>(rng() % 100);
      op.kind = pct < mix.insert                ? OpKind::insert
                : pct < mix.insert + mix.remove ? OpKind::remove
                                                : OpKind::lookup;
      op.key = 1 + static_cast<Key>(rng() % opt.keys);
      op.value = rng() | 1;  // nonzero payload
    }

    Clock::time_point chain_start{};
    if (opt.timing) chain_start = Clock::now();
    std::optional<Timestamp> its;
    std::uint64_t chain_incarnations = 0;

    for (;;) {
      TxnPtr txn = sh.stm->begin(its);
      its = txn->initial_ts;
      ++chain_incarnations;
      ++out.incarnations;

      bool alive = true;
      for (const ScriptOp& op : script) {
        if (slow) std::this_thread::sleep_for(std::chrono::microseconds(opt.slow_delay_us));
        std::optional<Value> unused;
        OpResult r = OpResult::ok;
        switch (op.kind) {
          case OpKind::insert: r = sh.stm->insert(txn, op.key, op.value); break;
          case OpKind::remove: r = sh.stm->remove(txn, op.key, unused); break;
          case OpKind::lookup: r = sh.stm->lookup(txn, op.key, unused); break;
        }
        if (r == OpResult::aborted) {
          alive = false;
          break;
        }
      }
      if (alive && sh.stm->try_commit(txn) == CommitResult::committed) {
        ++out.commits;
        sh.commits.fetch_add(1, std::memory_order_relaxed);
        break;
      }
      ++out.aborts;
      if (txn->killed_by_peer) ++out.kills_suffered;
    }

    out.max_incarnations = std::max(out.max_incarnations, chain_incarnations);
    if (opt.timing) {
      double us = us_between(chain_start, Clock::now());
      chain_us_sum += us;
      out.worst_chain_us = std::max(out.worst_chain_us, us);
    }
  }
  if (out.commits > 0) out.avg_chain_us = chain_us_sum / static_cast<double>(out.commits);
  sh.done.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace

BenchResult run_bench(const BenchOptions& opt) {
  if (opt.threads == 0) throw std::invalid_argument("need at least one thread");
  if (opt.keys == 0) throw std::invalid_argument("need at least one key");
  if (opt.txns_per_thread == 0 && opt.duration_s <= 0)
    throw std::invalid_argument("need a transaction count or a duration");
  if (!opt.timing && opt.txns_per_thread == 0)
    throw std::invalid_argument("timing-free runs need a transaction count");
  if (opt.slow_thread != kNoSlowThread && opt.slow_thread >= opt.threads)
    throw std::invalid_argument("slow thread index out of range");

  Recorder recorder;
  Stm stm(opt.txn_config(), opt.record ? &recorder : nullptr);

  WorkerShared sh;
  sh.stm = &stm;
  sh.opt = &opt;

  BenchResult res;
  res.threads.assign(opt.threads, ThreadMetrics{});

  std::vector<std::thread> threads;
  threads.reserve(opt.threads);
  for (unsigned i = 0; i < opt.threads; ++i)
    threads.emplace_back(worker, std::ref(sh), i, std::ref(res.threads[i]));

  if (opt.timing) {
    auto start = Clock::now();
    auto elapsed_s = [&] {
      return std::chrono::duration<double>(Clock::now() - start).count();
    };
    std::uint64_t commits_at_interval_start = 0;
    double next_interval = opt.warmup_s + opt.interval_s;
    bool warmup_done = opt.warmup_s <= 0;
    if (warmup_done) commits_at_interval_start = 0;
    for (;;) {
      if (sh.done.load(std::memory_order_relaxed) == opt.threads) break;
      if (opt.txns_per_thread == 0 && elapsed_s() >= opt.warmup_s + opt.duration_s) {
        sh.stop.store(true, std::memory_order_relaxed);
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
      double t = elapsed_s();
      if (!warmup_done && t >= opt.warmup_s) {
        warmup_done = true;
        commits_at_interval_start = sh.commits.load(std::memory_order_relaxed);
      }
      if (warmup_done && opt.interval_s > 0 && t >= next_interval) {
        std::uint64_t now_commits = sh.commits.load(std::memory_order_relaxed);
        res.intervals.push_back(
            IntervalMetrics{next_interval - opt.interval_s - opt.warmup_s,
                            now_commits - commits_at_interval_start});
        commits_at_interval_start = now_commits;
        next_interval += opt.interval_s;
        res.max_versions_seen = std::max(res.max_versions_seen, stm.max_versions_per_key());
      }
    }
  }
  for (auto& t : threads) t.join();

  res.max_versions_seen = std::max(res.max_versions_seen, stm.max_versions_per_key());
  res.version_count_end = stm.version_count();

  for (const ThreadMetrics& m : res.threads) {
    res.total.commits += m.commits;
    res.total.aborts += m.aborts;
    res.total.kills_suffered += m.kills_suffered;
    res.total.incarnations += m.incarnations;
    res.total.max_incarnations = std::max(res.total.max_incarnations, m.max_incarnations);
    res.total.worst_chain_us = std::max(res.total.worst_chain_us, m.worst_chain_us);
    res.total.avg_chain_us += m.avg_chain_us * static_cast<double>(m.commits);
  }
  if (res.total.commits > 0)
    res.total.avg_chain_us /= static_cast<double>(res.total.commits);

  if (opt.record) {
    res.history = recorder.take();
    sort_history(res.history);
  }
  return res;
}

std::string to_csv(const BenchOptions& opt, const BenchResult& r) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(3);
  os << "kind,id,commits,aborts,kills,incarnations,max_incarnations,"
        "avg_chain_us,worst_chain_us,interval_start_s\n";
  auto row = [&](const char* kind, const std::string& id, const ThreadMetrics& m) {
    os << kind << ',' << id << ',' << m.commits << ',' << m.aborts << ',' << m.kills_suffered
       << ',' << m.incarnations << ',' << m.max_incarnations << ','
       << (opt.timing ? m.avg_chain_us : 0.0) << ','
       << (opt.timing ? m.worst_chain_us : 0.0) << ",\n";
  };
  for (std::size_t i = 0; i < r.threads.size(); ++i)
    row("thread", std::to_string(i), r.threads[i]);
  row("summary", "all", r.total);
  for (std::size_t i = 0; i < r.intervals.size(); ++i)
    os << "interval," << i << ',' << r.intervals[i].commits << ",,,,,,," << r.intervals[i].start_s
       << '\n';
  return os.str();
}

}  // namespace sfstm
