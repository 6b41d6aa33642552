// Command line front end: `bench` drives the contention benchmark, `check`
// runs the offline history checker and exits nonzero on a violation.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sfstm/bench.hpp"
#include "sfstm/checker.hpp"
#include "sfstm/history.hpp"

namespace {

sfstm::Mode mode_from_name(const std::string& name) {
  if (name == "svostm") return sfstm::Mode::svostm;
  if (name == "kostm") return sfstm::Mode::kostm;
  if (name == "mvostm") return sfstm::Mode::mvostm;
  if (name == "mvostm-gc") return sfstm::Mode::mvostm_gc;
  throw CLI::ValidationError("--mode", "expected svostm, kostm, mvostm or mvostm-gc");
}

int run_bench_cmd(const std::string& mode_name, sfstm::BenchOptions& opt,
                  const std::string& c_factor, const std::string& workload,
                  const std::string& record_path, const std::string& csv_path) {
  opt.mode = mode_from_name(mode_name);
  opt.c_factor = sfstm::CFactor::parse(c_factor);
  opt.workload = sfstm::workload_from_name(workload);
  opt.record = !record_path.empty();

  sfstm::BenchResult res = sfstm::run_bench(opt);

  if (!record_path.empty()) sfstm::save_history(res.history, record_path);
  std::string csv = sfstm::to_csv(opt, res);
  if (!csv_path.empty()) {
    std::ofstream out(csv_path);
    if (!out) {
      std::cerr << "cannot write " << csv_path << "\n";
      return 2;
    }
    out << csv;
  } else {
    std::cout << csv;
  }
  return 0;
}

int run_check_cmd(const std::string& mode_name, const std::string& in_path, bool materialized,
                  bool verbose) {
  sfstm::CheckMode mode;
  if (mode_name == "co") {
    mode = sfstm::CheckMode::co_opacity;
  } else if (mode_name == "lo") {
    mode = sfstm::CheckMode::local_opacity;
  } else {
    std::cerr << "check --mode must be co or lo\n";
    return 2;
  }
  sfstm::History h;
  try {
    h = sfstm::load_history(in_path);
  } catch (const std::exception& e) {
    std::cerr << "cannot read history: " << e.what() << "\n";
    return 2;
  }
  sfstm::CheckVerdict v = sfstm::check_history(h, mode, materialized);
  if (v.ok) {
    std::cout << "OK " << v.serial_order.size() << " committed transactions\n";
    if (verbose) {
      std::cout << "serial order:";
      for (sfstm::Timestamp id : v.serial_order) std::cout << ' ' << id;
      std::cout << '\n';
    }
    return 0;
  }
  std::cout << "VIOLATION " << v.detail << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"starvation-free object STM workbench"};
  app.require_subcommand(1);

  auto* bench = app.add_subcommand("bench", "run the contention benchmark");
  sfstm::BenchOptions opt;
  std::string mode_name = "kostm";
  std::string c_factor = "0.1";
  std::string workload = "w3";
  std::string record_path;
  std::string csv_path;
  double duration = 0.0;
  bool no_timing = false;
  bench->add_option("--mode", mode_name, "svostm | kostm | mvostm | mvostm-gc");
  bench->add_option("--threads", opt.threads, "worker threads");
  bench->add_option("--keys", opt.keys, "key range [1, keys]");
  bench->add_option("--k", opt.k_versions, "versions kept per key (kostm)");
  bench->add_option("--c", c_factor, "timestamp spread factor, a decimal like 0.1");
  bench->add_option("--buckets", opt.buckets, "hash buckets");
  bench->add_option("--workload", workload, "w1 (90% reads) | w2 (50%) | w3 (10%)");
  bench->add_option("--ops", opt.ops_per_txn, "operations per transaction");
  bench->add_option("--txns", opt.txns_per_thread, "committed transactions per thread");
  bench->add_option("--duration", duration, "run time in seconds (alternative to --txns)");
  bench->add_option("--warmup", opt.warmup_s, "seconds excluded from interval counts");
  bench->add_option("--interval", opt.interval_s, "interval length for commit counts");
  bench->add_option("--seed", opt.seed, "rng seed; thread i uses seed + i");
  bench->add_option("--gc-interval", opt.gc_interval, "commits between gc sweeps (mvostm-gc)");
  bench->add_option("--slow-thread", opt.slow_thread, "index of a thread to slow down");
  bench->add_option("--slow-delay-us", opt.slow_delay_us, "injected delay per op on it");
  bench->add_option("--record", record_path, "write the history to this file");
  bench->add_option("--csv", csv_path, "write metrics CSV here instead of stdout");
  bench->add_flag("--no-timing", no_timing, "no clocks: deterministic output bytes");

  auto* check = app.add_subcommand("check", "verify a recorded history");
  std::string check_mode;
  std::string in_path;
  bool materialized = false;
  bool verbose = false;
  check->add_option("--mode", check_mode, "co (single version) | lo (multi version)")
      ->required();
  check->add_option("--in", in_path, "history file to verify")->required();
  check->add_flag("--materialized", materialized,
                  "build every sub-history graph explicitly (slow, for cross-checks)");
  check->add_flag("--verbose", verbose, "print the full serial order");

  CLI11_PARSE(app, argc, argv);

  try {
    if (bench->parsed()) {
      opt.duration_s = duration;
      opt.timing = !no_timing;
      return run_bench_cmd(mode_name, opt, c_factor, workload, record_path, csv_path);
    }
    return run_check_cmd(check_mode, in_path, materialized, verbose);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
