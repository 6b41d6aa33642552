#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <thread>
#include <utility>
#include <vector>

#include "sfstm/checker.hpp"
#include "sfstm/stm.hpp"

using namespace sfstm;

namespace {

// Hand-built histories: ids double as cts and, unless overridden, its and wts.
class Hist {
 public:
  Hist& begin(Timestamp id, std::optional<Timestamp> its = std::nullopt,
              std::optional<Timestamp> wts = std::nullopt) {
    its_[id] = its.value_or(id);
    wts_[id] = wts.value_or(id);
    return add(id, Method::begin, std::nullopt, std::nullopt, std::nullopt);
  }
  Hist& lookup(Timestamp id, Key key, std::optional<Value> seen, std::optional<Timestamp> vts) {
    return add(id, Method::lookup, key, seen, vts);
  }
  Hist& del(Timestamp id, Key key, std::optional<Value> seen, std::optional<Timestamp> vts) {
    return add(id, Method::remove, key, seen, vts);
  }
  Hist& ins(Timestamp id, Key key, Value value) {
    return add(id, Method::insert_log, key, value, std::nullopt);
  }
  Hist& commit(Timestamp id) {
    return add(id, Method::tryc_commit, std::nullopt, std::nullopt, std::nullopt);
  }
  Hist& abort(Timestamp id) {
    return add(id, Method::tryc_abort, std::nullopt, std::nullopt, std::nullopt);
  }
  History take() { return std::move(h_); }

 private:
  Hist& add(Timestamp id, Method m, std::optional<Key> key, std::optional<Value> value,
            std::optional<Timestamp> vts) {
    HistoryEvent ev;
    ev.txn_id = id;
    ev.its = its_.count(id) ? its_[id] : id;
    ev.cts = id;
    ev.wts = wts_.count(id) ? wts_[id] : id;
    ev.method = m;
    ev.key = key;
    ev.value = value;
    ev.version_ts = vts;
    ev.lp_seq = ++lp_;
    h_.push_back(ev);
    return *this;
  }

  History h_;
  std::uint64_t lp_ = 0;
  std::map<Timestamp, Timestamp> its_, wts_;
};

std::set<std::pair<Timestamp, Timestamp>> edge_pairs(const MethodGraph& g) {
  std::set<std::pair<Timestamp, Timestamp>> pairs;
  for (const auto& e : g.edges) pairs.insert({e.from, e.to});
  return pairs;
}

// Three overlapping transactions: T1 reads the initial state, T2 overwrites
// one of those keys, T3 starts after T2 and reads its value.
History fixture_history() {
  Hist h;
  h.begin(1).begin(2);
  h.lookup(1, 5, std::nullopt, 0).lookup(1, 7, std::nullopt, 0).del(1, 6, std::nullopt, 0);
  h.commit(1);
  h.ins(2, 5, 2).commit(2);
  h.begin(3);
  h.lookup(3, 5, 2, 2).ins(3, 7, 3).commit(3);
  return h.take();
}

}  // namespace

TEST_CASE("conflict graph of the three-transaction fixture") {
  MethodGraph g = build_co_opacity_graph(fixture_history());
  CHECK(g.vertices == std::vector<Timestamp>{1, 2, 3});

  CHECK(g.has_edge(1, 2, EdgeKind::rv_tryc));  // T1 read key 5 before T2 overwrote it
  CHECK(g.has_edge(1, 3, EdgeKind::rt));
  CHECK(g.has_edge(2, 3, EdgeKind::rt));
  CHECK(g.has_edge(2, 3, EdgeKind::tryc_rv));  // T3 read T2's write

  auto pairs = edge_pairs(g);
  std::set<std::pair<Timestamp, Timestamp>> expect{{1, 2}, {1, 3}, {2, 3}};
  CHECK(pairs == expect);

  std::vector<Timestamp> order;
  REQUIRE(g.topo_sort(order));
  CHECK(order == std::vector<Timestamp>{1, 2, 3});
}

TEST_CASE("multi-version graph of the three-transaction fixture") {
  MethodGraph g = build_opacity_graph(fixture_history());
  CHECK(g.vertices == std::vector<Timestamp>{1, 2, 3});

  CHECK(g.has_edge(1, 2, EdgeKind::mv));   // T1 read the version T2 replaced
  CHECK(g.has_edge(1, 3, EdgeKind::rt));
  CHECK(g.has_edge(2, 3, EdgeKind::rt));
  CHECK(g.has_edge(2, 3, EdgeKind::rvf));  // T3 reads from T2

  auto pairs = edge_pairs(g);
  std::set<std::pair<Timestamp, Timestamp>> expect{{1, 2}, {1, 3}, {2, 3}};
  CHECK(pairs == expect);

  std::vector<Timestamp> order;
  REQUIRE(g.topo_sort(order));
  CHECK(order == std::vector<Timestamp>{1, 2, 3});

  CHECK(sub_histories(fixture_history()).size() == 1);  // no aborts: final only

  for (CheckMode mode : {CheckMode::co_opacity, CheckMode::local_opacity}) {
    CheckVerdict v = check_history(fixture_history(), mode);
    INFO(v.detail);
    CHECK(v.ok);
    CHECK(v.serial_order == std::vector<Timestamp>{1, 2, 3});
  }
}

TEST_CASE("topological order is deterministic") {
  MethodGraph g;
  g.vertices = {1, 2, 3};
  std::vector<Timestamp> order;
  REQUIRE(g.topo_sort(order));
  CHECK(order == std::vector<Timestamp>{1, 2, 3});  // ties leave smallest first

  g.edges.push_back({3, 1, EdgeKind::rt});
  REQUIRE(g.topo_sort(order));
  CHECK(order == std::vector<Timestamp>{2, 3, 1});

  CHECK_FALSE(g.has_edge(1, 3, EdgeKind::rt));
  CHECK(g.has_edge(3, 1, EdgeKind::rt));
}

TEST_CASE("a cross read cycle fails both modes") {
  // T1 reads key 1 before T2 overwrites it, then reads T2's key 2: T1 must
  // serialize both before and after T2.
  Hist h;
  h.begin(1).begin(2);
  h.lookup(1, 1, std::nullopt, 0);
  h.ins(2, 1, 10).ins(2, 2, 20).commit(2);
  h.lookup(1, 2, 20, 2).commit(1);
  History hist = h.take();

  MethodGraph co = build_co_opacity_graph(hist);
  CHECK(co.has_edge(1, 2, EdgeKind::rv_tryc));
  CHECK(co.has_edge(2, 1, EdgeKind::tryc_rv));
  std::vector<Timestamp> order;
  std::vector<GraphEdge> cycle;
  CHECK_FALSE(co.topo_sort(order, &cycle));
  CHECK(cycle.size() >= 2);
  CHECK(cycle.front().from == cycle.back().to);  // the witness closes

  MethodGraph lo = build_opacity_graph(hist);
  CHECK(lo.has_edge(1, 2, EdgeKind::mv));
  CHECK(lo.has_edge(2, 1, EdgeKind::rvf));

  for (CheckMode mode : {CheckMode::co_opacity, CheckMode::local_opacity}) {
    CheckVerdict v = check_history(hist, mode);
    CHECK_FALSE(v.ok);
    CHECK(v.cycle.size() >= 2);
    CHECK_FALSE(v.detail.empty());
  }
}

TEST_CASE("a stale read of the initial version fails") {
  // T2 begins after T1 committed key 1 yet observes the key as still absent.
  Hist h;
  h.begin(1).ins(1, 1, 10).commit(1);
  h.begin(2).lookup(2, 1, std::nullopt, 0).commit(2);
  History hist = h.take();

  CheckVerdict co = check_history(hist, CheckMode::co_opacity);
  CHECK_FALSE(co.ok);  // acyclic, but the serial replay sees value 10
  CHECK(co.cycle.empty());
  CHECK_FALSE(co.detail.empty());

  CheckVerdict lo = check_history(hist, CheckMode::local_opacity);
  CHECK_FALSE(lo.ok);  // the version order edge T2 -> T1 closes a cycle
}

TEST_CASE("invalid reads are rejected outright") {
  // Reading a version before its creator committed.
  {
    Hist h;
    h.begin(1).begin(2);
    h.ins(2, 1, 10);
    h.lookup(1, 1, 10, 2);  // T2 has not committed yet
    h.commit(2).commit(1);
    CheckVerdict v = check_history(h.take(), CheckMode::co_opacity);
    CHECK_FALSE(v.ok);
    CHECK_FALSE(v.detail.empty());
  }
  // Reading a value the version never held.
  {
    Hist h;
    h.begin(1).ins(1, 1, 10).commit(1);
    h.begin(2).lookup(2, 1, 99, 1).commit(2);
    CheckVerdict v = check_history(h.take(), CheckMode::co_opacity);
    CHECK_FALSE(v.ok);
  }
  // Reading a version from a transaction that never updated the key.
  {
    Hist h;
    h.begin(1).ins(1, 2, 10).commit(1);
    h.begin(2).lookup(2, 1, 10, 1).commit(2);
    CheckVerdict v = check_history(h.take(), CheckMode::co_opacity);
    CHECK_FALSE(v.ok);
  }
  // Reading a version created by an aborted transaction.
  {
    Hist h;
    h.begin(1).ins(1, 1, 10).abort(1);
    h.begin(2).lookup(2, 1, 10, 1).commit(2);
    CheckVerdict v = check_history(h.take(), CheckMode::local_opacity);
    CHECK_FALSE(v.ok);
  }
  // Observing a value in the initial version.
  {
    Hist h;
    h.begin(1).lookup(1, 1, 10, 0).commit(1);
    CheckVerdict v = check_history(h.take(), CheckMode::co_opacity);
    CHECK_FALSE(v.ok);
  }
  // Observing presence where the version is an effective delete.
  {
    Hist h;
    h.begin(1).ins(1, 1, 10).commit(1);
    h.begin(2).del(2, 1, 10, 1).commit(2);
    h.begin(3).lookup(3, 1, 10, 2).commit(3);
    CheckVerdict v = check_history(h.take(), CheckMode::co_opacity);
    CHECK_FALSE(v.ok);
  }
  // Reading from an unknown transaction.
  {
    Hist h;
    h.begin(1).lookup(1, 1, 10, 77).commit(1);
    CheckVerdict v = check_history(h.take(), CheckMode::co_opacity);
    CHECK_FALSE(v.ok);
  }
}

TEST_CASE("malformed histories throw from the graph builders") {
  {
    Hist h;
    h.begin(1).begin(1);
    CHECK_THROWS_AS(build_co_opacity_graph(h.take()), std::invalid_argument);
  }
  {
    Hist h;
    h.ins(1, 1, 10);  // no begin
    CHECK_THROWS_AS(build_co_opacity_graph(h.take()), std::invalid_argument);
  }
  {
    Hist h;
    h.begin(1).commit(1).commit(1);
    CHECK_THROWS_AS(build_opacity_graph(h.take()), std::invalid_argument);
  }
  {
    Hist h;
    h.begin(1).commit(1).ins(1, 1, 10);  // event after the terminal
    CHECK_THROWS_AS(build_co_opacity_graph(h.take()), std::invalid_argument);
  }
  // check_history reports the same condition as a verdict instead of throwing
  {
    Hist h;
    h.begin(1).begin(1);
    CheckVerdict v = check_history(h.take(), CheckMode::local_opacity);
    CHECK_FALSE(v.ok);
    CHECK_FALSE(v.detail.empty());
  }
}

TEST_CASE("effective deletes write; failed deletes do not") {
  // T1 deletes an absent key (no effect), T2 then inserts it, T3 deletes it
  // for real, T4 reads it as absent from T3's delete version.
  Hist h;
  h.begin(1).del(1, 4, std::nullopt, 0).commit(1);
  h.begin(2).ins(2, 4, 40).commit(2);
  h.begin(3).del(3, 4, 40, 2).commit(3);
  h.begin(4).lookup(4, 4, std::nullopt, 3).commit(4);
  History hist = h.take();

  MethodGraph co = build_co_opacity_graph(hist);
  // T1 never wrote key 4, so there is no writer-order edge out of it beyond
  // its reads; T4 reads T3's delete version.
  CHECK(co.has_edge(3, 4, EdgeKind::tryc_rv));
  CHECK(co.has_edge(1, 2, EdgeKind::rv_tryc));  // T1 observed the initial state
  CHECK(co.has_edge(2, 3, EdgeKind::tryc_tryc));
  CHECK_FALSE(co.has_edge(1, 2, EdgeKind::tryc_tryc));

  for (CheckMode mode : {CheckMode::co_opacity, CheckMode::local_opacity}) {
    CheckVerdict v = check_history(hist, mode);
    INFO(v.detail);
    CHECK(v.ok);
    CHECK(v.serial_order == std::vector<Timestamp>{1, 2, 3, 4});
  }
}

TEST_CASE("log-served reads carry no version and are skipped") {
  Hist h;
  h.begin(1).ins(1, 1, 10);
  h.lookup(1, 1, 10, std::nullopt);             // own log, no shared access
  h.del(1, 1, 10, std::nullopt);                // deletes its own pending insert
  h.del(1, 1, std::nullopt, std::nullopt);      // repeated delete, still log-only
  h.commit(1);
  History hist = h.take();

  CheckVerdict v = check_history(hist, CheckMode::local_opacity);
  INFO(v.detail);
  CHECK(v.ok);

  // the first delete kept its effect: key 1 ends up absent
  Hist h2;
  h2.begin(1).ins(1, 1, 10);
  h2.del(1, 1, 10, std::nullopt);
  h2.commit(1);
  h2.begin(2).lookup(2, 1, std::nullopt, 1).commit(2);  // delete version of T1
  v = check_history(h2.take(), CheckMode::co_opacity);
  INFO(v.detail);
  CHECK(v.ok);
}

TEST_CASE("sub-histories cut at every abort") {
  Hist h;
  h.begin(1).ins(1, 1, 10).commit(1);
  h.begin(2).lookup(2, 1, 10, 1).abort(2);
  h.begin(3).ins(3, 1, 30).commit(3);
  h.begin(4).lookup(4, 9, std::nullopt, 0).abort(4);
  History hist = h.take();

  std::vector<History> subs = sub_histories(hist);
  REQUIRE(subs.size() == 3);  // two aborts plus the final committed history

  // First sub: T1's events, T2's events with a synthetic commit, no T3/T4.
  const History& s0 = subs[0];
  bool saw_synthetic = false;
  for (const auto& ev : s0) {
    CHECK(ev.txn_id != 3);
    CHECK(ev.txn_id != 4);
    if (ev.txn_id == 2 && ev.method == Method::tryc_commit) saw_synthetic = true;
    CHECK(ev.method != Method::tryc_abort);
  }
  CHECK(saw_synthetic);

  // Second sub: T4's synthetic commit plus both real committers.
  const History& s1 = subs[1];
  std::set<Timestamp> ids;
  for (const auto& ev : s1) ids.insert(ev.txn_id);
  CHECK(ids == std::set<Timestamp>{1, 3, 4});

  // Final sub: committed transactions only.
  const History& s2 = subs[2];
  ids.clear();
  for (const auto& ev : s2) ids.insert(ev.txn_id);
  CHECK(ids == std::set<Timestamp>{1, 3});

  CheckVerdict v = check_history(hist, CheckMode::local_opacity);
  INFO(v.detail);
  CHECK(v.ok);
}

TEST_CASE("an aborted reader that saw inconsistent state is caught") {
  // T2 reads key 1 from the initial state, T3 overwrites keys 1 and 2, then
  // T2 reads T3's key 2: consistent for conflict order (T2 never commits a
  // write), but its own sub-history has no serialization.
  Hist h;
  h.begin(1).ins(1, 1, 10).ins(1, 2, 20).commit(1);
  h.begin(2).begin(3);
  h.lookup(2, 1, 10, 1);
  h.ins(3, 1, 11).ins(3, 2, 21).commit(3);
  h.lookup(2, 2, 21, 3);  // fresh value after an old one
  h.abort(2);
  History hist = h.take();

  CheckVerdict lo = check_history(hist, CheckMode::local_opacity);
  CHECK_FALSE(lo.ok);

  // conflict order over committed transactions alone stays clean
  CheckVerdict co = check_history(hist, CheckMode::co_opacity);
  INFO(co.detail);
  CHECK(co.ok);
}

TEST_CASE("unterminated transactions are treated as aborted at the end") {
  Hist h;
  h.begin(1).ins(1, 1, 10).commit(1);
  h.begin(2).lookup(2, 1, 10, 1);  // never terminates
  History hist = h.take();

  CHECK(sub_histories(hist).size() == 2);
  CheckVerdict v = check_history(hist, CheckMode::local_opacity);
  INFO(v.detail);
  CHECK(v.ok);
  CHECK(v.serial_order == std::vector<Timestamp>{1});
}

TEST_CASE("empty and trivial histories pass") {
  History empty;
  CheckVerdict v = check_history(empty, CheckMode::co_opacity);
  CHECK(v.ok);
  CHECK(v.serial_order.empty());

  Hist h;
  h.begin(1);
  v = check_history(h.take(), CheckMode::local_opacity);
  CHECK(v.ok);
}

TEST_CASE("fast and materialized local opacity agree on live histories") {
  for (Mode mode : {Mode::kostm, Mode::mvostm}) {
    Recorder rec;
    TxnConfig cfg;
    cfg.mode = mode;
    cfg.k_versions = mode == Mode::kostm ? 5 : kUnboundedVersions;
    Stm stm(cfg, &rec);

    constexpr int kThreads = 3;
    constexpr int kChains = 250;
    std::vector<std::thread> workers;
    for (int i = 0; i < kThreads; ++i)
      workers.emplace_back([&stm, i] {
        std::mt19937_64 rng(500 + i);
        for (int c = 0; c < kChains; ++c) {
          std::optional<Timestamp> its;
          for (;;) {
            TxnPtr txn = stm.begin(its);
            its = txn->initial_ts;
            bool alive = true;
            for (int op = 0; op < 8 && alive; ++op) {
              Key key = 1 + rng() % 10;
              std::optional<Value> out;
              OpResult r = OpResult::ok;
              switch (rng() % 4) {
                case 0: r = stm.insert(txn, key, rng() | 1); break;
                case 1: r = stm.remove(txn, key, out); break;
                default: r = stm.lookup(txn, key, out); break;
              }
              alive = r == OpResult::ok;
            }
            if (alive && stm.try_commit(txn) == CommitResult::committed) break;
          }
        }
      });
    for (auto& w : workers) w.join();

    History h = rec.take();
    CheckVerdict fast = check_history(h, CheckMode::local_opacity);
    CheckVerdict slow = check_history(h, CheckMode::local_opacity, true);
    INFO(fast.detail);
    INFO(slow.detail);
    CHECK(fast.ok);
    CHECK(slow.ok);
    CHECK(fast.serial_order == slow.serial_order);

    // decisions are a pure function of the bytes
    CheckVerdict again = check_history(h, CheckMode::local_opacity);
    CHECK(again.ok == fast.ok);
    CHECK(again.serial_order == fast.serial_order);
  }
}
