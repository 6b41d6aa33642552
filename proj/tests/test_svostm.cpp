#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <map>
#include <optional>
#include <random>
#include <thread>
#include <vector>

#include "sfstm/checker.hpp"
#include "sfstm/stm.hpp"

using namespace sfstm;

namespace {

TxnConfig sv_config() {
  TxnConfig cfg;
  cfg.mode = Mode::svostm;
  return cfg;
}

// Runs one committed chain: retries with the same initial timestamp until the
// transaction commits, like an application loop would.
template <typename Body>
void run_chain(Stm& stm, Body&& body) {
  std::optional<Timestamp> its;
  for (;;) {
    TxnPtr txn = stm.begin(its);
    its = txn->initial_ts;
    if (!body(txn)) continue;
    if (stm.try_commit(txn) == CommitResult::committed) return;
  }
}

}  // namespace

TEST_CASE("single transaction sees its own log") {
  Stm stm(sv_config());
  TxnPtr t = stm.begin();
  std::optional<Value> out;

  REQUIRE(stm.lookup(t, 5, out) == OpResult::ok);
  CHECK_FALSE(out.has_value());

  REQUIRE(stm.insert(t, 5, 50) == OpResult::ok);
  REQUIRE(stm.lookup(t, 5, out) == OpResult::ok);
  CHECK(out == Value{50});

  REQUIRE(stm.remove(t, 5, out) == OpResult::ok);
  CHECK(out == Value{50});
  REQUIRE(stm.lookup(t, 5, out) == OpResult::ok);
  CHECK_FALSE(out.has_value());

  REQUIRE(stm.insert(t, 5, 51) == OpResult::ok);
  REQUIRE(stm.try_commit(t) == CommitResult::committed);
  CHECK(stm.peek(5) == Value{51});

  CHECK_THROWS_AS(stm.insert(t, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(stm.lookup(t, kInfinity, out), std::invalid_argument);
}

TEST_CASE("commits publish and deletes unpublish") {
  Stm stm(sv_config());
  std::optional<Value> out;

  TxnPtr t1 = stm.begin();
  stm.insert(t1, 7, 70);
  stm.insert(t1, 8, 80);
  REQUIRE(stm.try_commit(t1) == CommitResult::committed);
  CHECK(stm.peek(7) == Value{70});
  CHECK(stm.peek(8) == Value{80});

  TxnPtr t2 = stm.begin();
  REQUIRE(stm.remove(t2, 7, out) == OpResult::ok);
  CHECK(out == Value{70});
  REQUIRE(stm.try_commit(t2) == CommitResult::committed);
  CHECK_FALSE(stm.peek(7).has_value());
  CHECK(stm.peek(8) == Value{80});

  // deleted keys stay physically present but read as absent
  TxnPtr t3 = stm.begin();
  REQUIRE(stm.lookup(t3, 7, out) == OpResult::ok);
  CHECK_FALSE(out.has_value());
  REQUIRE(stm.try_commit(t3) == CommitResult::committed);

  // and can be reinserted
  TxnPtr t4 = stm.begin();
  stm.insert(t4, 7, 71);
  REQUIRE(stm.try_commit(t4) == CommitResult::committed);
  CHECK(stm.peek(7) == Value{71});
}

TEST_CASE("a repeated delete still applies the first one") {
  Stm stm(sv_config());
  std::optional<Value> out;

  TxnPtr t1 = stm.begin();
  stm.insert(t1, 5, 50);
  REQUIRE(stm.try_commit(t1) == CommitResult::committed);

  TxnPtr t2 = stm.begin();
  REQUIRE(stm.remove(t2, 5, out) == OpResult::ok);
  CHECK(out == Value{50});
  REQUIRE(stm.remove(t2, 5, out) == OpResult::ok);
  CHECK_FALSE(out.has_value());  // second delete sees the key already gone
  REQUIRE(stm.try_commit(t2) == CommitResult::committed);
  CHECK_FALSE(stm.peek(5).has_value());  // the first delete must reach the store
}

TEST_CASE("a delete of an absent key commits without effect") {
  Stm stm(sv_config());
  std::optional<Value> out;

  TxnPtr t = stm.begin();
  REQUIRE(stm.remove(t, 9, out) == OpResult::ok);
  CHECK_FALSE(out.has_value());
  REQUIRE(stm.try_commit(t) == CommitResult::committed);
  CHECK_FALSE(stm.peek(9).has_value());

  TxnPtr t2 = stm.begin();
  stm.insert(t2, 9, 90);
  REQUIRE(stm.try_commit(t2) == CommitResult::committed);
  CHECK(stm.peek(9) == Value{90});
}

TEST_CASE("an older writer kills a younger live reader") {
  Stm stm(sv_config());
  std::optional<Value> out;

  TxnPtr writer = stm.begin();  // older its
  TxnPtr reader = stm.begin();
  REQUIRE(stm.lookup(reader, 4, out) == OpResult::ok);

  stm.insert(writer, 4, 40);
  REQUIRE(stm.try_commit(writer) == CommitResult::committed);

  CHECK(reader->status == TxnStatus::aborted);
  CHECK(reader->killed_by_peer);
  CHECK(stm.kill_stats().kills.load() == 1);
  CHECK(stm.kill_stats().older_victim_kills.load() == 0);

  // the victim notices at its next operation
  CHECK(stm.lookup(reader, 4, out) == OpResult::aborted);

  // the retry incarnation keeps its age and now sees the committed value
  TxnPtr retry = stm.begin(reader->initial_ts);
  CHECK(retry->initial_ts == reader->initial_ts);
  REQUIRE(stm.lookup(retry, 4, out) == OpResult::ok);
  CHECK(out == Value{40});
  REQUIRE(stm.try_commit(retry) == CommitResult::committed);
}

TEST_CASE("a younger writer aborts itself for an older live reader") {
  Stm stm(sv_config());
  std::optional<Value> out;

  TxnPtr reader = stm.begin();  // older its
  TxnPtr writer = stm.begin();
  REQUIRE(stm.lookup(reader, 4, out) == OpResult::ok);

  stm.insert(writer, 4, 40);
  CHECK(stm.try_commit(writer) == CommitResult::aborted);
  CHECK_FALSE(writer->killed_by_peer);
  CHECK(stm.kill_stats().kills.load() == 0);

  // the reader was never disturbed
  CHECK(reader->status == TxnStatus::live);
  stm.insert(reader, 4, 41);
  REQUIRE(stm.try_commit(reader) == CommitResult::committed);
  CHECK(stm.peek(4) == Value{41});
}

TEST_CASE("a committed reader that began later aborts the writer") {
  Stm stm(sv_config());
  std::optional<Value> out;

  TxnPtr writer = stm.begin();  // smaller cts
  TxnPtr reader = stm.begin();  // larger cts
  REQUIRE(stm.lookup(reader, 6, out) == OpResult::ok);
  REQUIRE(stm.try_commit(reader) == CommitResult::committed);

  stm.insert(writer, 6, 60);
  CHECK(stm.try_commit(writer) == CommitResult::aborted);
}

TEST_CASE("a committed reader that began earlier is compatible") {
  Stm stm(sv_config());
  std::optional<Value> out;

  TxnPtr reader = stm.begin();  // smaller cts
  REQUIRE(stm.lookup(reader, 6, out) == OpResult::ok);
  REQUIRE(stm.try_commit(reader) == CommitResult::committed);

  TxnPtr writer = stm.begin();  // larger cts
  stm.insert(writer, 6, 60);
  CHECK(stm.try_commit(writer) == CommitResult::committed);
  CHECK(stm.peek(6) == Value{60});
}

TEST_CASE("sequential random ops agree with a reference map") {
  Stm stm(sv_config());
  std::map<Key, Value> model;
  std::mt19937_64 rng(7);

  for (int round = 0; round < 2000; ++round) {
    TxnPtr t = stm.begin();
    for (int i = 0; i < 5; ++i) {
      Key key = 1 + rng() % 40;
      std::optional<Value> out;
      switch (rng() % 3) {
        case 0: {
          REQUIRE(stm.insert(t, key, round * 10 + i) == OpResult::ok);
          model[key] = round * 10 + i;
          break;
        }
        case 1: {
          REQUIRE(stm.remove(t, key, out) == OpResult::ok);
          auto it = model.find(key);
          CHECK(out == (it == model.end() ? std::optional<Value>{}
                                          : std::optional<Value>{it->second}));
          model.erase(key);
          break;
        }
        default: {
          REQUIRE(stm.lookup(t, key, out) == OpResult::ok);
          auto it = model.find(key);
          CHECK(out == (it == model.end() ? std::optional<Value>{}
                                          : std::optional<Value>{it->second}));
          break;
        }
      }
    }
    REQUIRE(stm.try_commit(t) == CommitResult::committed);
  }

  for (Key key = 1; key <= 40; ++key) {
    auto it = model.find(key);
    CHECK(stm.peek(key) ==
          (it == model.end() ? std::optional<Value>{} : std::optional<Value>{it->second}));
  }
}

TEST_CASE("concurrent chains all finish and leave a checkable history") {
  Recorder rec;
  Stm stm(sv_config(), &rec);
  constexpr int kThreads = 4;
  constexpr int kChains = 400;
  std::atomic<std::uint64_t> commits{0};

  std::vector<std::thread> workers;
  for (int i = 0; i < kThreads; ++i)
    workers.emplace_back([&stm, &commits, i] {
      std::mt19937_64 rng(100 + i);
      for (int c = 0; c < kChains; ++c) {
        run_chain(stm, [&](const TxnPtr& txn) {
          for (int op = 0; op < 6; ++op) {
            Key key = 1 + rng() % 12;
            std::optional<Value> out;
            OpResult r;
            switch (rng() % 3) {
              case 0: r = stm.insert(txn, key, rng() | 1); break;
              case 1: r = stm.remove(txn, key, out); break;
              default: r = stm.lookup(txn, key, out); break;
            }
            if (r == OpResult::aborted) return false;
          }
          return true;
        });
        commits.fetch_add(1);
      }
    });
  for (auto& w : workers) w.join();

  CHECK(commits.load() == kThreads * kChains);
  CHECK(stm.livelist().size() == 0);

  History h = rec.take();
  CHECK(h.size() > 0);
  CheckVerdict v = check_history(h, CheckMode::co_opacity);
  INFO(v.detail);
  CHECK(v.ok);
}
