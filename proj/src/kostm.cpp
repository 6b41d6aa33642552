#include "sfstm/kostm.hpp"

#include <algorithm>
#include <cassert>
#include <map>
#include <vector>

namespace sfstm {

KostmStore::KostmStore(const TxnConfig& cfg, GlobalCounter& counter, LiveList& live,
                       Recorder* rec, KillStats* kills)
    : cfg_(cfg), counter_(counter), live_(live), rec_(rec), kills_(kills), list_(cfg.buckets) {}

void KostmStore::record(const TxnPtr& txn, Method m, std::optional<Key> key,
                        std::optional<Value> value, std::optional<Timestamp> version_ts,
                        std::uint64_t lp) {
  if (!rec_) return;
  HistoryEvent ev;
  ev.txn_id = txn->current_ts;
  ev.its = txn->initial_ts;
  ev.cts = txn->current_ts;
  ev.wts = txn->working_ts;
  ev.method = m;
  ev.key = key;
  ev.value = value;
  ev.version_ts = version_ts;
  ev.lp_seq = lp;
  rec_->append(std::move(ev));
}

// Terminal bookkeeping shared by every abort path; status is already aborted.
CommitResult KostmStore::abort_self(const TxnPtr& txn) {
  std::uint64_t lp = rec_ ? rec_->next_lp() : 0;
  record(txn, Method::tryc_abort, std::nullopt, std::nullopt, std::nullopt, lp);
  live_.remove(txn->working_ts);
  return CommitResult::aborted;
}

OpResult KostmStore::serve_from_log(const TxnPtr& txn, LogEntry& entry, Key key, OpKind op,
                                    std::optional<Value>& out) {
  std::optional<Value> seen;
  switch (entry.op) {
    case OpKind::insert: seen = entry.value; break;
    case OpKind::remove: seen = std::nullopt; break;
    case OpKind::lookup: seen = entry.value; break;
  }
  // A repeated delete observes an absent key; it must not downgrade the
  // first delete, which may still have an effect to apply at commit.
  if (op == OpKind::remove && entry.op != OpKind::remove) {
    entry.op = OpKind::remove;
    entry.value = seen;
    entry.observed_present = seen.has_value();
  }
  std::uint64_t lp = rec_ ? rec_->next_lp() : 0;
  record(txn, op == OpKind::remove ? Method::remove : Method::lookup, key, seen, std::nullopt,
         lp);
  out = seen;
  return OpResult::ok;
}

OpResult KostmStore::read_phase(const TxnPtr& txn, Key key, OpKind op,
                                std::optional<Value>& out) {
  if (!List::user_key(key)) throw std::invalid_argument("key outside user range");
  {
    std::lock_guard<std::mutex> g(txn->state_lock);
    if (txn->status != TxnStatus::live) {
      // A competing commit aborted this incarnation; surface it here, before
      // the own-log fast path can serve a doomed read.
      out = std::nullopt;
      abort_self(txn);
      return OpResult::aborted;
    }
  }
  if (auto it = txn->log.find(key); it != txn->log.end())
    return serve_from_log(txn, it->second, key, op, out);

  LockSet<VersionList> locks;
  Window w = list_.locate_locked(key, locks);
  Node* node = w.node_for(key);

  std::optional<Value> seen;
  std::optional<Timestamp> version_ts;
  std::uint64_t lp = 0;

  if (!node) {
    // First touch of an absent key: park a marked node carrying only the
    // initial version so this read is visible to later committers.
    auto* fresh = new Node(key, true);
    fresh->payload.versions.push_back(initial_version());
    fresh->payload.versions.back().readers.push_back(txn);
    version_count_.fetch_add(1, std::memory_order_relaxed);
    list_.insert_node(w, fresh, LinkMode::red_only);
    version_ts = 0;
    lp = rec_ ? rec_->next_lp() : 0;
    locks.release_all();
  } else {
    VersionList& vl = node->payload;
    std::size_t vi = vl.find_lts_version(txn->working_ts, txn->current_ts);
    if (vi == VersionList::npos) {
      // Every version this transaction could read has been evicted.
      {
        std::lock_guard<std::mutex> g(txn->state_lock);
        txn->status = TxnStatus::aborted;
      }
      locks.release_all();
      out = std::nullopt;
      abort_self(txn);
      return OpResult::aborted;
    }
    Version& ver = vl.versions[vi];
    bool crossed = false;
    {
      std::lock_guard<std::mutex> g(txn->state_lock);
      if (vi + 1 < vl.versions.size())
        txn->upper_limit = std::min(txn->upper_limit, vl.versions[vi + 1].real_time - 1);
      txn->lower_limit = std::max(txn->lower_limit, ver.real_time + 1);
      if (txn->lower_limit > txn->upper_limit) {
        txn->status = TxnStatus::aborted;
        crossed = true;
      }
    }
    if (crossed) {
      locks.release_all();
      out = std::nullopt;
      abort_self(txn);
      return OpResult::aborted;
    }
    ver.readers.push_back(txn);
    seen = ver.value;
    version_ts = ver.creator_cts;
    lp = rec_ ? rec_->next_lp() : 0;
    locks.release_all();
  }

  {
    // Recheck after the lp draw: a kill that lands before this point discards
    // the read, so every read this transaction keeps precedes its killer's
    // commit in lp order.
    std::lock_guard<std::mutex> g(txn->state_lock);
    if (txn->status != TxnStatus::live) {
      out = std::nullopt;
      abort_self(txn);
      return OpResult::aborted;
    }
  }

  LogEntry entry;
  entry.op = op == OpKind::remove ? OpKind::remove : OpKind::lookup;
  entry.value = seen;
  entry.observed_present = seen.has_value();
  txn->log.emplace(key, entry);
  record(txn, op == OpKind::remove ? Method::remove : Method::lookup, key, seen, version_ts, lp);
  out = seen;
  return OpResult::ok;
}

OpResult KostmStore::lookup(const TxnPtr& txn, Key key, std::optional<Value>& out) {
  return read_phase(txn, key, OpKind::lookup, out);
}

OpResult KostmStore::remove(const TxnPtr& txn, Key key, std::optional<Value>& out) {
  return read_phase(txn, key, OpKind::remove, out);
}

OpResult KostmStore::insert(const TxnPtr& txn, Key key, Value value) {
  if (!List::user_key(key)) throw std::invalid_argument("key outside user range");
  LogEntry& entry = txn->log[key];
  entry.op = OpKind::insert;
  entry.value = value;
  entry.observed_present = true;
  std::uint64_t lp = rec_ ? rec_->next_lp() : 0;
  record(txn, Method::insert_log, key, value, std::nullopt, lp);
  return OpResult::ok;
}

namespace {

struct CommitSlot {
  Key key = 0;
  LogEntry* entry = nullptr;
  NodeWindow<VersionList> w;
  ListNode<VersionList>* node = nullptr;
  Timestamp curr_rt = 0;
  bool has_next = false;
  Timestamp next_rt = 0;
};

}  // namespace

CommitResult KostmStore::try_commit(const TxnPtr& txn) {
  {
    std::lock_guard<std::mutex> g(txn->state_lock);
    if (txn->status != TxnStatus::live) return abort_self(txn);
  }

  std::vector<CommitSlot> slots;
  for (auto& [key, entry] : txn->log) {
    bool is_update = entry.op == OpKind::insert ||
                     (entry.op == OpKind::remove && entry.observed_present);
    if (is_update) {
      CommitSlot slot;
      slot.key = key;
      slot.entry = &entry;
      slots.push_back(slot);
    }
  }
  // Bucket-major order keeps lock acquisition globally consistent.
  std::sort(slots.begin(), slots.end(), [this](const CommitSlot& a, const CommitSlot& b) {
    auto ba = list_.bucket_of(a.key), bb = list_.bucket_of(b.key);
    return ba != bb ? ba < bb : a.key < b.key;
  });

  if (slots.empty()) {
    // Read-only: every read already settled its range; nothing can invalidate
    // it now, so the commit is immediate (unless a kill just landed).
    {
      std::lock_guard<std::mutex> g(txn->state_lock);
      if (txn->status != TxnStatus::live) return abort_self(txn);
      txn->status = TxnStatus::committed;
    }
    std::uint64_t lp = rec_ ? rec_->next_lp() : 0;
    record(txn, Method::tryc_commit, std::nullopt, std::nullopt, std::nullopt, lp);
    live_.remove(txn->working_ts);
    return CommitResult::committed;
  }

  LockSet<VersionList> locks;
  std::map<Timestamp, TxnPtr> rvl;  // readers of the versions being superseded, by cts

  for (auto& slot : slots) {
    slot.w = list_.locate_locked(slot.key, locks);
    slot.node = slot.w.node_for(slot.key);
    if (!slot.node) continue;  // fresh key; the apply step materializes it
    VersionList& vl = slot.node->payload;
    std::size_t vi = vl.find_lts_version(txn->working_ts, txn->current_ts);
    if (vi == VersionList::npos) {
      std::lock_guard<std::mutex> g(txn->state_lock);
      txn->status = TxnStatus::aborted;
      locks.release_all();
      return abort_self(txn);
    }
    slot.curr_rt = vl.versions[vi].real_time;
    if (vi + 1 < vl.versions.size()) {
      slot.has_next = true;
      slot.next_rt = vl.versions[vi + 1].real_time;
    }
    for (const TxnPtr& r : vl.versions[vi].readers)
      if (r->current_ts != txn->current_ts) rvl.emplace(r->current_ts, r);
  }

  // Status locks: every reader found above plus self, ascending cts.
  std::vector<TxnDescriptor*> participants;
  participants.reserve(rvl.size() + 1);
  bool self_added = false;
  for (auto& [cts, p] : rvl) {
    if (!self_added && txn->current_ts < cts) {
      participants.push_back(txn.get());
      self_added = true;
    }
    participants.push_back(p.get());
  }
  if (!self_added) participants.push_back(txn.get());
  for (auto* p : participants) p->state_lock.lock();

  auto release_statuses = [&participants] {
    for (auto it = participants.rbegin(); it != participants.rend(); ++it)
      (*it)->state_lock.unlock();
  };
  auto abort_self_locked = [&]() -> CommitResult {
    txn->status = TxnStatus::aborted;
    release_statuses();
    locks.release_all();
    return abort_self(txn);
  };

  if (txn->status != TxnStatus::live) {
    release_statuses();
    locks.release_all();
    return abort_self(txn);
  }

  std::vector<TxnDescriptor*> abort_list;
  auto self_older_than = [&](const TxnDescriptor* p) {
    return txn->initial_ts < p->initial_ts;
  };

  // Readers above this wts would have to have read the version being written;
  // live ones lose to an older committer, anything else forces self-abort.
  for (auto& [cts, p] : rvl) {
    if (txn->ts_less(*p)) {
      if (p->status == TxnStatus::aborted) continue;
      if (p->status == TxnStatus::live && self_older_than(p.get())) {
        abort_list.push_back(p.get());
      } else {
        return abort_self_locked();
      }
    }
  }

  // Settle the commit range: below every next version, above every version
  // being extended, and no later than now.
  for (const auto& slot : slots)
    if (slot.node && slot.has_next)
      txn->upper_limit = std::min(txn->upper_limit, slot.next_rt - 1);
  for (const auto& slot : slots)
    if (slot.node) txn->lower_limit = std::max(txn->lower_limit, slot.curr_rt + 1);
  Timestamp commit_time = counter_.add_and_get(1);
  txn->upper_limit = std::min(txn->upper_limit, commit_time);
  if (txn->lower_limit > txn->upper_limit) return abort_self_locked();

  // Readers below this wts keep their reads only if their range still fits
  // under this commit point.
  for (auto& [cts, p] : rvl) {
    if (!p->ts_less(*txn)) continue;
    if (p->status == TxnStatus::aborted) continue;
    if (p->lower_limit > txn->upper_limit) {
      if (p->status == TxnStatus::live && self_older_than(p.get())) {
        if (std::find(abort_list.begin(), abort_list.end(), p.get()) == abort_list.end())
          abort_list.push_back(p.get());
      } else {
        return abort_self_locked();
      }
    }
  }

  // Point of no return.
  txn->lower_limit = txn->upper_limit;
  for (auto& [cts, p] : rvl)
    if (p->ts_less(*txn) && p->status == TxnStatus::live)
      p->upper_limit = std::min(p->upper_limit, txn->lower_limit - 1);
  for (auto* p : abort_list) {
    p->status = TxnStatus::aborted;
    p->killed_by_peer = true;
    if (kills_) {
      kills_->kills.fetch_add(1, std::memory_order_relaxed);
      if (p->initial_ts <= txn->initial_ts)
        kills_->older_victim_kills.fetch_add(1, std::memory_order_relaxed);
    }
  }

  // Apply phase: windows were frozen by the locks, but this transaction's own
  // earlier applies may sit inside them; po_validate repairs that.
  const CommitSlot* prev = nullptr;
  bool prev_changed_links = false;
  for (auto& slot : slots) {
    if (prev)
      slot.w = list_.po_validate(prev->w, prev_changed_links, slot.w, slot.key);
    Version nv{txn->working_ts, txn->current_ts,
               slot.entry->op == OpKind::insert ? slot.entry->value : std::nullopt,
               {},
               txn->lower_limit};
    bool changed_links = false;
    if (!slot.node) {
      auto* fresh = new Node(slot.key, true);
      fresh->payload.versions.push_back(initial_version());
      auto res = fresh->payload.add_version(std::move(nv), cfg_.k_versions);
      version_count_.fetch_add(2 - static_cast<std::int64_t>(res.evicted),
                               std::memory_order_relaxed);
      locks.adopt(fresh);
      bool visible = slot.entry->op == OpKind::insert;
      list_.insert_node(slot.w, fresh, visible ? LinkMode::red_and_blue : LinkMode::red_only);
      slot.node = fresh;
      changed_links = true;
    } else {
      auto res = slot.node->payload.add_version(std::move(nv), cfg_.k_versions);
      version_count_.fetch_add(1 - static_cast<std::int64_t>(res.evicted),
                               std::memory_order_relaxed);
      bool marked = slot.node->mark.load(std::memory_order_acquire);
      if (!res.newest_is_delete && marked) {
        list_.blue_relink(slot.w, slot.node);
        changed_links = true;
      } else if (res.newest_is_delete && !marked) {
        list_.blue_unlink(slot.w, slot.node);
        changed_links = true;
      }
    }
    prev = &slot;
    prev_changed_links = changed_links;
  }

  txn->status = TxnStatus::committed;
  std::uint64_t lp = rec_ ? rec_->next_lp() : 0;
  release_statuses();
  locks.release_all();
  record(txn, Method::tryc_commit, std::nullopt, std::nullopt, std::nullopt, lp);
  live_.remove(txn->working_ts);
  maybe_auto_gc();
  return CommitResult::committed;
}

void KostmStore::maybe_auto_gc() {
  if (!cfg_.gc_enabled) return;
  if (commits_since_gc_.fetch_add(1, std::memory_order_relaxed) + 1 < cfg_.gc_interval) return;
  commits_since_gc_.store(0, std::memory_order_relaxed);
  run_gc();
}

std::size_t KostmStore::run_gc() {
  Timestamp min_live = live_.min_live_wts();
  std::size_t reclaimed = 0;
  list_.for_each_node([&](Node& n) { reclaimed += n.payload.gc_collect(min_live); });
  version_count_.fetch_sub(static_cast<std::int64_t>(reclaimed), std::memory_order_relaxed);
  return reclaimed;
}

std::size_t KostmStore::max_versions_per_key() {
  std::size_t worst = 0;
  list_.for_each_node([&](Node& n) { worst = std::max(worst, n.payload.versions.size()); });
  return worst;
}

std::optional<Value> KostmStore::peek(Key key) {
  LockSet<VersionList> locks;
  Window w = list_.locate_locked(key, locks);
  Node* node = w.node_for(key);
  if (!node || node->payload.versions.empty()) return std::nullopt;
  return node->payload.versions.back().value;
}

}  // namespace sfstm
