#include "sfstm/svostm.hpp"

#include <algorithm>
#include <cassert>
#include <map>
#include <vector>

namespace sfstm {

SvostmStore::SvostmStore(const TxnConfig& cfg, LiveList& live, Recorder* rec, KillStats* kills)
    : cfg_(cfg), live_(live), rec_(rec), kills_(kills), list_(cfg.buckets) {}

void SvostmStore::record(const TxnPtr& txn, Method m, std::optional<Key> key,
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

CommitResult SvostmStore::abort_self(const TxnPtr& txn) {
  std::uint64_t lp = rec_ ? rec_->next_lp() : 0;
  record(txn, Method::tryc_abort, std::nullopt, std::nullopt, std::nullopt, lp);
  live_.remove(txn->working_ts);
  return CommitResult::aborted;
}

OpResult SvostmStore::read_phase(const TxnPtr& txn, Key key, OpKind op,
                                 std::optional<Value>& out) {
  if (!List::user_key(key)) throw std::invalid_argument("key outside user range");
  {
    // A competing commit may have aborted this incarnation; notice before
    // serving anything, own log included.
    std::lock_guard<std::mutex> g(txn->state_lock);
    if (txn->status != TxnStatus::live) {
      out = std::nullopt;
      abort_self(txn);
      return OpResult::aborted;
    }
  }
  if (auto it = txn->log.find(key); it != txn->log.end()) {
    LogEntry& entry = it->second;
    std::optional<Value> seen = entry.op == OpKind::remove ? std::nullopt : entry.value;
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

  LockSet<SvCell> locks;
  Window w = list_.locate_locked(key, locks);
  Node* node = w.node_for(key);

  std::optional<Value> seen;
  Timestamp version_ts = 0;
  if (!node) {
    // Park a marked node recording this read so later writers settle with it.
    auto* fresh = new Node(key, true);
    fresh->payload.readers.push_back(txn);
    list_.insert_node(w, fresh, LinkMode::red_only);
  } else {
    if (!node->mark.load(std::memory_order_acquire)) seen = node->payload.value;
    version_ts = node->payload.last_writer_cts;
    node->payload.readers.push_back(txn);
  }
  std::uint64_t lp = rec_ ? rec_->next_lp() : 0;
  locks.release_all();

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

OpResult SvostmStore::lookup(const TxnPtr& txn, Key key, std::optional<Value>& out) {
  return read_phase(txn, key, OpKind::lookup, out);
}

OpResult SvostmStore::remove(const TxnPtr& txn, Key key, std::optional<Value>& out) {
  return read_phase(txn, key, OpKind::remove, out);
}

OpResult SvostmStore::insert(const TxnPtr& txn, Key key, Value value) {
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
  NodeWindow<SvCell> w;
  ListNode<SvCell>* node = nullptr;
};

}  // namespace

CommitResult SvostmStore::try_commit(const TxnPtr& txn) {
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
  std::sort(slots.begin(), slots.end(), [this](const CommitSlot& a, const CommitSlot& b) {
    auto ba = list_.bucket_of(a.key), bb = list_.bucket_of(b.key);
    return ba != bb ? ba < bb : a.key < b.key;
  });

  if (slots.empty()) {
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

  LockSet<SvCell> locks;
  std::map<Timestamp, TxnPtr> rvl;
  for (auto& slot : slots) {
    slot.w = list_.locate_locked(slot.key, locks);
    slot.node = slot.w.node_for(slot.key);
    if (!slot.node) continue;
    for (const TxnPtr& r : slot.node->payload.readers)
      if (r->current_ts != txn->current_ts) rvl.emplace(r->current_ts, r);
  }

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

  if (txn->status != TxnStatus::live) {
    release_statuses();
    locks.release_all();
    return abort_self(txn);
  }

  // Settle with every reader of the values about to be overwritten. Live
  // readers: priority by its. Committed readers that began after this
  // transaction read a value this commit would retroactively invalidate;
  // earlier committed readers serialize before it and are compatible.
  std::vector<TxnDescriptor*> abort_list;
  for (auto& [cts, p] : rvl) {
    switch (p->status) {
      case TxnStatus::aborted:
        break;
      case TxnStatus::live:
        if (txn->initial_ts < p->initial_ts) {
          abort_list.push_back(p.get());
        } else {
          txn->status = TxnStatus::aborted;
          release_statuses();
          locks.release_all();
          return abort_self(txn);
        }
        break;
      case TxnStatus::committed:
        if (p->current_ts > txn->current_ts) {
          txn->status = TxnStatus::aborted;
          release_statuses();
          locks.release_all();
          return abort_self(txn);
        }
        break;
    }
  }

  for (auto* p : abort_list) {
    p->status = TxnStatus::aborted;
    p->killed_by_peer = true;
    if (kills_) {
      kills_->kills.fetch_add(1, std::memory_order_relaxed);
      if (p->initial_ts <= txn->initial_ts)
        kills_->older_victim_kills.fetch_add(1, std::memory_order_relaxed);
    }
  }

  const CommitSlot* prev = nullptr;
  bool prev_changed_links = false;
  for (auto& slot : slots) {
    if (prev)
      slot.w = list_.po_validate(prev->w, prev_changed_links, slot.w, slot.key);
    bool changed_links = false;
    if (slot.entry->op == OpKind::insert) {
      if (!slot.node) {
        auto* fresh = new Node(slot.key, false);
        fresh->payload.value = slot.entry->value;
        fresh->payload.last_writer_cts = txn->current_ts;
        locks.adopt(fresh);
        list_.insert_node(slot.w, fresh, LinkMode::red_and_blue);
        slot.node = fresh;
        changed_links = true;
      } else {
        slot.node->payload.value = slot.entry->value;
        slot.node->payload.readers.clear();
        slot.node->payload.last_writer_cts = txn->current_ts;
        if (slot.node->mark.load(std::memory_order_acquire)) {
          list_.blue_relink(slot.w, slot.node);
          changed_links = true;
        }
      }
    } else {
      if (!slot.node) {
        auto* fresh = new Node(slot.key, true);
        fresh->payload.last_writer_cts = txn->current_ts;
        locks.adopt(fresh);
        list_.insert_node(slot.w, fresh, LinkMode::red_only);
        slot.node = fresh;
        changed_links = true;
      } else {
        slot.node->payload.value = std::nullopt;
        slot.node->payload.readers.clear();
        slot.node->payload.last_writer_cts = txn->current_ts;
        if (!slot.node->mark.load(std::memory_order_acquire)) {
          list_.blue_unlink(slot.w, slot.node);
          changed_links = true;
        }
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
  return CommitResult::committed;
}

std::optional<Value> SvostmStore::peek(Key key) {
  LockSet<SvCell> locks;
  Window w = list_.locate_locked(key, locks);
  Node* node = w.node_for(key);
  if (!node || node->mark.load(std::memory_order_acquire)) return std::nullopt;
  return node->payload.value;
}

}  // namespace sfstm
