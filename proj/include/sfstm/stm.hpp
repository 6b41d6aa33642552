#pragma once

#include <memory>
#include <optional>

#include "sfstm/kostm.hpp"
#include "sfstm/svostm.hpp"

namespace sfstm {

// Mode-dispatching owner of one transactional store. Aborted operations end
// the incarnation; restart it with begin(prior->initial_ts) so the chain keeps
// its age-based priority.
class Stm {
 public:
  explicit Stm(TxnConfig cfg, Recorder* rec = nullptr)
      : cfg_(cfg), rec_(rec) {
    cfg_.validate();
    if (cfg_.mode == Mode::svostm)
      sv_ = std::make_unique<SvostmStore>(cfg_, live_, rec_, &kills_);
    else
      ko_ = std::make_unique<KostmStore>(cfg_, counter_, live_, rec_, &kills_);
  }

  TxnPtr begin(std::optional<Timestamp> prior_its = std::nullopt) {
    // The begin point is drawn before the timestamp. A commit records its
    // point after drawing its commit time, so a commit recorded before this
    // begin has a commit time no later than the cts drawn here, and ordering
    // this transaction after it is always possible.
    std::uint64_t lp = rec_ ? rec_->next_lp() : 0;
    Timestamp cts = counter_.get_and_increment();
    Timestamp its = prior_its.value_or(cts);
    Timestamp wts = cfg_.mode == Mode::svostm ? cts : compute_wts(its, cts, cfg_.c_factor);
    auto txn = std::make_shared<TxnDescriptor>(its, cts, wts);
    live_.add(wts);
    if (rec_) {
      HistoryEvent ev;
      ev.txn_id = cts;
      ev.its = its;
      ev.cts = cts;
      ev.wts = wts;
      ev.method = Method::begin;
      ev.lp_seq = lp;
      rec_->append(std::move(ev));
    }
    return txn;
  }

  OpResult lookup(const TxnPtr& txn, Key key, std::optional<Value>& out) {
    return sv_ ? sv_->lookup(txn, key, out) : ko_->lookup(txn, key, out);
  }

  OpResult insert(const TxnPtr& txn, Key key, Value value) {
    return sv_ ? sv_->insert(txn, key, value) : ko_->insert(txn, key, value);
  }

  OpResult remove(const TxnPtr& txn, Key key, std::optional<Value>& out) {
    return sv_ ? sv_->remove(txn, key, out) : ko_->remove(txn, key, out);
  }

  CommitResult try_commit(const TxnPtr& txn) {
    return sv_ ? sv_->try_commit(txn) : ko_->try_commit(txn);
  }

  std::size_t run_gc() { return ko_ ? ko_->run_gc() : 0; }

  const TxnConfig& config() const { return cfg_; }
  GlobalCounter& counter() { return counter_; }
  LiveList& livelist() { return live_; }
  const KillStats& kill_stats() const { return kills_; }

  std::int64_t version_count() const { return ko_ ? ko_->version_count() : 0; }
  std::size_t max_versions_per_key() { return ko_ ? ko_->max_versions_per_key() : 0; }

  std::optional<Value> peek(Key key) { return sv_ ? sv_->peek(key) : ko_->peek(key); }

 private:
  TxnConfig cfg_;
  Recorder* rec_;
  GlobalCounter counter_;
  LiveList live_;
  KillStats kills_;
  std::unique_ptr<KostmStore> ko_;
  std::unique_ptr<SvostmStore> sv_;
};

}  // namespace sfstm
