#pragma once

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cstdint>
#include <mutex>
#include <vector>

#include "sfstm/timestamps.hpp"

namespace sfstm {

// Hash table of sorted lists with two overlaid successor chains per bucket:
// the red chain (rn) holds every node, marked or not; the blue chain (bn)
// skips marked nodes, so deleted keys stay reachable for readers that still
// need their old versions while inserts see only the unmarked list.
//
// Sentinels: every bucket owns a head (key 0 stands in for -inf) and a tail
// (key max stands in for +inf). User keys must lie strictly between.

template <typename Payload>
struct ListNode {
  const Key key;
  std::mutex lock;
  std::atomic<bool> mark;
  std::atomic<ListNode*> red_next{nullptr};
  std::atomic<ListNode*> blue_next{nullptr};
  std::atomic<ListNode*> list_next{nullptr};  // physical chain; teardown walks it
  Payload payload;

  ListNode(Key k, bool marked) : key(k), mark(marked) {}
};

// Window around a key k: blue_pred.key <= red_pred.key < k <= red_curr.key
// <= blue_curr.key. red_curr.key == k iff the key is physically present.
template <typename Payload>
struct NodeWindow {
  ListNode<Payload>* blue_pred = nullptr;
  ListNode<Payload>* red_pred = nullptr;
  ListNode<Payload>* red_curr = nullptr;
  ListNode<Payload>* blue_curr = nullptr;

  ListNode<Payload>* node_for(Key key) const {
    return red_curr->key == key ? red_curr : nullptr;
  }
};

enum class LinkMode { red_only, red_and_blue };

// Tracks node locks across one operation. Acquisition order inside a window is
// ascending key with duplicates skipped; a multi-key commit keeps earlier
// windows locked, so the set releases in reverse acquisition order.
template <typename Payload>
class LockSet {
 public:
  using Node = ListNode<Payload>;

  bool holds(Node* n) const {
    for (Node* h : held_)
      if (h == n) return true;
    return false;
  }

  // Locks the window's distinct nodes in ascending key order. Returns the
  // nodes newly acquired so a failed validation can release just those.
  std::vector<Node*> lock_window(const NodeWindow<Payload>& w) {
    Node* nodes[4] = {w.blue_pred, w.red_pred, w.red_curr, w.blue_curr};
    // Insertion sort by key; the window invariant already nearly sorts them.
    for (int i = 1; i < 4; ++i)
      for (int j = i; j > 0 && nodes[j]->key < nodes[j - 1]->key; --j)
        std::swap(nodes[j], nodes[j - 1]);
    std::vector<Node*> fresh;
    for (int i = 0; i < 4; ++i) {
      if (i > 0 && nodes[i] == nodes[i - 1]) continue;
      if (holds(nodes[i])) continue;
      nodes[i]->lock.lock();
      held_.push_back(nodes[i]);
      fresh.push_back(nodes[i]);
    }
    return fresh;
  }

  // A node this transaction just created enters the set already locked.
  void adopt(Node* n) {
    n->lock.lock();
    held_.push_back(n);
  }

  void release(const std::vector<Node*>& nodes) {
    for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
      (*it)->lock.unlock();
      held_.erase(std::find(held_.begin(), held_.end(), *it));
    }
  }

  void release_all() {
    for (auto it = held_.rbegin(); it != held_.rend(); ++it) (*it)->lock.unlock();
    held_.clear();
  }

  ~LockSet() { release_all(); }

 private:
  std::vector<Node*> held_;
};

template <typename Payload>
class RbLazyList {
 public:
  using Node = ListNode<Payload>;
  using Window = NodeWindow<Payload>;

  explicit RbLazyList(std::size_t buckets) : buckets_(buckets) {
    heads_.reserve(buckets_);
    tails_.reserve(buckets_);
    for (std::size_t i = 0; i < buckets_; ++i) {
      auto* head = new Node(kHeadKey, false);
      auto* tail = new Node(kTailKey, false);
      head->red_next.store(tail, std::memory_order_relaxed);
      head->blue_next.store(tail, std::memory_order_relaxed);
      head->list_next.store(tail, std::memory_order_relaxed);
      heads_.push_back(head);
      tails_.push_back(tail);
    }
  }

  RbLazyList(const RbLazyList&) = delete;
  RbLazyList& operator=(const RbLazyList&) = delete;

  ~RbLazyList() {
    for (std::size_t i = 0; i < buckets_; ++i) {
      Node* n = heads_[i];
      while (n) {
        Node* next = n->list_next.load(std::memory_order_relaxed);
        delete n;
        n = next;
      }
    }
  }

  std::size_t buckets() const { return buckets_; }
  std::size_t bucket_of(Key key) const { return key % buckets_; }
  Node* head(std::size_t bucket) const { return heads_[bucket]; }

  static bool user_key(Key key) { return key > kHeadKey && key < kTailKey; }

  // Optimistic traversal, no locks: walk the blue chain to the blue window,
  // then the red chain from the blue pred. Links are only ever redirected to
  // newer nodes between the same neighbours, so the walk cannot escape the
  // bucket; stale reads are caught by rv_validate after locking.
  Window locate(Key key) const {
    assert(user_key(key));
    Window w;
    Node* bp = heads_[bucket_of(key)];
    Node* bc = bp->blue_next.load(std::memory_order_acquire);
    while (bc->key < key) {
      bp = bc;
      bc = bc->blue_next.load(std::memory_order_acquire);
    }
    Node* rp = bp;
    Node* rc = rp->red_next.load(std::memory_order_acquire);
    while (rc->key < key) {
      rp = rc;
      rc = rc->red_next.load(std::memory_order_acquire);
    }
    w.blue_pred = bp;
    w.blue_curr = bc;
    w.red_pred = rp;
    w.red_curr = rc;
    return w;
  }

  // With the window locked: the blue pair must still be adjacent and unmarked,
  // and the red pair still adjacent. Marked red nodes are legitimate preds.
  static bool rv_validate(const Window& w) {
    if (w.blue_pred->mark.load(std::memory_order_acquire)) return false;
    if (w.blue_curr->mark.load(std::memory_order_acquire)) return false;
    if (w.blue_pred->blue_next.load(std::memory_order_acquire) != w.blue_curr) return false;
    if (w.red_pred->red_next.load(std::memory_order_acquire) != w.red_curr) return false;
    return true;
  }

  // Locks the window and validates, retrying the traversal until both hold.
  // Holds for the caller afterwards; earlier locks in `locks` stay held.
  Window locate_locked(Key key, LockSet<Payload>& locks) const {
    for (;;) {
      Window w = locate(key);
      auto fresh = locks.lock_window(w);
      if (rv_validate(w)) return w;
      locks.release(fresh);
    }
  }

  // Links a freshly created node (window locked, node->key absent). Red-only
  // nodes are visible to readers but not to the value map; red-and-blue nodes
  // are live entries. The caller created `n` and nobody else can reach it yet.
  void insert_node(const Window& w, Node* n, LinkMode mode) {
    assert(w.red_pred->key < n->key && n->key <= w.red_curr->key);
    assert(w.red_curr->key != n->key);
    n->red_next.store(w.red_curr, std::memory_order_release);
    n->list_next.store(w.red_curr, std::memory_order_release);
    if (mode == LinkMode::red_and_blue) {
      n->mark.store(false, std::memory_order_release);
      n->blue_next.store(w.blue_curr, std::memory_order_release);
    } else {
      n->mark.store(true, std::memory_order_release);
    }
    w.red_pred->red_next.store(n, std::memory_order_release);
    w.red_pred->list_next.store(n, std::memory_order_release);
    if (mode == LinkMode::red_and_blue)
      w.blue_pred->blue_next.store(n, std::memory_order_release);
  }

  // Re-links an existing marked node into the blue chain (window locked,
  // node == w.red_curr, node currently marked).
  void blue_relink(const Window& w, Node* n) {
    assert(n == w.red_curr && n->mark.load());
    assert(w.blue_curr->key > n->key);
    n->blue_next.store(w.blue_curr, std::memory_order_release);
    n->mark.store(false, std::memory_order_release);
    w.blue_pred->blue_next.store(n, std::memory_order_release);
  }

  // Drops an unmarked node out of the blue chain (window locked; the node is
  // then both red_curr and blue_curr of its own window).
  void blue_unlink(const Window& w, Node* n) {
    assert(n == w.red_curr && n == w.blue_curr && !n->mark.load());
    n->mark.store(true, std::memory_order_release);
    w.blue_pred->blue_next.store(n->blue_next.load(std::memory_order_acquire),
                                 std::memory_order_release);
  }

  // Commit-time window repair: a previous method of the same transaction may
  // have inserted or marked a node inside this method's cached window. All
  // involved nodes are either still locked by this transaction or were created
  // by it, so pointer chasing here is race-free. `prev` is the previous
  // method's window as updated after its apply step.
  Window po_validate(const Window& prev, bool prev_inserted, Window cached, Key key) const {
    if (cached.blue_pred->mark.load(std::memory_order_acquire) ||
        cached.blue_pred->blue_next.load(std::memory_order_acquire) != cached.blue_curr) {
      if (prev_inserted) {
        Node* inserted = prev.blue_pred->blue_next.load(std::memory_order_acquire);
        cached.blue_pred = inserted->key < key ? inserted : prev.blue_pred;
      } else {
        cached.blue_pred = prev.blue_pred;
      }
    }
    if (cached.red_pred->red_next.load(std::memory_order_acquire) != cached.red_curr) {
      Node* inserted = prev.red_pred->red_next.load(std::memory_order_acquire);
      if (inserted->key < key) cached.red_pred = inserted;
    }
    assert(cached.blue_pred->key < key && !cached.blue_pred->mark.load());
    assert(cached.red_pred->key < key);
    assert(cached.red_pred->red_next.load(std::memory_order_acquire) == cached.red_curr);
    return cached;
  }

  // Full red-chain sweep, one node locked at a time. `fn(node)` runs under the
  // node's lock; sentinels are skipped.
  template <typename Fn>
  void for_each_node(Fn&& fn) {
    for (std::size_t b = 0; b < buckets_; ++b) {
      Node* n = heads_[b]->red_next.load(std::memory_order_acquire);
      while (n->key != kTailKey) {
        {
          std::lock_guard<std::mutex> g(n->lock);
          fn(*n);
        }
        n = n->red_next.load(std::memory_order_acquire);
      }
    }
  }

  static constexpr Key kHeadKey = 0;
  static constexpr Key kTailKey = std::numeric_limits<Key>::max();

 private:
  std::size_t buckets_;
  std::vector<Node*> heads_;
  std::vector<Node*> tails_;
};

}  // namespace sfstm
