#include "sfstm/checker.hpp"

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace sfstm {

const char* edge_kind_name(EdgeKind k) {
  switch (k) {
    case EdgeKind::rt: return "rt";
    case EdgeKind::tryc_tryc: return "tryc-tryc";
    case EdgeKind::tryc_rv: return "tryc-rv";
    case EdgeKind::rv_tryc: return "rv-tryc";
    case EdgeKind::rvf: return "rvf";
    case EdgeKind::mv: return "mv";
  }
  return "?";
}

namespace {

struct ReadOp {
  Key key = 0;
  Timestamp version_cts = 0;  // 0 = initial version
  uint64_t lp = 0;
  std::optional<Value> observed;
};

struct UpdOp {
  Key key = 0;
  bool is_delete = false;
  bool effective = true;  // deletes of an absent key change nothing
  std::optional<Value> value;
};

struct TxnRec {
  Timestamp id = 0;
  Timestamp its = 0;
  Timestamp cts = 0;
  Timestamp wts = 0;
  uint64_t begin_lp = 0;
  uint64_t end_lp = 0;
  bool committed = false;
  bool terminated = false;
  bool has_begin = false;
  std::vector<ReadOp> reads;
  std::vector<UpdOp> upds;  // at most one per key
};

struct ParsedHistory {
  std::vector<TxnRec> txns;  // ascending cts
  std::unordered_map<Timestamp, size_t> by_id;
  std::string error;

  bool failed() const { return !error.empty(); }
  const TxnRec* find(Timestamp id) const {
    auto it = by_id.find(id);
    return it == by_id.end() ? nullptr : &txns[it->second];
  }
};

// The update set a commit would apply: the last insert/delete per key, where a
// delete observing an absent key is a no-op. A later no-op delete never
// downgrades an earlier effective one.
void fold_update(std::map<Key, UpdOp>& upds, const HistoryEvent& ev) {
  Key k = *ev.key;
  if (ev.method == Method::insert_log) {
    upds[k] = UpdOp{k, false, true, ev.value};
    return;
  }
  assert(ev.method == Method::remove);
  auto it = upds.find(k);
  if (ev.value.has_value()) {
    upds[k] = UpdOp{k, true, true, std::nullopt};
  } else if (it == upds.end() || !(it->second.is_delete && it->second.effective)) {
    upds[k] = UpdOp{k, true, false, std::nullopt};
  }
}

ParsedHistory parse_history(const History& input) {
  ParsedHistory out;
  History h = input;
  sort_history(h);

  struct Building {
    TxnRec rec;
    std::map<Key, UpdOp> upds;
  };
  std::map<Timestamp, Building> building;  // keyed by cts so output is ordered

  auto fail = [&](const HistoryEvent& ev, const std::string& why) {
    std::ostringstream os;
    os << "event lp=" << ev.lp_seq << " txn=" << ev.txn_id << ": " << why;
    out.error = os.str();
  };

  uint64_t max_lp = 0;
  for (const HistoryEvent& ev : h) {
    max_lp = std::max(max_lp, ev.lp_seq);
    Building& b = building[ev.cts];
    TxnRec& t = b.rec;
    if (t.has_begin && ev.method != Method::begin && t.terminated) {
      fail(ev, "event after terminal");
      return out;
    }
    switch (ev.method) {
      case Method::begin:
        if (t.has_begin) {
          fail(ev, "duplicate begin");
          return out;
        }
        t.has_begin = true;
        t.id = ev.txn_id;
        t.its = ev.its;
        t.cts = ev.cts;
        t.wts = ev.wts;
        t.begin_lp = ev.lp_seq;
        break;
      case Method::lookup:
        if (!t.has_begin || !ev.key) {
          fail(ev, "lookup outside txn or missing key");
          return out;
        }
        // no version field means the value came from the txn's own log
        if (ev.version_ts)
          t.reads.push_back(ReadOp{*ev.key, *ev.version_ts, ev.lp_seq, ev.value});
        break;
      case Method::insert_log:
      case Method::remove:
        if (!t.has_begin || !ev.key) {
          fail(ev, "update outside txn or missing key");
          return out;
        }
        // a delete observes the key like a lookup unless served from the log
        if (ev.method == Method::remove && ev.version_ts)
          t.reads.push_back(ReadOp{*ev.key, *ev.version_ts, ev.lp_seq, ev.value});
        fold_update(b.upds, ev);
        break;
      case Method::tryc_commit:
      case Method::tryc_abort:
        if (!t.has_begin) {
          fail(ev, "terminal without begin");
          return out;
        }
        t.terminated = true;
        t.committed = (ev.method == Method::tryc_commit);
        t.end_lp = ev.lp_seq;
        break;
    }
  }

  // A transaction the run never terminated is treated as aborting after the
  // last recorded event, so its reads still get checked.
  for (auto& [cts, b] : building) {
    if (!b.rec.has_begin) {
      std::ostringstream os;
      os << "txn cts=" << cts << " has events but no begin";
      out.error = os.str();
      return out;
    }
    if (!b.rec.terminated) {
      b.rec.terminated = true;
      b.rec.committed = false;
      b.rec.end_lp = ++max_lp;
    }
    for (auto& [k, u] : b.upds) b.rec.upds.push_back(u);
    out.txns.push_back(std::move(b.rec));
  }
  for (size_t i = 0; i < out.txns.size(); ++i) out.by_id[out.txns[i].id] = i;

  // Reads must come from the initial version or from a transaction that
  // committed an effective update on that key before the read, and must have
  // observed exactly what that update wrote.
  for (const TxnRec& t : out.txns) {
    for (const ReadOp& r : t.reads) {
      if (r.version_cts == 0) {
        if (r.observed.has_value()) {
          std::ostringstream os;
          os << "txn " << t.id << " read key " << r.key
             << " from the initial version but observed a value";
          out.error = os.str();
          return out;
        }
        continue;
      }
      const TxnRec* w = out.find(r.version_cts);
      const UpdOp* u = nullptr;
      if (w) {
        for (const UpdOp& cand : w->upds) {
          if (cand.key == r.key && cand.effective) u = &cand;
        }
      }
      std::ostringstream os;
      if (!w || !u) {
        os << "txn " << t.id << " read key " << r.key << " from txn "
           << r.version_cts << " which wrote no such version";
        out.error = os.str();
        return out;
      }
      if (!w->committed || w->end_lp >= r.lp) {
        os << "txn " << t.id << " read key " << r.key << " from txn "
           << r.version_cts << " before that txn committed";
        out.error = os.str();
        return out;
      }
      if (u->is_delete ? r.observed.has_value() : (r.observed != u->value)) {
        os << "txn " << t.id << " read key " << r.key << " from txn "
           << r.version_cts << " but observed a different value";
        out.error = os.str();
        return out;
      }
    }
  }
  return out;
}

std::vector<size_t> committed_indices(const ParsedHistory& p) {
  std::vector<size_t> out;
  for (size_t i = 0; i < p.txns.size(); ++i)
    if (p.txns[i].committed) out.push_back(i);
  return out;
}

// ---------------------------------------------------------------------------
// Explicit graphs (definition-shaped, quadratic; fixtures and cross-checks).

void add_edge(std::set<GraphEdge>& es, Timestamp from, Timestamp to, EdgeKind k) {
  if (from == to) return;
  es.insert(GraphEdge{from, to, k});
}

MethodGraph finish_graph(const ParsedHistory& p, std::set<GraphEdge>&& es) {
  MethodGraph g;
  for (const TxnRec& t : p.txns)
    if (t.committed) g.vertices.push_back(t.id);
  g.edges.assign(es.begin(), es.end());
  return g;
}

void add_rt_edges(const ParsedHistory& p, const std::vector<size_t>& committed,
                  std::set<GraphEdge>& es) {
  for (size_t i : committed)
    for (size_t j : committed)
      if (p.txns[i].end_lp < p.txns[j].begin_lp)
        add_edge(es, p.txns[i].id, p.txns[j].id, EdgeKind::rt);
}

struct KeyWriter {
  Timestamp wts = 0;
  Timestamp cts = 0;
  uint64_t end_lp = 0;
  size_t txn = 0;
};

std::map<Key, std::vector<KeyWriter>> writers_by_key(const ParsedHistory& p,
                                                     const std::vector<size_t>& committed) {
  std::map<Key, std::vector<KeyWriter>> out;
  for (size_t i : committed) {
    const TxnRec& t = p.txns[i];
    for (const UpdOp& u : t.upds)
      if (u.effective) out[u.key].push_back(KeyWriter{t.wts, t.cts, t.end_lp, i});
  }
  return out;
}

// The observation point of an aborted transaction: its last successful read
// of shared state. A commit that lands after this point was never visible to
// the transaction, so it stays out of the sub-history; pending updates and
// own-log reads observe nothing shared and do not extend the point.
uint64_t observation_cut(const TxnRec& a) {
  uint64_t cut = a.begin_lp;
  for (const ReadOp& r : a.reads) cut = std::max(cut, r.lp);
  return cut;
}

}  // namespace

bool MethodGraph::topo_sort(std::vector<Timestamp>& order, std::vector<GraphEdge>* cycle) const {
  order.clear();
  std::unordered_map<Timestamp, size_t> idx;
  for (size_t i = 0; i < vertices.size(); ++i) idx[vertices[i]] = i;
  std::vector<std::vector<size_t>> adj(vertices.size());
  std::vector<size_t> indeg(vertices.size(), 0);
  for (const GraphEdge& e : edges) {
    adj[idx.at(e.from)].push_back(idx.at(e.to));
    ++indeg[idx.at(e.to)];
  }
  // vertices are stored ascending by id, so a min-heap of indices is a
  // min-heap of ids: ties always resolve toward the smallest cts
  std::priority_queue<size_t, std::vector<size_t>, std::greater<>> ready;
  for (size_t i = 0; i < vertices.size(); ++i)
    if (indeg[i] == 0) ready.push(i);
  while (!ready.empty()) {
    size_t v = ready.top();
    ready.pop();
    order.push_back(vertices[v]);
    for (size_t w : adj[v])
      if (--indeg[w] == 0) ready.push(w);
  }
  if (order.size() == vertices.size()) return true;

  if (cycle) {
    // every residue vertex keeps at least one unfinished predecessor, so a
    // backward walk must loop; a forward walk could run into a dead end
    // downstream of the cycle instead
    cycle->clear();
    std::vector<std::vector<size_t>> preds(vertices.size());
    for (const GraphEdge& e : edges) {
      size_t from = idx.at(e.from);
      size_t to = idx.at(e.to);
      if (indeg[from] > 0 && indeg[to] > 0) preds[to].push_back(from);
    }
    std::vector<int> seen_at(vertices.size(), -1);
    std::vector<size_t> path;
    size_t v = 0;
    while (indeg[v] == 0) ++v;
    while (seen_at[v] < 0) {
      seen_at[v] = static_cast<int>(path.size());
      path.push_back(v);
      v = preds[v].front();
    }
    std::vector<size_t> loop(path.begin() + seen_at[v], path.end());
    std::reverse(loop.begin(), loop.end());
    for (size_t i = 0; i < loop.size(); ++i) {
      size_t a = loop[i];
      size_t b = loop[(i + 1) % loop.size()];
      for (const GraphEdge& e : edges)
        if (e.from == vertices[a] && e.to == vertices[b]) {
          cycle->push_back(e);
          break;
        }
    }
  }
  return false;
}

MethodGraph build_co_opacity_graph(const History& h) {
  ParsedHistory p = parse_history(h);
  if (p.failed()) throw std::invalid_argument("invalid history: " + p.error);
  std::vector<size_t> committed = committed_indices(p);
  std::set<GraphEdge> es;
  add_rt_edges(p, committed, es);

  auto writers = writers_by_key(p, committed);
  for (auto& [key, ws] : writers) {
    std::sort(ws.begin(), ws.end(),
              [](const KeyWriter& a, const KeyWriter& b) { return a.end_lp < b.end_lp; });
    for (size_t i = 0; i < ws.size(); ++i)
      for (size_t j = i + 1; j < ws.size(); ++j)
        add_edge(es, p.txns[ws[i].txn].id, p.txns[ws[j].txn].id, EdgeKind::tryc_tryc);
  }
  for (size_t i : committed) {
    const TxnRec& t = p.txns[i];
    for (const ReadOp& r : t.reads) {
      if (r.version_cts != 0) add_edge(es, r.version_cts, t.id, EdgeKind::tryc_rv);
      auto it = writers.find(r.key);
      if (it == writers.end()) continue;
      for (const KeyWriter& w : it->second)
        if (w.end_lp > r.lp) add_edge(es, t.id, p.txns[w.txn].id, EdgeKind::rv_tryc);
    }
  }
  return finish_graph(p, std::move(es));
}

MethodGraph build_opacity_graph(const History& h) {
  ParsedHistory p = parse_history(h);
  if (p.failed()) throw std::invalid_argument("invalid history: " + p.error);
  std::vector<size_t> committed = committed_indices(p);
  std::set<GraphEdge> es;
  add_rt_edges(p, committed, es);

  auto writers = writers_by_key(p, committed);
  for (auto& [key, ws] : writers)
    std::sort(ws.begin(), ws.end(), [](const KeyWriter& a, const KeyWriter& b) {
      return std::pair(a.wts, a.cts) < std::pair(b.wts, b.cts);
    });

  for (size_t i : committed) {
    const TxnRec& t = p.txns[i];
    for (const ReadOp& r : t.reads) {
      if (r.version_cts != 0) add_edge(es, r.version_cts, t.id, EdgeKind::rvf);
      auto it = writers.find(r.key);
      if (it == writers.end()) continue;
      const std::vector<KeyWriter>& ws = it->second;
      // position of the read version in the version order; 0 = initial
      size_t pos = 0;
      for (size_t m = 0; m < ws.size(); ++m)
        if (p.txns[ws[m].txn].id == r.version_cts) pos = m + 1;
      for (size_t m = 1; m <= ws.size(); ++m) {
        if (m == pos) continue;
        Timestamp other = p.txns[ws[m - 1].txn].id;
        if (m < pos) {
          if (r.version_cts != 0) add_edge(es, other, r.version_cts, EdgeKind::mv);
        } else {
          add_edge(es, t.id, other, EdgeKind::mv);
        }
      }
    }
  }
  return finish_graph(p, std::move(es));
}

std::vector<History> sub_histories(const History& input) {
  ParsedHistory p = parse_history(input);
  if (p.failed()) throw std::invalid_argument("invalid history: " + p.error);
  History h = input;
  sort_history(h);

  std::unordered_map<Timestamp, History> events_of;
  for (const HistoryEvent& ev : h) events_of[ev.cts].push_back(ev);

  std::vector<const TxnRec*> aborted;
  for (const TxnRec& t : p.txns)
    if (!t.committed) aborted.push_back(&t);
  std::sort(aborted.begin(), aborted.end(),
            [](const TxnRec* a, const TxnRec* b) { return a->end_lp < b->end_lp; });

  std::vector<History> out;
  for (const TxnRec* a : aborted) {
    uint64_t cut = observation_cut(*a);
    History sub;
    for (const TxnRec& t : p.txns)
      if (t.committed && t.end_lp < cut)
        for (const HistoryEvent& ev : events_of[t.cts]) sub.push_back(ev);
    for (const HistoryEvent& ev : events_of[a->cts]) {
      if (ev.method == Method::tryc_abort || ev.lp_seq > cut) continue;
      // The synthesized commit publishes nothing: this transaction's pending
      // updates never became versions, so only the read half of its methods
      // carries over. A delete keeps its observation as a plain lookup.
      HistoryEvent copy = ev;
      if (copy.method == Method::insert_log) continue;
      if (copy.method == Method::remove) copy.method = Method::lookup;
      sub.push_back(copy);
    }
    HistoryEvent commit;
    commit.txn_id = a->id;
    commit.its = a->its;
    commit.cts = a->cts;
    commit.wts = a->wts;
    commit.method = Method::tryc_commit;
    commit.lp_seq = a->end_lp;
    sub.push_back(commit);
    sort_history(sub);
    out.push_back(std::move(sub));
  }

  History final_sub;
  for (const TxnRec& t : p.txns)
    if (t.committed)
      for (const HistoryEvent& ev : events_of[t.cts]) final_sub.push_back(ev);
  sort_history(final_sub);
  out.push_back(std::move(final_sub));
  return out;
}

// ---------------------------------------------------------------------------
// Compressed graphs: real-time and per-key version-order constraints become
// chains of virtual vertices, so the edge count stays linear in the number of
// events and the 10k-transaction stress histories stay checkable.

namespace {

struct IntGraph {
  // transaction vertices first (same order as txn_ids), then virtual ones
  std::vector<std::vector<std::pair<int, EdgeKind>>> adj;
  std::vector<Timestamp> txn_ids;  // ascending cts
  int txn_count = 0;

  int add_virtual() {
    adj.emplace_back();
    return static_cast<int>(adj.size()) - 1;
  }
  void edge(int from, int to, EdgeKind k) {
    if (from == to) return;
    adj[from].push_back({to, k});
  }
};

struct TopoResult {
  bool acyclic = false;
  std::vector<Timestamp> order;  // transactions only
  std::vector<int> rank;         // per vertex, pop sequence; -1 when cyclic
  std::vector<GraphEdge> cycle;  // virtual vertices spliced out
};

TopoResult topo_sort(const IntGraph& g) {
  TopoResult res;
  size_t n = g.adj.size();
  std::vector<int> indeg(n, 0);
  for (const auto& outs : g.adj)
    for (auto [to, kind] : outs) ++indeg[to];

  // virtual vertices drain eagerly; transactions leave smallest-cts first,
  // which makes the serial order a deterministic function of the history
  std::priority_queue<int, std::vector<int>, std::greater<>> txn_ready;
  std::vector<int> virt_ready;
  for (size_t v = 0; v < n; ++v)
    if (indeg[v] == 0) {
      if (static_cast<int>(v) < g.txn_count)
        txn_ready.push(static_cast<int>(v));
      else
        virt_ready.push_back(static_cast<int>(v));
    }

  res.rank.assign(n, -1);
  int next_rank = 0;
  size_t popped = 0;
  auto visit = [&](int v) {
    res.rank[v] = next_rank++;
    ++popped;
    if (v < g.txn_count) res.order.push_back(g.txn_ids[v]);
    for (auto [to, kind] : g.adj[v])
      if (--indeg[to] == 0) {
        if (to < g.txn_count)
          txn_ready.push(to);
        else
          virt_ready.push_back(to);
      }
  };
  while (!txn_ready.empty() || !virt_ready.empty()) {
    while (!virt_ready.empty()) {
      int v = virt_ready.back();
      virt_ready.pop_back();
      visit(v);
    }
    if (!txn_ready.empty()) {
      int v = txn_ready.top();
      txn_ready.pop();
      visit(v);
    }
  }
  res.acyclic = (popped == n);
  if (res.acyclic) return res;

  // witness: every residue vertex keeps an unfinished predecessor, so walking
  // predecessors must loop; reverse the walk to report a forward cycle
  std::vector<std::vector<int>> preds(n);
  for (size_t from = 0; from < n; ++from) {
    if (indeg[from] == 0) continue;
    for (auto [to, kind] : g.adj[from])
      if (indeg[to] > 0) preds[to].push_back(static_cast<int>(from));
  }
  std::vector<int> path;
  std::vector<int> seen_at(n, -1);
  int v = 0;
  while (indeg[v] == 0) ++v;
  while (seen_at[v] < 0) {
    seen_at[v] = static_cast<int>(path.size());
    path.push_back(v);
    v = preds[v].front();
  }
  std::vector<int> loop(path.begin() + seen_at[v], path.end());
  std::reverse(loop.begin(), loop.end());
  std::vector<std::pair<int, EdgeKind>> hops;
  for (size_t i = 0; i < loop.size(); ++i) {
    int a = loop[i];
    int b = loop[(i + 1) % loop.size()];
    EdgeKind k = EdgeKind::rt;
    for (auto [to, kind] : g.adj[a])
      if (to == b) {
        k = kind;
        break;
      }
    hops.push_back({a, k});
  }
  // rotate so the path starts on a transaction, then splice
  size_t start = 0;
  while (start < hops.size() && hops[start].first >= g.txn_count) ++start;
  if (start == hops.size()) return res;  // degenerate: all-virtual loop
  Timestamp from = g.txn_ids[hops[start].first];
  EdgeKind kind = hops[start].second;
  for (size_t off = 1; off <= hops.size(); ++off) {
    auto [vtx, k] = hops[(start + off) % hops.size()];
    if (vtx < g.txn_count) {
      res.cycle.push_back(GraphEdge{from, g.txn_ids[vtx], kind});
      from = g.txn_ids[vtx];
      kind = k;
    }
  }
  return res;
}

// Shared layout for both compressed builders and the per-abort filters.
struct KeyVersions {
  // index 0 is the initial version; real versions follow in (wts, cts) order
  std::vector<KeyWriter> writers;            // writers[m-1] wrote version m
  std::vector<char> has_reader;              // per version index
  std::vector<std::vector<size_t>> readers;  // txn indices, per version index
  std::unordered_map<Timestamp, size_t> pos_of;  // writer id -> version index
};

struct CompressedBase {
  ParsedHistory parsed;
  std::vector<size_t> committed;              // txn indices, ascending cts
  std::unordered_map<size_t, int> vertex_of;  // txn index -> graph vertex
  IntGraph graph;
  std::vector<std::pair<uint64_t, int>> commits_by_lp;  // (end_lp, vertex)
  std::map<Key, KeyVersions> keys;

  int vertex(size_t txn_index) const { return vertex_of.at(txn_index); }
};

void build_base(const History& h, CompressedBase& b) {
  b.parsed = parse_history(h);
  if (b.parsed.failed()) throw std::invalid_argument("invalid history: " + b.parsed.error);
  b.committed = committed_indices(b.parsed);
  for (size_t i : b.committed) {
    b.vertex_of[i] = static_cast<int>(b.graph.txn_ids.size());
    b.graph.txn_ids.push_back(b.parsed.txns[i].id);
    b.graph.adj.emplace_back();
  }
  b.graph.txn_count = static_cast<int>(b.graph.txn_ids.size());

  for (size_t i : b.committed)
    b.commits_by_lp.push_back({b.parsed.txns[i].end_lp, b.vertex(i)});
  std::sort(b.commits_by_lp.begin(), b.commits_by_lp.end());

  auto writers = writers_by_key(b.parsed, b.committed);
  for (auto& [key, ws] : writers) {
    std::sort(ws.begin(), ws.end(), [](const KeyWriter& x, const KeyWriter& y) {
      return std::pair(x.wts, x.cts) < std::pair(y.wts, y.cts);
    });
    KeyVersions kv;
    kv.writers = std::move(ws);
    kv.has_reader.assign(kv.writers.size() + 1, 0);
    kv.readers.assign(kv.writers.size() + 1, {});
    for (size_t m = 0; m < kv.writers.size(); ++m)
      kv.pos_of[b.parsed.txns[kv.writers[m].txn].id] = m + 1;
    b.keys[key] = std::move(kv);
  }
  // reads may touch keys nobody committed a write to
  for (size_t i : b.committed)
    for (const ReadOp& r : b.parsed.txns[i].reads)
      if (!b.keys.count(r.key)) {
        KeyVersions kv;
        kv.has_reader.assign(1, 0);
        kv.readers.assign(1, {});
        b.keys[r.key] = std::move(kv);
      }
  for (size_t i : b.committed) {
    for (const ReadOp& r : b.parsed.txns[i].reads) {
      KeyVersions& kv = b.keys[r.key];
      size_t pos = (r.version_cts == 0) ? 0 : kv.pos_of.at(r.version_cts);
      kv.has_reader[pos] = 1;
      kv.readers[pos].push_back(i);
    }
  }
}

// real-time order: commit events chained by lp; a transaction hangs off the
// chain node of the latest commit that precedes its begin
void add_rt_chain(CompressedBase& b) {
  if (b.commits_by_lp.empty()) return;
  std::vector<int> chain;
  for (size_t i = 0; i < b.commits_by_lp.size(); ++i) {
    int u = b.graph.add_virtual();
    chain.push_back(u);
    if (i > 0) b.graph.edge(chain[i - 1], u, EdgeKind::rt);
    b.graph.edge(b.commits_by_lp[i].second, u, EdgeKind::rt);
  }
  for (size_t i : b.committed) {
    const TxnRec& t = b.parsed.txns[i];
    auto it = std::lower_bound(
        b.commits_by_lp.begin(), b.commits_by_lp.end(),
        std::pair<uint64_t, int>{t.begin_lp, 0});
    if (it == b.commits_by_lp.begin()) continue;
    size_t last = static_cast<size_t>(it - b.commits_by_lp.begin()) - 1;
    b.graph.edge(chain[last], b.vertex(i), EdgeKind::rt);
  }
}

IntGraph build_co_compressed(CompressedBase& b) {
  add_rt_chain(b);
  // writers of one key, chained in commit order
  std::map<Key, std::vector<KeyWriter>> by_lp;
  for (auto& [key, kv] : b.keys) {
    std::vector<KeyWriter> ws = kv.writers;
    std::sort(ws.begin(), ws.end(),
              [](const KeyWriter& x, const KeyWriter& y) { return x.end_lp < y.end_lp; });
    for (size_t i = 1; i < ws.size(); ++i)
      b.graph.edge(b.vertex(ws[i - 1].txn), b.vertex(ws[i].txn), EdgeKind::tryc_tryc);
    by_lp[key] = std::move(ws);
  }
  for (size_t i : b.committed) {
    for (const ReadOp& r : b.parsed.txns[i].reads) {
      if (r.version_cts != 0) {
        size_t w = b.parsed.by_id.at(r.version_cts);
        b.graph.edge(b.vertex(w), b.vertex(i), EdgeKind::tryc_rv);
      }
      // first writer committing after the read; its commit chain covers the
      // rest, and if that writer is the reader itself its own chain does
      const std::vector<KeyWriter>& ws = by_lp[r.key];
      auto it = std::upper_bound(ws.begin(), ws.end(), r.lp,
                                 [](uint64_t lp, const KeyWriter& w) { return lp < w.end_lp; });
      if (it != ws.end() && it->txn != i)
        b.graph.edge(b.vertex(i), b.vertex(it->txn), EdgeKind::rv_tryc);
    }
  }
  return std::move(b.graph);
}

IntGraph build_lo_compressed(CompressedBase& b) {
  add_rt_chain(b);
  for (auto& [key, kv] : b.keys) {
    size_t vcount = kv.writers.size();
    for (size_t pos = 0; pos <= vcount; ++pos)
      for (size_t reader : kv.readers[pos])
        if (pos > 0)
          b.graph.edge(b.vertex(kv.writers[pos - 1].txn), b.vertex(reader), EdgeKind::rvf);
    if (vcount == 0) continue;

    // a_chain[m]: "every writer of version >= m comes after"; readers of
    // version m-1 attach to a_chain[m]
    std::vector<int> a_chain(vcount + 1, -1);
    for (size_t m = vcount; m >= 1; --m) {
      a_chain[m] = b.graph.add_virtual();
      b.graph.edge(a_chain[m], b.vertex(kv.writers[m - 1].txn), EdgeKind::mv);
      if (m < vcount) b.graph.edge(a_chain[m], a_chain[m + 1], EdgeKind::mv);
    }
    for (size_t pos = 0; pos < vcount; ++pos)
      for (size_t reader : kv.readers[pos]) {
        // a reader that itself wrote a later version of this key must not be
        // routed through the chain node that fans out to its own write
        auto self = kv.pos_of.find(b.parsed.txns[reader].id);
        if (self != kv.pos_of.end() && self->second > pos) {
          for (size_t l = pos + 1; l < self->second; ++l)
            b.graph.edge(b.vertex(reader), b.vertex(kv.writers[l - 1].txn), EdgeKind::mv);
          if (self->second < vcount)
            b.graph.edge(b.vertex(reader), a_chain[self->second + 1], EdgeKind::mv);
        } else {
          b.graph.edge(b.vertex(reader), a_chain[pos + 1], EdgeKind::mv);
        }
      }

    // b_chain[m]: "every writer of version <= m has run"; a version with a
    // reader pulls the whole prefix of writers ahead of its own writer
    std::vector<int> b_chain(vcount + 1, -1);
    for (size_t m = 1; m <= vcount; ++m) {
      b_chain[m] = b.graph.add_virtual();
      b.graph.edge(b.vertex(kv.writers[m - 1].txn), b_chain[m], EdgeKind::mv);
      if (m > 1) {
        b.graph.edge(b_chain[m - 1], b_chain[m], EdgeKind::mv);
        if (kv.has_reader[m])
          b.graph.edge(b_chain[m - 1], b.vertex(kv.writers[m - 1].txn), EdgeKind::mv);
      }
    }
  }
  return std::move(b.graph);
}

// ---------------------------------------------------------------------------
// Per-abort screening against the final committed order.
//
// Each aborted transaction's sub-history graph is the graph induced by the
// transactions that committed before the abort, plus (a) the aborted
// transaction's own edges and (b) version-order edges its reads activate.
// If every added edge points forward under the final topological ranks, the
// whole sub-history graph embeds into that order and is acyclic. Otherwise we
// rebuild the sub-history and decide exactly.

struct KeyRankIndex {
  std::vector<std::pair<Timestamp, Timestamp>> order;  // (wts, cts) per version
  std::vector<int> writer_rank;                        // per version index >= 1
  std::unordered_map<Timestamp, size_t> pos_of;        // writer id -> index
  std::vector<int> prefix_max_writer_rank;   // over versions 1..m
  std::vector<int> prefix_max_reader_rank;   // over versions 0..m
  std::vector<int> suffix_min_writer_rank;   // over versions m..end
  std::vector<int> suffix_min_read_writer_rank;  // versions m..end with a reader
  std::vector<char> has_reader;
};

constexpr int kNoRank = -1;

struct AbortScreen {
  std::unordered_map<Key, KeyRankIndex> keys;
  std::vector<std::pair<uint64_t, int>> commit_rank_by_lp;  // (end_lp, prefix max rank)
  std::unordered_map<Timestamp, int> rank_of_txn;
};

AbortScreen build_screen(const CompressedBase& b, const TopoResult& topo) {
  AbortScreen s;
  for (size_t i : b.committed)
    s.rank_of_txn[b.parsed.txns[i].id] = topo.rank[b.vertex(i)];

  int running = kNoRank;
  for (auto [lp, vertex] : b.commits_by_lp) {
    running = std::max(running, topo.rank[vertex]);
    s.commit_rank_by_lp.push_back({lp, running});
  }

  for (const auto& [key, kv] : b.keys) {
    KeyRankIndex ki;
    size_t vcount = kv.writers.size();
    ki.has_reader.assign(vcount + 1, 0);
    for (size_t m = 0; m <= vcount; ++m) ki.has_reader[m] = kv.has_reader[m];
    ki.writer_rank.assign(vcount + 1, kNoRank);
    ki.pos_of = kv.pos_of;
    ki.order.resize(vcount + 1);
    ki.order[0] = {0, 0};
    for (size_t m = 1; m <= vcount; ++m) {
      const KeyWriter& w = kv.writers[m - 1];
      ki.order[m] = {w.wts, w.cts};
      ki.writer_rank[m] = topo.rank[b.vertex_of.at(w.txn)];
    }
    ki.prefix_max_writer_rank.assign(vcount + 1, kNoRank);
    ki.prefix_max_reader_rank.assign(vcount + 1, kNoRank);
    for (size_t m = 0; m <= vcount; ++m) {
      int wmax = (m == 0) ? kNoRank : std::max(ki.prefix_max_writer_rank[m - 1], ki.writer_rank[m]);
      ki.prefix_max_writer_rank[m] = wmax;
      int rmax = (m == 0) ? kNoRank : ki.prefix_max_reader_rank[m - 1];
      for (size_t reader : kv.readers[m])
        rmax = std::max(rmax, topo.rank[b.vertex_of.at(reader)]);
      ki.prefix_max_reader_rank[m] = rmax;
    }
    int inf = std::numeric_limits<int>::max();
    ki.suffix_min_writer_rank.assign(vcount + 2, inf);
    ki.suffix_min_read_writer_rank.assign(vcount + 2, inf);
    for (size_t m = vcount; m >= 1; --m) {
      ki.suffix_min_writer_rank[m] =
          std::min(ki.suffix_min_writer_rank[m + 1], ki.writer_rank[m]);
      ki.suffix_min_read_writer_rank[m] = ki.suffix_min_read_writer_rank[m + 1];
      if (ki.has_reader[m])
        ki.suffix_min_read_writer_rank[m] =
            std::min(ki.suffix_min_read_writer_rank[m], ki.writer_rank[m]);
    }
    s.keys[key] = std::move(ki);
  }
  return s;
}

// true = provably acyclic without building the sub-history graph
bool screen_abort(const AbortScreen& s, const TxnRec& a) {
  int max_in = kNoRank;
  int min_out = std::numeric_limits<int>::max();

  // real-time predecessors: everything that committed before the begin
  auto it = std::lower_bound(s.commit_rank_by_lp.begin(), s.commit_rank_by_lp.end(),
                             std::pair<uint64_t, int>{a.begin_lp, 0});
  if (it != s.commit_rank_by_lp.begin()) max_in = std::max(max_in, (it - 1)->second);

  // The transaction's pending updates never became versions, so only its
  // reads add edges beyond the real-time ones.
  for (const ReadOp& r : a.reads) {
    auto kit = s.keys.find(r.key);
    if (kit == s.keys.end()) continue;
    const KeyRankIndex& ki = kit->second;
    size_t pos = 0;
    if (r.version_cts != 0) {
      auto pit = ki.pos_of.find(r.version_cts);
      if (pit == ki.pos_of.end()) return false;  // writer outside the final set
      pos = pit->second;
      max_in = std::max(max_in, ki.writer_rank[pos]);
    }
    // writers of strictly later versions follow the read
    if (pos + 1 < ki.suffix_min_writer_rank.size())
      min_out = std::min(min_out, ki.suffix_min_writer_rank[pos + 1]);
    // reading an otherwise unread version activates ordering edges between
    // other writers; they must agree with the final order
    if (pos >= 1 && !ki.has_reader[pos] &&
        ki.prefix_max_writer_rank[pos - 1] >= ki.writer_rank[pos])
      return false;
  }
  return max_in < min_out;
}

History make_sub_history(const History& sorted_events, const ParsedHistory& p, const TxnRec& a) {
  History sub;
  uint64_t cut = observation_cut(a);
  std::unordered_set<Timestamp> keep;
  for (const TxnRec& t : p.txns)
    if (t.committed && t.end_lp < cut) keep.insert(t.cts);
  for (const HistoryEvent& ev : sorted_events) {
    if (keep.count(ev.cts)) sub.push_back(ev);
    if (ev.cts == a.cts && ev.method != Method::tryc_abort && ev.lp_seq <= cut) {
      // read-only synthesis, mirroring sub_histories: pending updates never
      // became versions
      HistoryEvent copy = ev;
      if (copy.method == Method::insert_log) continue;
      if (copy.method == Method::remove) copy.method = Method::lookup;
      sub.push_back(copy);
    }
  }
  HistoryEvent commit;
  commit.txn_id = a.id;
  commit.its = a.its;
  commit.cts = a.cts;
  commit.wts = a.wts;
  commit.method = Method::tryc_commit;
  commit.lp_seq = a.end_lp;
  sub.push_back(commit);
  return sub;
}

std::string cycle_text(const std::vector<GraphEdge>& cycle) {
  std::ostringstream os;
  os << "cycle:";
  for (const GraphEdge& e : cycle)
    os << " " << e.from << " -" << edge_kind_name(e.kind) << "-> " << e.to;
  return os.str();
}

// every read must return the closest preceding write in the serial order
bool replay_serial(const ParsedHistory& p, const std::vector<Timestamp>& order,
                   std::string& detail) {
  std::unordered_map<Key, Timestamp> last_writer;
  for (Timestamp id : order) {
    const TxnRec& t = *p.find(id);
    for (const ReadOp& r : t.reads) {
      auto it = last_writer.find(r.key);
      Timestamp expect = (it == last_writer.end()) ? 0 : it->second;
      if (r.version_cts != expect) {
        std::ostringstream os;
        os << "serial order not legal: txn " << id << " read key " << r.key
           << " from " << r.version_cts << " but the closest preceding writer is " << expect;
        detail = os.str();
        return false;
      }
    }
    for (const UpdOp& u : t.upds)
      if (u.effective) last_writer[u.key] = t.cts;
  }
  return true;
}

}  // namespace

CheckVerdict check_history(const History& h, CheckMode mode, bool force_materialized) {
  CheckVerdict v;
  CompressedBase base;
  try {
    build_base(h, base);
  } catch (const std::invalid_argument& e) {
    v.detail = e.what();
    return v;
  }
  const ParsedHistory& p = base.parsed;

  // the builder consumes base.graph; the index structures stay valid
  IntGraph final_graph = (mode == CheckMode::co_opacity) ? build_co_compressed(base)
                                                         : build_lo_compressed(base);
  TopoResult topo = topo_sort(final_graph);
  if (!topo.acyclic) {
    v.cycle = topo.cycle;
    v.detail = "committed transactions: " + cycle_text(topo.cycle);
    return v;
  }
  v.serial_order = topo.order;
  if (!replay_serial(p, topo.order, v.detail)) return v;

  if (mode == CheckMode::co_opacity) {
    v.ok = true;
    return v;
  }

  std::vector<const TxnRec*> aborted;
  for (const TxnRec& t : p.txns)
    if (!t.committed) aborted.push_back(&t);
  std::sort(aborted.begin(), aborted.end(),
            [](const TxnRec* a, const TxnRec* b) { return a->end_lp < b->end_lp; });
  if (aborted.empty()) {
    v.ok = true;
    return v;
  }

  History sorted = h;
  sort_history(sorted);
  AbortScreen screen = build_screen(base, topo);
  for (const TxnRec* a : aborted) {
    if (!force_materialized && screen_abort(screen, *a)) continue;
    History sub = make_sub_history(sorted, p, *a);
    CompressedBase sb;
    try {
      build_base(sub, sb);
    } catch (const std::invalid_argument& e) {
      v.detail = e.what();
      return v;
    }
    IntGraph sg = build_lo_compressed(sb);
    TopoResult st = topo_sort(sg);
    if (!st.acyclic) {
      std::ostringstream os;
      os << "sub-history for aborted txn " << a->id << ": " << cycle_text(st.cycle);
      v.cycle = st.cycle;
      v.detail = os.str();
      v.ok = false;
      return v;
    }
  }
  v.ok = true;
  return v;
}

}  // namespace sfstm
