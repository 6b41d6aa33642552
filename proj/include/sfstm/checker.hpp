#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sfstm/history.hpp"
#include "sfstm/timestamps.hpp"

namespace sfstm {

enum class CheckMode { co_opacity, local_opacity };

enum class EdgeKind { rt, tryc_tryc, tryc_rv, rv_tryc, rvf, mv };

const char* edge_kind_name(EdgeKind k);

struct GraphEdge {
  Timestamp from;  // txn ids (cts)
  Timestamp to;
  EdgeKind kind;

  bool operator==(const GraphEdge& o) const {
    return from == o.from && to == o.to && kind == o.kind;
  }
  bool operator<(const GraphEdge& o) const {
    if (from != o.from) return from < o.from;
    if (to != o.to) return to < o.to;
    return static_cast<int>(kind) < static_cast<int>(o.kind);
  }
};

// Explicit conflict graph over the committed transactions of one history.
// Quadratic in places; meant for analysis and small histories. check_history
// decides the same question with compressed order chains.
struct MethodGraph {
  std::vector<Timestamp> vertices;  // ascending cts
  std::vector<GraphEdge> edges;     // deduplicated, sorted

  bool has_edge(Timestamp from, Timestamp to, EdgeKind kind) const {
    return std::find(edges.begin(), edges.end(), GraphEdge{from, to, kind}) != edges.end();
  }

  // Deterministic Kahn: among ready vertices the smallest cts leaves first.
  // Returns false (and a cycle witness) when no topological order exists.
  bool topo_sort(std::vector<Timestamp>& order, std::vector<GraphEdge>* cycle = nullptr) const;
};

// Real-time + conflict edges (tryC-tryC, tryC-rv, rv-tryC): the single-version
// correctness graph. Vertices are the committed transactions.
MethodGraph build_co_opacity_graph(const History& h);

// Real-time + reads-from + multi-version ordering edges: the graph checked per
// sub-history. A transaction whose terminal event is an abort participates as
// if it committed at its abort point.
MethodGraph build_opacity_graph(const History& h);

// One sub-history per aborted transaction: every event of transactions that
// committed before the abort point, the aborted transaction's own successful
// events, and a synthetic commit in place of its abort. Plus one final
// sub-history holding only the committed transactions, in that order.
std::vector<History> sub_histories(const History& h);

struct CheckVerdict {
  bool ok = false;
  std::vector<Timestamp> serial_order;  // final committed graph, topological
  std::vector<GraphEdge> cycle;         // witness when a graph is cyclic
  std::string detail;                   // diagnostics (validity failures etc.)
};

// Offline decision procedure. co_opacity: the committed conflict graph must be
// acyclic. local_opacity: every sub-history's opacity graph must be acyclic.
// Also replays the final serial order and confirms every read returns the
// closest preceding write. Deterministic for identical history bytes.
// force_materialized makes local opacity build every sub-history graph
// explicitly instead of the incremental path (for cross-checking; slow).
CheckVerdict check_history(const History& h, CheckMode mode, bool force_materialized = false);

}  // namespace sfstm
