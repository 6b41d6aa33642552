#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <optional>
#include <vector>

#include "sfstm/timestamps.hpp"
#include "sfstm/txn.hpp"

namespace sfstm {

// One committed version of a key. A delete leaves a version with an absent
// value; while such a version is the newest one, the node is marked and the
// key reads as absent. real_time is the creator's commit-range point and
// orders versions against later transactions' begin times.
struct Version {
  Timestamp ts;           // creator's working timestamp
  Timestamp creator_cts;  // creator identity; 0 for the initial version
  std::optional<Value> value;
  std::vector<TxnPtr> readers;  // aborted entries are skipped at validation
  Timestamp real_time = 0;

  bool is_delete() const { return !value.has_value(); }

  // This version's (ts, creator_cts) strictly below (wts, cts).
  bool ts_less(Timestamp wts, Timestamp cts) const {
    if (ts != wts) return ts < wts;
    return creator_cts < cts;
  }
};

inline Version initial_version() { return Version{0, 0, std::nullopt, {}, 0}; }

struct AddVersionResult {
  bool newest_is_delete;
  std::size_t evicted;
};

// Version list, sorted ascending by (ts, creator_cts). Mutated and read only
// under the owning node's lock.
struct VersionList {
  std::vector<Version> versions;

  // Index of the largest version strictly below (wts, cts); npos if none.
  // Bounded retention can evict every version below a reader, in which case
  // the reader has nothing consistent to return and must abort.
  std::size_t find_lts_version(Timestamp wts, Timestamp cts) const {
    std::size_t lo = 0, hi = versions.size();
    while (lo < hi) {
      std::size_t mid = (lo + hi) / 2;
      if (versions[mid].ts_less(wts, cts))
        lo = mid + 1;
      else
        hi = mid;
    }
#ifndef NDEBUG
    std::size_t check = npos;
    for (std::size_t i = 0; i < versions.size(); ++i)
      if (versions[i].ts_less(wts, cts)) check = i;
    assert(check == (lo == 0 ? npos : lo - 1));
#endif
    return lo == 0 ? npos : lo - 1;
  }

  // Inserts in (ts, cts)-sorted position; commits can interleave, so the new
  // version is not necessarily the newest. With bounded retention the oldest
  // version is evicted once the list exceeds k.
  AddVersionResult add_version(Version v, unsigned k_versions) {
    auto pos = std::upper_bound(versions.begin(), versions.end(), v,
                                [](const Version& a, const Version& b) {
                                  return a.ts_less(b.ts, b.creator_cts);
                                });
    versions.insert(pos, std::move(v));
    std::size_t evicted = 0;
    if (k_versions != kUnboundedVersions) {
      while (versions.size() > k_versions) {
        versions.erase(versions.begin());
        ++evicted;
      }
    }
    return AddVersionResult{versions.back().is_delete(), evicted};
  }

  // Reclaims versions no live transaction can still reach: every version with
  // ts < min_live_wts except the largest such one (so any current or future
  // reader still finds its closest version). Returns how many were destroyed.
  std::size_t gc_collect(Timestamp min_live_wts) {
    if (versions.size() <= 1) return 0;
    std::size_t keep = 0;  // becomes the largest index with ts < min_live_wts
    while (keep + 1 < versions.size() && versions[keep + 1].ts < min_live_wts) ++keep;
    if (versions[keep].ts >= min_live_wts || keep == 0) return 0;
    versions.erase(versions.begin(), versions.begin() + keep);
    return keep;
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

// Single-version payload: the value and reader list live on the node itself.
struct SvCell {
  std::optional<Value> value;
  std::vector<TxnPtr> readers;
  Timestamp last_writer_cts = 0;  // 0 = initial state; history recording only
};

}  // namespace sfstm
