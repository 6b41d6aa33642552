#pragma once

#include <atomic>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace sfstm {

using Timestamp = std::uint64_t;
using Key = std::uint64_t;
using Value = std::uint64_t;

// Upper-limit sentinel: "no constraint yet". Never a valid counter value.
inline constexpr Timestamp kInfinity = std::numeric_limits<Timestamp>::max();

// Contention factor as an exact decimal rational. Timestamp arithmetic must be
// exact: with the usual 0.1 default, a binary-double product like 0.1 * 30
// lands strictly above 3 and ceil() would drift the result by one.
struct CFactor {
  std::uint64_t num = 1;
  std::uint64_t den = 10;

  // Parses "0.1", "1", "2.25", ... into num/den (not reduced; never needs to be).
  static CFactor parse(const std::string& text) {
    auto dot = text.find('.');
    std::string whole = dot == std::string::npos ? text : text.substr(0, dot);
    std::string frac = dot == std::string::npos ? "" : text.substr(dot + 1);
    if (whole.empty() && frac.empty()) throw std::invalid_argument("empty c factor");
    for (char ch : whole + frac)
      if (ch < '0' || ch > '9') throw std::invalid_argument("malformed c factor: " + text);
    std::uint64_t den = 1;
    for (size_t i = 0; i < frac.size(); ++i) {
      if (den > std::numeric_limits<std::uint64_t>::max() / 10)
        throw std::invalid_argument("c factor has too many digits: " + text);
      den *= 10;
    }
    std::uint64_t num = 0;
    for (char ch : whole + frac) num = num * 10 + static_cast<std::uint64_t>(ch - '0');
    return CFactor{num, den};
  }

  bool positive() const { return num > 0; }
};

// wts = cts + ceil(c * (cts - its)), evaluated exactly in 128-bit integers.
inline Timestamp compute_wts(Timestamp its, Timestamp cts, CFactor c) {
  if (cts < its) throw std::invalid_argument("current timestamp precedes initial timestamp");
  unsigned __int128 delta = cts - its;
  unsigned __int128 prod = delta * c.num;
  unsigned __int128 drift = (prod + c.den - 1) / c.den;
  unsigned __int128 wts = static_cast<unsigned __int128>(cts) + drift;
  if (wts >= kInfinity) throw std::overflow_error("working timestamp overflow");
  return static_cast<Timestamp>(wts);
}

// Shared monotone counter. begin() draws with get-and-increment; commit times
// are drawn with add-and-get so a later begin can observe at least that value.
class GlobalCounter {
 public:
  Timestamp get_and_increment() { return next_.fetch_add(1, std::memory_order_acq_rel); }

  Timestamp add_and_get(Timestamp step) {
    return next_.fetch_add(step, std::memory_order_acq_rel) + step;
  }

  Timestamp peek() const { return next_.load(std::memory_order_acquire); }

  // Moves the counter forward so the next draw returns at least `value`.
  // Replay harnesses and fixtures use this to pin concrete timestamps.
  void advance_to(Timestamp value) {
    Timestamp cur = next_.load(std::memory_order_acquire);
    while (cur < value && !next_.compare_exchange_weak(cur, value, std::memory_order_acq_rel)) {
    }
  }

 private:
  std::atomic<Timestamp> next_{1};
};

}  // namespace sfstm
