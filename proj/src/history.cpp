#include "sfstm/history.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sfstm {

const char* method_name(Method m) {
  switch (m) {
    case Method::begin: return "BEGIN";
    case Method::lookup: return "LOOKUP";
    case Method::insert_log: return "INSERT_LOG";
    case Method::remove: return "DELETE";
    case Method::tryc_commit: return "TRYC_COMMIT";
    case Method::tryc_abort: return "TRYC_ABORT";
  }
  return "?";
}

std::optional<Method> method_from_name(const std::string& name) {
  if (name == "BEGIN") return Method::begin;
  if (name == "LOOKUP") return Method::lookup;
  if (name == "INSERT_LOG") return Method::insert_log;
  if (name == "DELETE") return Method::remove;
  if (name == "TRYC_COMMIT") return Method::tryc_commit;
  if (name == "TRYC_ABORT") return Method::tryc_abort;
  return std::nullopt;
}

namespace {

std::string field(const std::optional<std::uint64_t>& v) {
  return v ? std::to_string(*v) : "-";
}

std::optional<std::uint64_t> parse_field(const std::string& tok, const std::string& line) {
  if (tok == "-") return std::nullopt;
  try {
    return std::stoull(tok);
  } catch (const std::exception&) {
    throw std::runtime_error("malformed history field '" + tok + "' in: " + line);
  }
}

}  // namespace

std::string HistoryEvent::to_line() const {
  std::ostringstream os;
  os << txn_id << ' ' << its << ' ' << cts << ' ' << wts << ' ' << method_name(method) << ' '
     << field(key) << ' ' << field(value) << ' ' << field(version_ts) << ' ' << lp_seq;
  return os.str();
}

HistoryEvent HistoryEvent::from_line(const std::string& line) {
  std::istringstream is(line);
  std::string tok[9];
  for (int i = 0; i < 9; ++i)
    if (!(is >> tok[i])) throw std::runtime_error("short history line: " + line);
  std::string extra;
  if (is >> extra) throw std::runtime_error("trailing fields in history line: " + line);
  HistoryEvent ev;
  ev.txn_id = *parse_field(tok[0], line);
  ev.its = *parse_field(tok[1], line);
  ev.cts = *parse_field(tok[2], line);
  ev.wts = *parse_field(tok[3], line);
  auto m = method_from_name(tok[4]);
  if (!m) throw std::runtime_error("unknown method in history line: " + line);
  ev.method = *m;
  ev.key = parse_field(tok[5], line);
  ev.value = parse_field(tok[6], line);
  ev.version_ts = parse_field(tok[7], line);
  ev.lp_seq = *parse_field(tok[8], line);
  return ev;
}

void sort_history(History& h) {
  std::sort(h.begin(), h.end(),
            [](const HistoryEvent& a, const HistoryEvent& b) { return a.lp_seq < b.lp_seq; });
}

History load_history(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open history file: " + path);
  History h;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    h.push_back(HistoryEvent::from_line(line));
  }
  sort_history(h);
  return h;
}

void save_history(const History& h, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write history file: " + path);
  for (const auto& ev : h) out << ev.to_line() << '\n';
}

}  // namespace sfstm
