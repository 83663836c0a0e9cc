#include "pope/bench.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "pope/error.hpp"
#include "pope/mope.hpp"
#include "pope/server.hpp"

namespace pope {

using nlohmann::json;

namespace {

uint64_t ipow(uint64_t b, int e) {
  uint64_t r = 1;
  while (e--) r *= b;
  return r;
}

// floor(n^(1/k)) without float edge cases on exact powers
uint64_t iroot(uint64_t n, int k) {
  if (!n) return 0;
  auto r = uint64_t(std::pow(double(n), 1.0 / k));
  while (ipow(r + 1, k) <= n) ++r;
  while (r && ipow(r, k) > n) --r;
  return r;
}

}  // namespace

uint64_t WorkloadSpec::searches() const { return m ? m : iroot(n, 2); }

uint32_t WorkloadSpec::capacity() const {
  if (cap) return cap;
  return std::max<uint32_t>(2, uint32_t(iroot(n, 4)));
}

std::vector<Op> gen_workload(const WorkloadSpec& spec) {
  if (!spec.n) fail(Errc::config, "workload needs at least one insert");
  if (spec.mean_range < 1) fail(Errc::config, "mean range must be at least 1");
  uint64_t space = spec.label_space ? spec.label_space : 4 * spec.n;
  uint64_t m = spec.searches();
  auto rng = seeded_rng(spec.seed);

  std::vector<uint64_t> labels(spec.n);
  for (auto& l : labels) l = rng->below(space);
  std::vector<uint64_t> sorted = labels;
  std::sort(sorted.begin(), sorted.end());

  // Each query: uniform left endpoint, geometric target count (mean = mean_range,
  // support >= 1), right endpoint realized against the sorted labels so the
  // target count is what the query actually returns (clipped at the top end).
  double p = 1.0 / spec.mean_range;
  uint64_t distinct = spec.placement == Placement::single_repeated ? 1 : m;
  std::vector<std::pair<uint64_t, uint64_t>> queries;
  queries.reserve(distinct);
  for (uint64_t q = 0; q < distinct; ++q) {
    uint64_t lo = rng->below(space);
    uint64_t t = 1;
    if (spec.mean_range > 1) {
      double u = rng->unit();
      t = 1 + uint64_t(std::log1p(-u) / std::log1p(-p));
    }
    auto it = std::lower_bound(sorted.begin(), sorted.end(), lo);
    size_t idx = size_t(it - sorted.begin()) + size_t(t) - 1;
    uint64_t hi = idx < sorted.size() ? sorted[idx] : space - 1;
    if (hi < lo) hi = lo;  // top-end clip can land below lo when lo > max label
    queries.emplace_back(lo, hi);
  }

  // search positions, counted in completed inserts
  std::vector<uint64_t> at(m);
  if (spec.placement == Placement::bunched_at_end)
    std::fill(at.begin(), at.end(), spec.n);
  else {
    for (auto& a : at) a = rng->below(spec.n + 1);
    std::sort(at.begin(), at.end());
  }

  std::vector<Op> ops;
  ops.reserve(spec.n + m);
  size_t next_q = 0;
  for (uint64_t i = 0; i <= spec.n; ++i) {
    while (next_q < m && at[next_q] == i) {
      auto [lo, hi] = queries[spec.placement == Placement::single_repeated ? 0 : next_q];
      ops.push_back({false, lo, hi, {}});
      ++next_q;
    }
    if (i == spec.n) break;
    Op op;
    op.a = labels[i];
    op.payload.resize(spec.payload_len);
    rng->fill(op.payload.data(), op.payload.size());
    ops.push_back(std::move(op));
  }
  return ops;
}

std::vector<std::vector<ResultRow>> plain_results(const std::vector<Op>& workload) {
  std::vector<std::vector<ResultRow>> out;
  std::multimap<uint64_t, const std::vector<uint8_t>*> live;
  for (const auto& op : workload) {
    if (op.insert) {
      live.emplace(op.a, &op.payload);
      continue;
    }
    std::vector<ResultRow> rows;
    for (auto it = live.lower_bound(op.a); it != live.end() && it->first <= op.b; ++it)
      rows.push_back({it->first, *it->second});
    std::sort(rows.begin(), rows.end());
    out.push_back(std::move(rows));
  }
  return out;
}

// ---- csv ingestion

namespace {

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(uint8_t(s[b]))) ++b;
  while (e > b && std::isspace(uint8_t(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

// quoted fields may hold commas; "" inside quotes is a literal quote
std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c != '"')
        cur += c;
      else if (i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else
        quoted = false;
    } else if (c == '"')
      quoted = true;
    else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else
      cur += c;
  }
  out.push_back(std::move(cur));
  return out;
}

// money -> integer cents; tolerates $, thousands separators, <= 2 decimals
std::optional<uint64_t> parse_cents(const std::string& raw) {
  std::string s = trim(raw);
  if (!s.empty() && s[0] == '$') s.erase(0, 1);
  std::string whole, frac;
  bool dot = false;
  for (char c : s) {
    if (c == ',') {
      if (dot) return std::nullopt;
      continue;
    }
    if (c == '.') {
      if (dot) return std::nullopt;
      dot = true;
      continue;
    }
    if (!std::isdigit(uint8_t(c))) return std::nullopt;
    (dot ? frac : whole) += c;
  }
  if (whole.empty() && frac.empty()) return std::nullopt;
  if (frac.size() > 2 || whole.size() > 17) return std::nullopt;
  uint64_t v = 0;
  for (char c : whole + frac + std::string(2 - frac.size(), '0')) v = v * 10 + uint64_t(c - '0');
  return v;
}

bool all_digits(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(uint8_t(c)); });
}

size_t resolve_column(const std::string& sel, const std::vector<std::string>* header,
                      size_t width) {
  if (all_digits(sel)) {
    size_t i = std::stoul(sel);
    if (i >= width) fail(Errc::config, "column index " + sel + " out of range");
    return i;
  }
  if (!header) fail(Errc::config, "no header row; pick columns by numeric index");
  for (size_t i = 0; i < header->size(); ++i)
    if (trim((*header)[i]) == sel) return i;
  fail(Errc::config, "no column named '" + sel + "'");
}

}  // namespace

IngestResult ingest_csv(const std::string& path, const std::string& label_column,
                        const std::string& payload_column) {
  std::ifstream f(path);
  if (!f) fail(Errc::io, "cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) fail(Errc::io, "no rows in " + path);

  auto first = split_csv(lines[0]);
  // Header detection: a name selector requires one; with index selectors the
  // first row is a header exactly when its label cell does not parse as money.
  bool has_header;
  if (all_digits(label_column)) {
    size_t i = std::stoul(label_column);
    has_header = i < first.size() && !parse_cents(first[i]);
  } else
    has_header = true;
  const auto* hdr = has_header ? &first : nullptr;
  size_t li = resolve_column(label_column, hdr, first.size());
  size_t pi = resolve_column(payload_column, hdr, first.size());

  IngestResult r;
  for (size_t row = has_header ? 1 : 0; row < lines.size(); ++row) {
    ++r.rows;
    auto cells = split_csv(lines[row]);
    if (li >= cells.size() || pi >= cells.size()) {
      ++r.skipped;
      continue;
    }
    auto cents = parse_cents(cells[li]);
    if (!cents) {
      ++r.skipped;
      continue;
    }
    Op op;
    op.a = *cents;
    op.payload.assign(cells[pi].begin(), cells[pi].end());
    r.ops.push_back(std::move(op));
  }
  if (!r.rows) fail(Errc::io, "no data rows in " + path);
  if (r.skipped * 10 > r.rows)
    fail(Errc::io, std::to_string(r.skipped) + " of " + std::to_string(r.rows) +
                       " rows malformed in " + path);
  return r;
}

// ---- workload files

namespace {

std::string to_hex(const std::vector<uint8_t>& v) {
  static const char* d = "0123456789abcdef";
  std::string s;
  s.reserve(v.size() * 2);
  for (uint8_t b : v) {
    s += d[b >> 4];
    s += d[b & 15];
  }
  return s;
}

std::vector<uint8_t> from_hex(const std::string& s) {
  if (s.size() % 2) fail(Errc::encoding, "odd hex length");
  auto nib = [](char c) -> uint8_t {
    if (c >= '0' && c <= '9') return uint8_t(c - '0');
    if (c >= 'a' && c <= 'f') return uint8_t(c - 'a' + 10);
    if (c >= 'A' && c <= 'F') return uint8_t(c - 'A' + 10);
    fail(Errc::encoding, "bad hex digit");
  };
  std::vector<uint8_t> v(s.size() / 2);
  for (size_t i = 0; i < v.size(); ++i) v[i] = uint8_t(nib(s[2 * i]) << 4 | nib(s[2 * i + 1]));
  return v;
}

}  // namespace

void save_workload(const std::vector<Op>& ops, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) fail(Errc::io, "cannot write " + path);
  for (const auto& op : ops) {
    json j;
    if (op.insert) {
      j["op"] = "insert";
      j["label"] = op.a;
      j["payload"] = to_hex(op.payload);
    } else {
      j["op"] = "search";
      j["lo"] = op.a;
      j["hi"] = op.b;
    }
    f << j.dump() << '\n';
  }
  f.flush();
  if (!f) fail(Errc::io, "short write: " + path);
}

std::vector<Op> load_workload(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(Errc::io, "cannot open " + path);
  std::vector<Op> ops;
  std::string line;
  size_t ln = 0;
  while (std::getline(f, line)) {
    ++ln;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
      std::string kind = j.at("op").get<std::string>();
      Op op;
      if (kind == "insert") {
        op.a = j.at("label").get<uint64_t>();
        op.payload = from_hex(j.at("payload").get<std::string>());
      } else if (kind == "search") {
        op.insert = false;
        op.a = j.at("lo").get<uint64_t>();
        op.b = j.at("hi").get<uint64_t>();
      } else
        fail(Errc::encoding, "unknown op kind '" + kind + "'");
      ops.push_back(std::move(op));
    } catch (const json::exception& e) {
      fail(Errc::encoding, path + ":" + std::to_string(ln) + ": " + e.what());
    }
  }
  return ops;
}

// ---- experiment runner

Report run_experiment(Scheme scheme, const std::vector<Op>& workload, uint32_t cap,
                      const RunOpts& opts) {
  if (opts.transport.socket && opts.transport.latency.count())
    fail(Errc::config, "simulated latency works on the in-process transport only");
  if (scheme == Scheme::pope && cap < 2) fail(Errc::config, "capacity must be at least 2");

  Report rep;
  rep.scheme = scheme == Scheme::pope ? "pope" : "mope";
  rep.transport = opts.transport.socket ? "socket" : "inproc";
  rep.cap = cap;
  rep.ops = workload.size();
  for (const auto& op : workload) ++(op.insert ? rep.n : rep.m);
  rep.latency_ms = std::chrono::duration<double, std::milli>(opts.transport.latency).count();
  rep.verified = opts.verify;

  std::optional<LeakageTap> tap;
  if (opts.leakage || !opts.checkpoints.empty()) tap.emplace();

  std::unique_ptr<Transport> ct, st;
  std::optional<Listener> listener;
  if (opts.transport.socket)
    listener.emplace();
  else {
    auto [a, b] = InprocPipe::create(opts.transport.latency);
    ct = std::move(a);
    st = std::move(b);
  }

  std::optional<PopeServer> pope_srv;
  std::optional<MopeServer> mope_srv;
  OrderTap* tp = tap ? &*tap : nullptr;
  if (scheme == Scheme::pope)
    pope_srv.emplace(cap, seeded_rng(derive_seed(opts.seed, 0)), tp, opts.chunk);
  else
    mope_srv.emplace(tp);

  std::exception_ptr srv_err;
  std::thread th([&] {
    try {
      auto t = listener ? listener->accept_one() : std::move(st);
      if (pope_srv)
        pope_srv->serve(*t);
      else
        mope_srv->serve(*t);
    } catch (...) {
      srv_err = std::current_exception();
    }
  });
  struct Joiner {
    std::thread& t;
    ~Joiner() {
      if (t.joinable()) t.join();
    }
  } joiner{th};

  std::vector<uint64_t> marks = opts.checkpoints;
  std::sort(marks.begin(), marks.end());
  size_t next_mark = 0;
  // reading the tap is safe only while the server is idle: right after a
  // completed search (frames are served in order) or once the session is down
  uint64_t L = cap ? cap : kMopeFanout;
  auto take_checkpoint = [&](uint64_t done) {
    LeakageCheckpoint cp;
    cp.at_op = done;
    cp.pivots = tap->state.pivot_count();
    cp.incomparable = tap->state.incomparable_pairs();
    cp.floor_pairs =
        incomparability_floor(tap->state.block_count(), std::max<uint64_t>(rep.m, 1), L, cp.pivots)
            .floor_pairs;
    rep.checkpoints.push_back(cp);
  };

  std::optional<ClientSession> pc;
  std::optional<MopeClient> mc;
  std::multimap<uint64_t, std::vector<uint8_t>> truth;
  uint64_t done = 0;
  auto t0 = std::chrono::steady_clock::now();
  try {
    if (listener) ct = connect_loopback(listener->port());
    auto key = keygen(derive_seed(opts.seed, 1));
    auto enc = seeded_rng(derive_seed(opts.seed, 2));
    if (scheme == Scheme::pope)
      pc.emplace(key, cap, std::move(ct), std::move(enc));
    else
      mc.emplace(key, std::move(ct), std::move(enc));

    for (const auto& op : workload) {
      if (op.insert) {
        pc ? pc->insert(op.a, op.payload) : mc->insert(op.a, op.payload);
        if (opts.verify) truth.emplace(op.a, op.payload);
        ++done;
        continue;
      }
      auto rows = pc ? pc->search(op.a, op.b) : mc->search(op.a, op.b);
      rep.result_rows += rows.size();
      if (opts.verify) {
        std::vector<ResultRow> want;
        for (auto it = truth.lower_bound(op.a); it != truth.end() && it->first <= op.b; ++it)
          want.push_back({it->first, it->second});
        std::sort(want.begin(), want.end());
        if (want != rows) ++rep.mismatches;
      }
      ++done;
      if (tap)
        while (next_mark < marks.size() && marks[next_mark] <= done) {
          take_checkpoint(done);
          ++next_mark;
        }
    }
    pc ? pc->close() : mc->close();
  } catch (const std::exception& e) {
    rep.error = e.what();
    try {
      if (pc)
        pc->close();
      else if (mc)
        mc->close();
    } catch (...) {
    }
    pc.reset();
    mc.reset();        // tears the transport down even if close() failed
    listener.reset();  // unblocks a pending accept
  }
  if (th.joinable()) th.join();
  auto t1 = std::chrono::steady_clock::now();
  if (srv_err && rep.error.empty()) {
    try {
      std::rethrow_exception(srv_err);
    } catch (const std::exception& e) {
      rep.error = e.what();
    }
  }

  rep.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  rep.ops_per_sec = rep.wall_ms > 0 ? done * 1000.0 / rep.wall_ms : 0;

  if (tap) {
    while (next_mark < marks.size()) {  // marks never reached mid-run: measure the end state
      take_checkpoint(done);
      ++next_mark;
    }
    rep.pivots = tap->state.pivot_count();
    rep.incomparable = tap->state.incomparable_pairs();
    auto bound =
        incomparability_floor(tap->state.block_count(), std::max<uint64_t>(rep.m, 1), L, rep.pivots);
    rep.final_bound = {done, rep.pivots, rep.incomparable, bound.floor_pairs};
  }

  if (pc || mc) {
    const Metrics& met = pc ? pc->metrics() : mc->metrics();
    rep.totals = met.total;
    rep.peak_client_held = pc ? pc->peak_held() : mc->peak_held();
    rep.amortized_cts_per_op = done ? double(met.total.cts) / double(done) : 0;
    uint64_t sr = 0, sn = 0;
    for (const auto& o : met.per_op)
      if (o.op == MsgKind::search || o.op == MsgKind::mope_search) {
        sr += o.c.rounds;
        ++sn;
      }
    rep.mean_search_rounds = sn ? double(sr) / double(sn) : 0;
  }
  return rep;
}

// ---- report emission

namespace {

json cp_json(const LeakageCheckpoint& c) {
  return {{"at_op", c.at_op},
          {"pivots", c.pivots},
          {"incomparable", c.incomparable},
          {"floor_pairs", c.floor_pairs}};
}

LeakageCheckpoint cp_parse(const json& j) {
  LeakageCheckpoint c;
  c.at_op = j.at("at_op").get<uint64_t>();
  c.pivots = j.at("pivots").get<uint64_t>();
  c.incomparable = j.at("incomparable").get<uint64_t>();
  c.floor_pairs = j.at("floor_pairs").get<uint64_t>();
  return c;
}

json report_json(const Report& r) {
  json j;
  j["scheme"] = r.scheme;
  j["transport"] = r.transport;
  j["n"] = r.n;
  j["m"] = r.m;
  j["cap"] = r.cap;
  j["ops"] = r.ops;
  j["result_rows"] = r.result_rows;
  j["rounds"] = r.totals.rounds;
  j["one_way"] = r.totals.one_way;
  j["cts"] = r.totals.cts;
  j["insert_cts"] = r.totals.insert_cts;
  j["endpoint_cts"] = r.totals.endpoint_cts;
  j["pivot_cts"] = r.totals.pivot_cts;
  j["stream_cts"] = r.totals.stream_cts;
  j["sort_cts"] = r.totals.sort_cts;
  j["node_cts"] = r.totals.node_cts;
  j["comparison_requests"] = r.totals.comparison_requests;
  j["mean_search_rounds"] = r.mean_search_rounds;
  j["amortized_cts_per_op"] = r.amortized_cts_per_op;
  j["peak_client_held"] = r.peak_client_held;
  j["pivots"] = r.pivots;
  j["incomparable"] = r.incomparable;
  j["final_bound"] = cp_json(r.final_bound);
  j["checkpoints"] = json::array();
  for (const auto& c : r.checkpoints) j["checkpoints"].push_back(cp_json(c));
  j["mismatches"] = r.mismatches;
  j["verified"] = r.verified;
  j["latency_ms"] = r.latency_ms;
  j["wall_ms"] = r.wall_ms;
  j["ops_per_sec"] = r.ops_per_sec;
  j["error"] = r.error;
  return j;
}

Report report_parse(const json& j) {
  Report r;
  r.scheme = j.at("scheme").get<std::string>();
  r.transport = j.at("transport").get<std::string>();
  r.n = j.at("n").get<uint64_t>();
  r.m = j.at("m").get<uint64_t>();
  r.cap = j.at("cap").get<uint32_t>();
  r.ops = j.at("ops").get<uint64_t>();
  r.result_rows = j.at("result_rows").get<uint64_t>();
  r.totals.rounds = j.at("rounds").get<uint64_t>();
  r.totals.one_way = j.at("one_way").get<uint64_t>();
  r.totals.cts = j.at("cts").get<uint64_t>();
  r.totals.insert_cts = j.at("insert_cts").get<uint64_t>();
  r.totals.endpoint_cts = j.at("endpoint_cts").get<uint64_t>();
  r.totals.pivot_cts = j.at("pivot_cts").get<uint64_t>();
  r.totals.stream_cts = j.at("stream_cts").get<uint64_t>();
  r.totals.sort_cts = j.at("sort_cts").get<uint64_t>();
  r.totals.node_cts = j.at("node_cts").get<uint64_t>();
  r.totals.comparison_requests = j.at("comparison_requests").get<uint64_t>();
  r.mean_search_rounds = j.at("mean_search_rounds").get<double>();
  r.amortized_cts_per_op = j.at("amortized_cts_per_op").get<double>();
  r.peak_client_held = j.at("peak_client_held").get<uint64_t>();
  r.pivots = j.at("pivots").get<uint64_t>();
  r.incomparable = j.at("incomparable").get<uint64_t>();
  r.final_bound = cp_parse(j.at("final_bound"));
  for (const auto& c : j.at("checkpoints")) r.checkpoints.push_back(cp_parse(c));
  r.mismatches = j.at("mismatches").get<uint64_t>();
  r.verified = j.at("verified").get<bool>();
  r.latency_ms = j.at("latency_ms").get<double>();
  r.wall_ms = j.at("wall_ms").get<double>();
  r.ops_per_sec = j.at("ops_per_sec").get<double>();
  r.error = j.at("error").get<std::string>();
  return r;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

constexpr const char* kCsvHeader =
    "scheme,transport,n,m,cap,ops,result_rows,rounds,one_way,cts,insert_cts,endpoint_cts,"
    "pivot_cts,stream_cts,sort_cts,node_cts,comparison_requests,mean_search_rounds,"
    "amortized_cts_per_op,peak_client_held,pivots,incomparable,floor_pairs,mismatches,"
    "verified,latency_ms,wall_ms,ops_per_sec,error";

// one row per report; the checkpoint list only travels in json form
std::string csv_row(const Report& r) {
  std::ostringstream os;
  os << r.scheme << ',' << r.transport << ',' << r.n << ',' << r.m << ',' << r.cap << ','
     << r.ops << ',' << r.result_rows << ',' << r.totals.rounds << ',' << r.totals.one_way
     << ',' << r.totals.cts << ',' << r.totals.insert_cts << ',' << r.totals.endpoint_cts
     << ',' << r.totals.pivot_cts << ',' << r.totals.stream_cts << ',' << r.totals.sort_cts
     << ',' << r.totals.node_cts << ',' << r.totals.comparison_requests << ','
     << fmt(r.mean_search_rounds) << ',' << fmt(r.amortized_cts_per_op) << ','
     << r.peak_client_held << ',' << r.pivots << ',' << r.incomparable << ','
     << r.final_bound.floor_pairs << ',' << r.mismatches << ',' << (r.verified ? 1 : 0) << ','
     << fmt(r.latency_ms) << ',' << fmt(r.wall_ms) << ',' << fmt(r.ops_per_sec) << ','
     << csv_quote(r.error);
  return os.str();
}

std::string pretty_block(const Report& r) {
  std::ostringstream os;
  os << r.scheme << " over " << r.transport << "  n=" << r.n << " m=" << r.m
     << " cap=" << r.cap << " ops=" << r.ops << "\n";
  os << "  traffic: rounds=" << r.totals.rounds << " one_way=" << r.totals.one_way
     << " cts=" << r.totals.cts << " comparison_requests=" << r.totals.comparison_requests
     << "\n";
  os << "  per-op: mean_search_rounds=" << fmt(r.mean_search_rounds)
     << " amortized_cts_per_op=" << fmt(r.amortized_cts_per_op)
     << " peak_client_held=" << r.peak_client_held << "\n";
  os << "  results: result_rows=" << r.result_rows << " mismatches=" << r.mismatches
     << (r.verified ? " (verified)" : "") << "\n";
  os << "  order knowledge: pivots=" << r.pivots << " incomparable=" << r.incomparable
     << " floor_pairs=" << r.final_bound.floor_pairs << "\n";
  for (const auto& c : r.checkpoints)
    os << "    at_op=" << c.at_op << " pivots=" << c.pivots
       << " incomparable=" << c.incomparable << " floor_pairs=" << c.floor_pairs << "\n";
  os << "  timing: latency_ms=" << fmt(r.latency_ms) << " wall_ms=" << fmt(r.wall_ms)
     << " ops_per_sec=" << fmt(r.ops_per_sec) << "\n";
  if (!r.error.empty()) os << "  ERROR: " << r.error << "\n";
  return os.str();
}

}  // namespace

std::string emit_report(const std::vector<Report>& reports, ReportFormat format) {
  std::string out;
  switch (format) {
    case ReportFormat::json_lines:
      for (const auto& r : reports) out += report_json(r).dump() + "\n";
      break;
    case ReportFormat::csv:
      out = std::string(kCsvHeader) + "\n";
      for (const auto& r : reports) out += csv_row(r) + "\n";
      break;
    case ReportFormat::pretty:
      for (const auto& r : reports) out += pretty_block(r);
      break;
  }
  return out;
}

std::vector<Report> parse_reports(const std::string& json_lines) {
  std::vector<Report> out;
  std::istringstream is(json_lines);
  std::string line;
  size_t ln = 0;
  while (std::getline(is, line)) {
    ++ln;
    if (trim(line).empty()) continue;
    try {
      out.push_back(report_parse(json::parse(line)));
    } catch (const json::exception& e) {
      fail(Errc::encoding, "report line " + std::to_string(ln) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace pope
