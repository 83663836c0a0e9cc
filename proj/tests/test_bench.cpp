#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "pope/bench.hpp"
#include "pope/error.hpp"

using namespace pope;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code;
  }
  return Errc::ok;
}

std::string tmp_file(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void write_file(const std::string& path, const std::string& body) {
  std::ofstream f(path, std::ios::trunc);
  f << body;
  REQUIRE(bool(f));
}

// everything but the wall-clock fields
void check_reports_equal(const Report& a, const Report& b) {
  CHECK(a.scheme == b.scheme);
  CHECK(a.transport == b.transport);
  CHECK(a.n == b.n);
  CHECK(a.m == b.m);
  CHECK(a.cap == b.cap);
  CHECK(a.ops == b.ops);
  CHECK(a.result_rows == b.result_rows);
  CHECK(a.totals == b.totals);
  CHECK(a.mean_search_rounds == doctest::Approx(b.mean_search_rounds));
  CHECK(a.amortized_cts_per_op == doctest::Approx(b.amortized_cts_per_op));
  CHECK(a.peak_client_held == b.peak_client_held);
  CHECK(a.pivots == b.pivots);
  CHECK(a.incomparable == b.incomparable);
  CHECK(a.final_bound == b.final_bound);
  CHECK(a.checkpoints == b.checkpoints);
  CHECK(a.mismatches == b.mismatches);
  CHECK(a.verified == b.verified);
  CHECK(a.error == b.error);
}

}  // namespace

TEST_CASE("workload generation: determinism, defaults, shape") {
  WorkloadSpec spec;
  spec.n = 400;
  spec.seed = 9;
  auto a = gen_workload(spec);
  auto b = gen_workload(spec);
  CHECK(a == b);
  spec.seed = 10;
  CHECK(gen_workload(spec) != a);

  // defaults
  CHECK(WorkloadSpec{.n = 10000}.searches() == 100);
  CHECK(WorkloadSpec{.n = 10000}.capacity() == 10);
  CHECK(WorkloadSpec{.n = 100000}.searches() == 316);
  CHECK(WorkloadSpec{.n = 100000}.capacity() == 17);
  CHECK(WorkloadSpec{.n = 50}.capacity() == 2);  // floor(50^(1/4)) = 2
  CHECK(WorkloadSpec{.n = 65536}.capacity() == 16);

  uint64_t inserts = 0, searches = 0;
  for (const auto& op : a) {
    if (op.insert) {
      ++inserts;
      CHECK(op.a < 4 * spec.n);
      CHECK(op.payload.size() == 16);
    } else {
      ++searches;
      CHECK(op.a <= op.b);
      CHECK(op.payload.empty());
    }
  }
  CHECK(inserts == 400);
  CHECK(searches == 20);  // floor(sqrt(400))

  // bad specs
  CHECK(code_of([] { gen_workload(WorkloadSpec{.n = 0}); }) == Errc::config);
  CHECK(code_of([] { gen_workload(WorkloadSpec{.n = 10, .mean_range = 0.5}); }) == Errc::config);
}

TEST_CASE("workload generation: placements") {
  WorkloadSpec spec;
  spec.n = 300;
  spec.m = 25;
  spec.seed = 4;

  spec.placement = Placement::bunched_at_end;
  auto bunched = gen_workload(spec);
  bool seen_search = false;
  for (const auto& op : bunched) {
    if (!op.insert) seen_search = true;
    if (op.insert) CHECK(!seen_search);  // no query before any insert
  }
  CHECK(bunched.size() == 325);
  CHECK(!bunched[299].insert == false);  // 300th op is still an insert
  CHECK(bunched[300].insert == false);

  spec.placement = Placement::single_repeated;
  auto repeated = gen_workload(spec);
  std::map<std::pair<uint64_t, uint64_t>, int> distinct;
  uint64_t searches = 0;
  for (const auto& op : repeated)
    if (!op.insert) {
      ++distinct[{op.a, op.b}];
      ++searches;
    }
  CHECK(searches == 25);
  CHECK(distinct.size() == 1);

  spec.placement = Placement::uniform_interleaved;
  auto uniform = gen_workload(spec);
  // searches land at many different interleave points
  uint64_t runs = 0;
  bool in_run = false;
  for (const auto& op : uniform) {
    if (!op.insert && !in_run) ++runs;
    in_run = !op.insert;
  }
  CHECK(runs > 5);
}

TEST_CASE("range realization hits the configured mean against the full dataset") {
  WorkloadSpec spec;
  spec.n = 100000;
  spec.m = 10000;
  spec.mean_range = 100;
  spec.placement = Placement::bunched_at_end;  // every query sees all inserts
  spec.seed = 77;
  spec.payload_len = 1;
  auto ops = gen_workload(spec);
  auto truth = plain_results(ops);
  REQUIRE(truth.size() == 10000);
  double total = 0;
  for (const auto& rows : truth) total += double(rows.size());
  double mean = total / double(truth.size());
  CHECK(mean == doctest::Approx(100).epsilon(0.05));
}

TEST_CASE("plaintext engine matches a hand-checked interleaving") {
  std::vector<Op> ops;
  auto ins = [&](uint64_t l, uint8_t tag) { ops.push_back({true, l, 0, {tag}}); };
  auto q = [&](uint64_t lo, uint64_t hi) { ops.push_back({false, lo, hi, {}}); };
  ins(50, 1);
  ins(10, 2);
  q(10, 50);  // sees both
  ins(50, 3); // duplicate label, different payload
  q(20, 60);  // sees the two 50s
  q(0, 5);    // empty
  auto truth = plain_results(ops);
  REQUIRE(truth.size() == 3);
  CHECK(truth[0] == std::vector<ResultRow>{{10, {2}}, {50, {1}}});
  CHECK(truth[1] == std::vector<ResultRow>{{50, {1}}, {50, {3}}});
  CHECK(truth[2].empty());
}

TEST_CASE("workload files round-trip") {
  WorkloadSpec spec;
  spec.n = 60;
  spec.m = 8;
  spec.seed = 3;
  auto ops = gen_workload(spec);
  auto path = tmp_file("bench_workload_roundtrip.jsonl");
  save_workload(ops, path);
  CHECK(load_workload(path) == ops);

  CHECK(code_of([] { load_workload("/nonexistent/nope.jsonl"); }) == Errc::io);
  auto bad = tmp_file("bench_workload_bad.jsonl");
  write_file(bad, "{\"op\":\"insert\",\"label\":5,\"payload\":\"00\"}\nnot json\n");
  CHECK(code_of([&] { load_workload(bad); }) == Errc::encoding);
  std::remove(path.c_str());
  std::remove(bad.c_str());
}

TEST_CASE("csv ingestion: order, header handling, malformed accounting") {
  auto path = tmp_file("bench_ingest_small.csv");
  write_file(path,
             "name,id,total_salary\n"
             "\"Smith, Jan\",17,\"101,250.40\"\n"
             "Lee Young,9,98000\n"
             "Acosta Rios,22,$77123.05\n");
  auto r = ingest_csv(path, "total_salary", "name");
  CHECK(r.rows == 3);
  CHECK(r.skipped == 0);
  REQUIRE(r.ops.size() == 3);
  CHECK(r.ops[0].a == 10125040);  // cents, quoted thousands separator
  CHECK(r.ops[1].a == 9800000);
  CHECK(r.ops[2].a == 7712305);
  std::string first(r.ops[0].payload.begin(), r.ops[0].payload.end());
  CHECK(first == "Smith, Jan");
  for (const auto& op : r.ops) CHECK(op.insert);

  // same file through numeric column indices; header detected and skipped
  auto by_index = ingest_csv(path, "2", "0");
  CHECK(by_index.rows == 3);
  REQUIRE(by_index.ops.size() == 3);
  CHECK(by_index.ops[0].a == 10125040);

  // headerless file via indices
  auto bare = tmp_file("bench_ingest_bare.csv");
  write_file(bare, "55.25,x\n7,y\n");
  auto rb = ingest_csv(bare, "0", "1");
  CHECK(rb.rows == 2);
  REQUIRE(rb.ops.size() == 2);
  CHECK(rb.ops[0].a == 5525);
  CHECK(rb.ops[1].a == 700);
  // name selection against a headerless file is a config error
  CHECK(code_of([&] { ingest_csv(bare, "salary", "1"); }) == Errc::config);

  // malformed rows: skipped and counted, order of the rest preserved
  auto moth = tmp_file("bench_ingest_malformed.csv");
  std::string body = "salary,who\n";
  for (int i = 0; i < 40; ++i) body += std::to_string(100 + i) + ".00,p" + std::to_string(i) + "\n";
  body += "n/a,broken\n";
  body += "950.10,tail\n";
  write_file(moth, body);
  auto rm = ingest_csv(moth, "salary", "who");
  CHECK(rm.rows == 42);
  CHECK(rm.skipped == 1);
  REQUIRE(rm.ops.size() == 41);
  CHECK(rm.ops[40].a == 95010);

  // over 10% malformed is an error, not a thin dataset
  auto rot = tmp_file("bench_ingest_rotten.csv");
  write_file(rot, "salary,who\n1.00,a\nbad,b\n2.00,c\nworse,d\n");
  CHECK(code_of([&] { ingest_csv(rot, "salary", "who"); }) == Errc::io);

  CHECK(code_of([&] { ingest_csv(path, "bogus_column", "name"); }) == Errc::config);
  CHECK(code_of([] { ingest_csv("/nonexistent/x.csv", "0", "1"); }) == Errc::io);
  for (auto* p : {&path, &bare, &moth, &rot}) std::remove(p->c_str());
}

TEST_CASE("experiment runs are deterministic and verified against plaintext") {
  WorkloadSpec spec;
  spec.n = 1200;
  spec.m = 30;
  spec.seed = 21;
  auto ops = gen_workload(spec);
  RunOpts opts;
  opts.seed = 5;
  opts.verify = true;
  auto a = run_experiment(Scheme::pope, ops, spec.capacity(), opts);
  auto b = run_experiment(Scheme::pope, ops, spec.capacity(), opts);
  CHECK(a.error.empty());
  check_reports_equal(a, b);
  CHECK(a.mismatches == 0);
  CHECK(a.n == 1200);
  CHECK(a.m == 30);
  CHECK(a.ops == 1230);
  CHECK(a.verified);
  // counter identity: every insert is one-way
  CHECK(a.totals.one_way == a.n);
  // result rows match the plaintext engine's total
  uint64_t rows = 0;
  for (const auto& rs : plain_results(ops)) rows += rs.size();
  CHECK(a.result_rows == rows);

  auto m = run_experiment(Scheme::mope, ops, 0, opts);
  CHECK(m.error.empty());
  CHECK(m.mismatches == 0);
  CHECK(m.scheme == "mope");
  // the interactive baseline surrenders the total order: nothing incomparable
  CHECK(m.incomparable == 0);
  CHECK(m.pivots == m.n);
  CHECK(m.final_bound.floor_pairs == 0);
  // pope leaves most pairs unordered and beats its counting floor
  CHECK(a.incomparable > 0);
  CHECK(a.incomparable >= a.final_bound.floor_pairs);
  CHECK(a.final_bound.floor_pairs > 0);
}

TEST_CASE("socket transport produces the same session, latency is inproc-only") {
  WorkloadSpec spec;
  spec.n = 250;
  spec.m = 12;
  spec.seed = 8;
  auto ops = gen_workload(spec);
  RunOpts inproc;
  inproc.seed = 2;
  RunOpts sock = inproc;
  sock.transport.socket = true;
  auto a = run_experiment(Scheme::pope, ops, 4, inproc);
  auto b = run_experiment(Scheme::pope, ops, 4, sock);
  CHECK(a.error.empty());
  CHECK(b.error.empty());
  CHECK(b.transport == "socket");
  b.transport = a.transport;
  check_reports_equal(a, b);

  RunOpts bad = sock;
  bad.transport.latency = std::chrono::milliseconds(3);
  CHECK(code_of([&] { run_experiment(Scheme::pope, ops, 4, bad); }) == Errc::config);
  CHECK(code_of([&] { run_experiment(Scheme::pope, ops, 1, inproc); }) == Errc::config);
}

TEST_CASE("leakage checkpoints are measured at idle points and accumulate") {
  WorkloadSpec spec;
  spec.n = 600;
  spec.m = 24;
  spec.seed = 13;
  auto ops = gen_workload(spec);
  RunOpts opts;
  opts.leakage = false;  // checkpoints force the tap on
  opts.checkpoints = {100, 300, 1u << 30};
  auto r = run_experiment(Scheme::pope, ops, 5, opts);
  CHECK(r.error.empty());
  REQUIRE(r.checkpoints.size() == 3);
  CHECK(r.checkpoints[0].at_op >= 100);
  CHECK(r.checkpoints[1].at_op >= 300);
  CHECK(r.checkpoints[1].at_op >= r.checkpoints[0].at_op);
  CHECK(r.checkpoints[2].at_op == r.ops);  // unreachable mark lands on the end state
  CHECK(r.checkpoints[0].pivots <= r.checkpoints[1].pivots);
  CHECK(r.checkpoints[1].pivots <= r.checkpoints[2].pivots);
  CHECK(r.checkpoints[2].pivots == r.pivots);
  CHECK(r.checkpoints[2].incomparable == r.incomparable);
  CHECK(r.final_bound.pivots == r.pivots);

  RunOpts off;
  off.leakage = false;
  auto quiet = run_experiment(Scheme::pope, ops, 5, off);
  CHECK(quiet.error.empty());
  CHECK(quiet.pivots == 0);
  CHECK(quiet.checkpoints.empty());
  CHECK(quiet.totals == r.totals);  // the tap never touches the wire
}

TEST_CASE("repeated query workloads never cost more rounds than uniform ones") {
  WorkloadSpec spec;
  spec.n = 2000;
  spec.m = 44;
  spec.seed = 31;
  spec.placement = Placement::uniform_interleaved;
  auto uniform = gen_workload(spec);
  spec.placement = Placement::single_repeated;
  auto repeated = gen_workload(spec);
  RunOpts opts;
  opts.leakage = false;
  auto u = run_experiment(Scheme::pope, uniform, 6, opts);
  auto r = run_experiment(Scheme::pope, repeated, 6, opts);
  CHECK(u.error.empty());
  CHECK(r.error.empty());
  CHECK(r.mean_search_rounds <= u.mean_search_rounds);
}

TEST_CASE("amortized ciphertext cost stays small at scale") {
  WorkloadSpec spec;
  spec.n = 10000;
  spec.seed = 1;
  auto ops = gen_workload(spec);  // m = 100, L = 10 by default
  RunOpts opts;
  opts.leakage = false;
  auto r = run_experiment(Scheme::pope, ops, spec.capacity(), opts);
  CHECK(r.error.empty());
  CHECK(r.amortized_cts_per_op <= 10);
  CHECK(r.amortized_cts_per_op > 0);
}

TEST_CASE("synthetic payroll file ingests and answers like the plaintext engine") {
  auto path = tmp_file("bench_payroll.csv");
  std::string body = "employee,total_salary\n";
  auto rng = seeded_rng(404);
  const uint64_t rows = 100000;
  for (uint64_t i = 0; i < rows; ++i) {
    uint64_t cents = 2500000 + rng->below(20000000);  // $25k..$225k
    if (i % 5000 == 4999) {
      body += "\"case " + std::to_string(i) + "\",n/a\n";  // sprinkled bad rows
      continue;
    }
    body += "\"emp, " + std::to_string(i) + "\"," + std::to_string(cents / 100) + "." +
            (cents % 100 < 10 ? "0" : "") + std::to_string(cents % 100) + "\n";
  }
  write_file(path, body);
  auto ing = ingest_csv(path, "total_salary", "employee");
  std::remove(path.c_str());
  CHECK(ing.rows == rows);
  CHECK(ing.skipped == rows / 5000);
  REQUIRE(ing.ops.size() == rows - rows / 5000);
  CHECK(ing.ops[0].a >= 2500000);

  // full workload: the ingested inserts plus realized range queries at the end
  auto ops = ing.ops;
  std::vector<uint64_t> sorted;
  sorted.reserve(ops.size());
  for (const auto& op : ops) sorted.push_back(op.a);
  std::sort(sorted.begin(), sorted.end());
  for (int q = 0; q < 300; ++q) {
    uint64_t lo = 2500000 + rng->below(20000000);
    size_t at = size_t(std::lower_bound(sorted.begin(), sorted.end(), lo) - sorted.begin());
    size_t end = std::min(at + 99, sorted.size() - 1);
    ops.push_back({false, lo, std::max(lo, sorted[end]), {}});
  }
  RunOpts opts;
  opts.leakage = false;
  opts.verify = true;
  auto rep = run_experiment(Scheme::pope, ops, 17, opts);
  CHECK(rep.error.empty());
  CHECK(rep.mismatches == 0);
  CHECK(rep.result_rows > 0);
  CHECK(rep.n == ing.ops.size());
  CHECK(rep.m == 300);
}

TEST_CASE("report emission: lossless json lines, fixed csv schema, full pretty coverage") {
  WorkloadSpec spec;
  spec.n = 150;
  spec.m = 10;
  spec.seed = 12;
  auto ops = gen_workload(spec);
  RunOpts opts;
  opts.verify = true;
  opts.checkpoints = {80};
  auto real = run_experiment(Scheme::pope, ops, 4, opts);
  CHECK(real.error.empty());

  Report stub;  // exercises quoting and the error path
  stub.scheme = "mope";
  stub.transport = "socket";
  stub.n = 3;
  stub.ops = 3;
  stub.error = "peer said \"no, thanks\"";
  std::vector<Report> reports = {real, stub};

  auto lines = emit_report(reports, ReportFormat::json_lines);
  auto back = parse_reports(lines);
  REQUIRE(back.size() == 2);
  check_reports_equal(back[0], real);
  CHECK(back[0].wall_ms == real.wall_ms);  // json carries timing losslessly too
  CHECK(back[0].ops_per_sec == real.ops_per_sec);
  CHECK(back[1].error == stub.error);
  CHECK(code_of([] { parse_reports("{\"scheme\":1}"); }) == Errc::encoding);

  auto csv = emit_report(reports, ReportFormat::csv);
  std::istringstream cs(csv);
  std::string header, row1, row2;
  REQUIRE(std::getline(cs, header));
  REQUIRE(std::getline(cs, row1));
  REQUIRE(std::getline(cs, row2));
  auto columns = [](const std::string& s) {
    size_t n = 1;
    bool quoted = false;
    for (char c : s) {
      if (c == '"') quoted = !quoted;
      if (c == ',' && !quoted) ++n;
    }
    return n;
  };
  CHECK(columns(header) == 29);
  CHECK(columns(row1) == 29);
  CHECK(columns(row2) == 29);
  CHECK(header.substr(0, 7) == "scheme,");
  CHECK(row2.find("\"peer said \"\"no, thanks\"\"\"") != std::string::npos);

  auto pretty = emit_report({real}, ReportFormat::pretty);
  for (const char* token :
       {"pope", "inproc", "n=", "m=", "cap=", "ops=", "rounds=", "one_way=", "cts=",
        "comparison_requests=", "mean_search_rounds=", "amortized_cts_per_op=",
        "peak_client_held=", "result_rows=", "mismatches=", "pivots=", "incomparable=",
        "floor_pairs=", "at_op=", "latency_ms=", "wall_ms=", "ops_per_sec="})
    CHECK(pretty.find(token) != std::string::npos);
  // spot-check that values, not just names, surface
  CHECK(pretty.find("n=" + std::to_string(real.n)) != std::string::npos);
  CHECK(pretty.find("pivots=" + std::to_string(real.pivots)) != std::string::npos);
  auto err_pretty = emit_report({stub}, ReportFormat::pretty);
  CHECK(err_pretty.find("ERROR: peer said") != std::string::npos);
}
