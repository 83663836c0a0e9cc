#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "pope/leakage.hpp"
#include "pope/protocol.hpp"
#include "pope/session.hpp"

namespace pope {

// Workload generation, CSV ingestion, experiment orchestration, and report
// emission. Everything is seed-deterministic except wall-clock fields.

enum class Placement { uniform_interleaved, bunched_at_end, single_repeated };
enum class Scheme { pope, mope };
enum class ReportFormat { json_lines, csv, pretty };

struct WorkloadSpec {
  uint64_t n = 1000;   // inserts
  uint64_t m = 0;      // searches; 0 = floor(sqrt(n))
  uint32_t cap = 0;    // client capacity L; 0 = floor(n^(1/4)), min 2
  Placement placement = Placement::uniform_interleaved;
  double mean_range = 100; // target mean result count per search
  uint64_t seed = 1;
  uint64_t label_space = 0; // labels drawn below this; 0 = 4n
  uint32_t payload_len = 16;

  uint64_t searches() const;
  uint32_t capacity() const;
};

struct Op {
  bool insert = true;
  uint64_t a = 0, b = 0; // insert: a = label; search: [a, b]
  std::vector<uint8_t> payload;
  bool operator==(const Op&) const = default;
};

std::vector<Op> gen_workload(const WorkloadSpec& spec);

struct IngestResult {
  std::vector<Op> ops;
  uint64_t rows = 0;    // data rows seen
  uint64_t skipped = 0; // malformed rows dropped
};

// Monetary labels parse to integer cents. `label_column` / `payload_column`
// name a header column or give a 0-based index. Over 10% malformed rows is
// an error rather than a silently thin dataset.
IngestResult ingest_csv(const std::string& path, const std::string& label_column,
                        const std::string& payload_column);

// workload files: one json object per line
void save_workload(const std::vector<Op>& ops, const std::string& path);
std::vector<Op> load_workload(const std::string& path);

struct TransportOpts {
  bool socket = false;                   // loopback TCP instead of in-process
  std::chrono::microseconds latency{0};  // in-process one-way x2 delay; inproc only
};

struct RunOpts {
  TransportOpts transport;
  uint64_t seed = 1;                 // drives server sampling and client encryption
  uint32_t chunk = kDefaultChunk;
  bool leakage = true;               // attach the order-fact accountant
  std::vector<uint64_t> checkpoints; // op counts; measured at the next idle point
  bool verify = false;               // compare every search against plaintext truth
};

struct LeakageCheckpoint {
  uint64_t at_op = 0; // ops completed when measured
  uint64_t pivots = 0;
  uint64_t incomparable = 0;
  uint64_t floor_pairs = 0; // counting floor at the measured pivot count
  bool operator==(const LeakageCheckpoint&) const = default;
};

struct Report {
  std::string scheme;    // "pope" | "mope"
  std::string transport; // "inproc" | "socket"
  uint64_t n = 0, m = 0;
  uint32_t cap = 0;
  uint64_t ops = 0, result_rows = 0;
  Counters totals;
  double mean_search_rounds = 0;
  double amortized_cts_per_op = 0; // result bodies excluded by the counter itself
  uint64_t peak_client_held = 0;
  uint64_t pivots = 0;       // leakage: final promoted count
  uint64_t incomparable = 0; // leakage: final incomparable pairs
  LeakageCheckpoint final_bound; // counting floor at the end state
  std::vector<LeakageCheckpoint> checkpoints;
  uint64_t mismatches = 0; // verify mode: searches disagreeing with plaintext truth
  bool verified = false;
  double latency_ms = 0;  // configured simulated delay
  double wall_ms = 0;     // timing: excluded from determinism comparisons
  double ops_per_sec = 0; // timing
  std::string error;      // nonempty = session failed, report is partial
};

Report run_experiment(Scheme scheme, const std::vector<Op>& workload, uint32_t cap,
                      const RunOpts& opts);

// json_lines is lossless (one object per line); csv has a fixed column schema
// with a header row; pretty is a human summary carrying every headline metric.
std::string emit_report(const std::vector<Report>& reports, ReportFormat format);
std::vector<Report> parse_reports(const std::string& json_lines);

// plaintext ground truth for one workload's searches, in op order
std::vector<std::vector<ResultRow>> plain_results(const std::vector<Op>& workload);

} // namespace pope
