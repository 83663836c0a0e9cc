#include "pope.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "pope/bench.hpp"
#include "pope/error.hpp"
#include "pope/mope.hpp"
#include "pope/server.hpp"

using namespace pope;

namespace {

thread_local std::string g_err;

template <class F>
int guard(F&& f) {
  try {
    f();
    return POPE_OK;
  } catch (const Error& e) {
    g_err = e.what();
    return int(e.code);
  } catch (const std::exception& e) {
    g_err = e.what();
    return POPE_ERR_STATE;
  }
}

void need(bool ok, const char* what) {
  if (!ok) fail(Errc::config, what);
}

char* dup_string(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) fail(Errc::state, "out of memory");
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

Scheme to_scheme(int s) {
  need(s == POPE_SCHEME_POPE || s == POPE_SCHEME_MOPE, "unknown scheme");
  return s == POPE_SCHEME_POPE ? Scheme::pope : Scheme::mope;
}

}  // namespace

extern "C" {

const char* pope_last_error(void) { return g_err.c_str(); }

void pope_free(char* p) { std::free(p); }

// ---- workloads

struct pope_workload {
  std::vector<Op> ops;
};

void pope_workload_spec_init(pope_workload_spec* spec) {
  if (!spec) return;
  *spec = {};
  spec->n = 1000;
  spec->mean_range = 100;
  spec->seed = 1;
  spec->payload_len = 16;
}

int pope_workload_generate(const pope_workload_spec* spec, pope_workload** out) {
  return guard([&] {
    need(spec && out, "null argument");
    need(spec->placement >= POPE_PLACE_UNIFORM && spec->placement <= POPE_PLACE_REPEATED,
         "unknown placement");
    WorkloadSpec ws;
    ws.n = spec->n;
    ws.m = spec->m;
    ws.placement = Placement(spec->placement);
    ws.mean_range = spec->mean_range;
    ws.seed = spec->seed;
    ws.label_space = spec->label_space;
    ws.payload_len = spec->payload_len;
    *out = new pope_workload{gen_workload(ws)};
  });
}

int pope_workload_ingest_csv(const char* path, const char* label_column,
                             const char* payload_column, pope_workload** out,
                             uint64_t* rows, uint64_t* skipped) {
  return guard([&] {
    need(path && label_column && payload_column && out, "null argument");
    auto r = ingest_csv(path, label_column, payload_column);
    if (rows) *rows = r.rows;
    if (skipped) *skipped = r.skipped;
    *out = new pope_workload{std::move(r.ops)};
  });
}

int pope_workload_load(const char* path, pope_workload** out) {
  return guard([&] {
    need(path && out, "null argument");
    *out = new pope_workload{load_workload(path)};
  });
}

int pope_workload_save(const pope_workload* w, const char* path) {
  return guard([&] {
    need(w && path, "null argument");
    save_workload(w->ops, path);
  });
}

uint64_t pope_workload_size(const pope_workload* w) { return w ? w->ops.size() : 0; }

void pope_workload_free(pope_workload* w) { delete w; }

// ---- experiments

void pope_run_opts_init(pope_run_opts* opts) {
  if (!opts) return;
  *opts = {};
  opts->seed = 1;
  opts->leakage = 1;
}

int pope_run_experiment(int scheme, const pope_workload* w, uint32_t cap,
                        const pope_run_opts* opts, char** report_json) {
  return guard([&] {
    need(w && opts && report_json, "null argument");
    need(opts->latency_ms >= 0, "negative latency");
    RunOpts ro;
    ro.transport.socket = opts->socket != 0;
    ro.transport.latency =
        std::chrono::microseconds(llround(opts->latency_ms * 1000.0));
    ro.seed = opts->seed;
    ro.leakage = opts->leakage != 0;
    ro.verify = opts->verify != 0;
    if (opts->n_checkpoints) {
      need(opts->checkpoints, "null checkpoint list");
      ro.checkpoints.assign(opts->checkpoints, opts->checkpoints + opts->n_checkpoints);
    }
    Report rep = run_experiment(to_scheme(scheme), w->ops, cap, ro);
    *report_json = dup_string(emit_report({rep}, ReportFormat::json_lines));
    if (!rep.error.empty()) fail(Errc::session, rep.error);
  });
}

int pope_report_render(const char* report_json_lines, int format, char** out) {
  return guard([&] {
    need(report_json_lines && out, "null argument");
    need(format >= POPE_FORMAT_JSON_LINES && format <= POPE_FORMAT_PRETTY, "unknown format");
    auto reports = parse_reports(report_json_lines);
    *out = dup_string(emit_report(reports, ReportFormat(format)));
  });
}

uint32_t pope_default_capacity(uint64_t n) { return WorkloadSpec{.n = n}.capacity(); }

// ---- embedded store

struct pope_rows {
  std::vector<ResultRow> rows;
};

struct pope_store {
  std::optional<PopeServer> ps;
  std::optional<MopeServer> ms;
  std::thread th;
  std::exception_ptr srv_err;
  std::optional<ClientSession> pc;
  std::optional<MopeClient> mc;

  ~pope_store() {
    pc.reset();  // hangs up; the server thread sees the closed pipe
    mc.reset();
    if (th.joinable()) th.join();
  }
};

int pope_store_open(int scheme, uint32_t cap, uint64_t seed, pope_store** out) {
  return guard([&] {
    need(out, "null argument");
    Scheme sc = to_scheme(scheme);
    if (sc == Scheme::pope && cap < 2) fail(Errc::config, "capacity must be at least 2");
    auto s = std::make_unique<pope_store>();
    auto [ct, st] = InprocPipe::create();
    if (sc == Scheme::pope)
      s->ps.emplace(cap, seeded_rng(derive_seed(seed, 0)), nullptr, kDefaultChunk);
    else
      s->ms.emplace();
    auto* sp = s.get();
    s->th = std::thread([sp, t = std::move(st)]() mutable {
      try {
        if (sp->ps)
          sp->ps->serve(*t);
        else
          sp->ms->serve(*t);
      } catch (...) {
        sp->srv_err = std::current_exception();
      }
    });
    auto key = keygen(derive_seed(seed, 1));
    auto enc = seeded_rng(derive_seed(seed, 2));
    if (sc == Scheme::pope)
      s->pc.emplace(key, cap, std::move(ct), std::move(enc));
    else
      s->mc.emplace(key, std::move(ct), std::move(enc));
    *out = s.release();
  });
}

int pope_store_insert(pope_store* s, uint64_t label, const uint8_t* payload, size_t len) {
  return guard([&] {
    need(s, "null store");
    need(payload || !len, "null payload with nonzero length");
    std::vector<uint8_t> p(payload, payload + len);
    s->pc ? s->pc->insert(label, p) : s->mc->insert(label, p);
  });
}

int pope_store_search(pope_store* s, uint64_t lo, uint64_t hi, pope_rows** out) {
  return guard([&] {
    need(s && out, "null argument");
    *out = new pope_rows{s->pc ? s->pc->search(lo, hi) : s->mc->search(lo, hi)};
  });
}

int pope_store_close(pope_store* s) {
  if (!s) return POPE_OK;
  int rc = guard([&] {
    s->pc ? s->pc->close() : s->mc->close();
    if (s->th.joinable()) s->th.join();
    if (s->srv_err) std::rethrow_exception(s->srv_err);
  });
  delete s;
  return rc;
}

uint64_t pope_rows_count(const pope_rows* r) { return r ? r->rows.size() : 0; }

uint64_t pope_rows_label(const pope_rows* r, uint64_t i) {
  return r && i < r->rows.size() ? r->rows[i].label : 0;
}

const uint8_t* pope_rows_payload(const pope_rows* r, uint64_t i, size_t* len) {
  if (!r || i >= r->rows.size()) {
    if (len) *len = 0;
    return nullptr;
  }
  if (len) *len = r->rows[i].payload.size();
  return r->rows[i].payload.data();
}

void pope_rows_free(pope_rows* r) { delete r; }

}  // extern "C"
