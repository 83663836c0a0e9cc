#ifndef POPE_H
#define POPE_H

/* C surface of the order-revealing range store. Handles are opaque; every
 * fallible call returns 0 on success or an error code below, with a
 * human-readable message available from pope_last_error() on the same
 * thread until the next failing call. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

enum {
  POPE_OK = 0,
  POPE_ERR_CONFIG = 2,    /* bad arguments, flags, or workload spec */
  POPE_ERR_SESSION = 3,   /* transport or peer failure mid-session */
  POPE_ERR_ENCODING = 10, /* malformed files or frame payloads */
  POPE_ERR_INTEGRITY = 11,
  POPE_ERR_PROTOCOL = 12,
  POPE_ERR_CAPACITY = 13,
  POPE_ERR_IO = 14,
  POPE_ERR_STATE = 15,
};

enum { POPE_PLACE_UNIFORM = 0, POPE_PLACE_BUNCHED = 1, POPE_PLACE_REPEATED = 2 };
enum { POPE_SCHEME_POPE = 0, POPE_SCHEME_MOPE = 1 };
enum { POPE_FORMAT_JSON_LINES = 0, POPE_FORMAT_CSV = 1, POPE_FORMAT_PRETTY = 2 };

const char* pope_last_error(void);

/* frees any string this library handed out */
void pope_free(char* p);

/* ---- workloads ---- */

typedef struct pope_workload pope_workload;

typedef struct pope_workload_spec {
  uint64_t n;           /* inserts; must be > 0 */
  uint64_t m;           /* searches; 0 = floor(sqrt(n)) */
  int placement;        /* POPE_PLACE_* */
  double mean_range;    /* target mean result count per search, >= 1 */
  uint64_t seed;
  uint64_t label_space; /* labels drawn below this; 0 = 4n */
  uint32_t payload_len;
} pope_workload_spec;

/* fills defaults: n=1000, mean_range=100, seed=1, payload_len=16 */
void pope_workload_spec_init(pope_workload_spec* spec);

int pope_workload_generate(const pope_workload_spec* spec, pope_workload** out);

/* monetary label column parsed to integer cents; columns by header name or
 * 0-based index; rows/skipped may be NULL */
int pope_workload_ingest_csv(const char* path, const char* label_column,
                             const char* payload_column, pope_workload** out,
                             uint64_t* rows, uint64_t* skipped);

int pope_workload_load(const char* path, pope_workload** out);
int pope_workload_save(const pope_workload* w, const char* path);
uint64_t pope_workload_size(const pope_workload* w); /* total ops */
void pope_workload_free(pope_workload* w);

/* ---- experiments ---- */

typedef struct pope_run_opts {
  int socket;        /* 0 = in-process pipe, 1 = loopback tcp */
  double latency_ms; /* simulated one-way delay; in-process transport only */
  uint64_t seed;
  int leakage;       /* attach the order-knowledge accountant */
  int verify;        /* check every search against plaintext truth */
  const uint64_t* checkpoints; /* op counts for leakage snapshots */
  size_t n_checkpoints;
} pope_run_opts;

/* defaults: inproc, seed=1, leakage on, verify off */
void pope_run_opts_init(pope_run_opts* opts);

/* `cap` is the client working-set bound (>= 2 for POPE_SCHEME_POPE; the
 * baseline scheme ignores it). The report lands in *report_json as one
 * json object per line; caller frees with pope_free. A mid-session failure
 * returns POPE_ERR_SESSION and still emits the partial report with its
 * "error" field set. */
int pope_run_experiment(int scheme, const pope_workload* w, uint32_t cap,
                        const pope_run_opts* opts, char** report_json);

/* reformat json-lines reports into POPE_FORMAT_*; caller frees *out */
int pope_report_render(const char* report_json_lines, int format, char** out);

/* default client working-set bound for n items: max(2, floor(n^(1/4))) */
uint32_t pope_default_capacity(uint64_t n);

/* ---- embedded store sessions ---- */

/* client + server pair over an in-process pipe, one handle per store */
typedef struct pope_store pope_store;
typedef struct pope_rows pope_rows;

int pope_store_open(int scheme, uint32_t cap, uint64_t seed, pope_store** out);
int pope_store_insert(pope_store* s, uint64_t label, const uint8_t* payload, size_t len);
/* inclusive range; rows arrive sorted by (label, payload) */
int pope_store_search(pope_store* s, uint64_t lo, uint64_t hi, pope_rows** out);
/* polite shutdown; frees the handle regardless of the return code */
int pope_store_close(pope_store* s);

uint64_t pope_rows_count(const pope_rows* r);
uint64_t pope_rows_label(const pope_rows* r, uint64_t i); /* 0 if out of range */
const uint8_t* pope_rows_payload(const pope_rows* r, uint64_t i, size_t* len);
void pope_rows_free(pope_rows* r);

#ifdef __cplusplus
}
#endif

#endif /* POPE_H */
