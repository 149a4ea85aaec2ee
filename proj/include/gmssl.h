/* C API for the graph-matching SSL engine. All entry points are
 * command-level: they parse a JSON config string, run, and write outputs.
 *
 * Return codes: 0 ok, 2 config error, 3 numeric failure, 4 I/O error.
 * On a nonzero return, gmssl_last_error() describes the failure.
 */
#ifndef GMSSL_H
#define GMSSL_H

#ifdef __cplusplus
extern "C" {
#endif

typedef struct gmssl_ctx gmssl_ctx;

gmssl_ctx* gmssl_ctx_new(void);
void gmssl_ctx_free(gmssl_ctx* ctx);
const char* gmssl_last_error(const gmssl_ctx* ctx);

const char* gmssl_version(void);
const char* gmssl_config_schema_hash(void);

/* Free strings returned through char** out-parameters. */
void gmssl_string_free(char* s);

/* Echo the effective train config (defaults + overrides) as JSON. */
int gmssl_effective_config(gmssl_ctx* ctx, const char* config_json,
                           char** out_json);

/* Write a synthetic two-view batch directory (ys/pos_s/yt/pos_t + manifest). */
int gmssl_gen_data(gmssl_ctx* ctx, const char* config_json, const char* out_dir);

/* Full SSL training run; metrics.jsonl + checkpoint/ under out_dir.
 * dataset_dir may be NULL (fresh synthetic batch per step). */
int gmssl_train_ssl(gmssl_ctx* ctx, const char* config_json, const char* out_dir,
                    const char* dataset_dir);

/* Noise-free forward + match on a saved batch; result JSON via out_json.
 * checkpoint_dir may be NULL (seeded fresh initialization). dump_* write
 * graph CSVs / cv GMT0 + ce CSV under out_dir. */
int gmssl_eval_match(gmssl_ctx* ctx, const char* config_json, const char* batch_dir,
                     const char* checkpoint_dir, const char* out_dir,
                     int dump_graph, int dump_affinities, char** out_json);

/* Hyperparameter sweep; CSV written to out_csv. threads == 0 means machine
 * parallelism. */
int gmssl_sweep(gmssl_ctx* ctx, const char* grid_json, const char* out_csv,
                unsigned threads);

/* Random matching instances across N in {4..max_n}; CSV written to out_csv. */
int gmssl_solver_bench(gmssl_ctx* ctx, unsigned max_n, unsigned long long seed,
                       const char* out_csv);

/* Train the post-hoc uncertainty head; head files under out_dir. */
int gmssl_train_uq(gmssl_ctx* ctx, const char* config_json, const char* out_dir);

/* Evaluate a trained head over a shift grid; JSON report to out_json_path
 * plus a CSV twin; the report is also returned via out_json. */
int gmssl_eval_ood(gmssl_ctx* ctx, const char* head_dir, const char* grid_json,
                   unsigned long long seed, const char* out_json_path,
                   char** out_json);

#ifdef __cplusplus
}
#endif

#endif /* GMSSL_H */
