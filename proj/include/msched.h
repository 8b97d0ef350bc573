/* msched: trace-driven cluster scheduling — C API.
 *
 * All functions return ms_status; MS_OK is 0. On failure,
 * ms_last_error() holds a thread-local human-readable message.
 * Objects returned through ms_*_create/load/generate are opaque and must
 * be released with the matching ms_*_free.
 */
#ifndef MSCHED_H
#define MSCHED_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ms_status {
    MS_OK = 0,
    MS_ERR_INVALID_ARGUMENT = 1,
    MS_ERR_IO = 2,
    MS_ERR_PARSE = 3,
    MS_ERR_CONFIG = 4,
    MS_ERR_STATE = 5,
    MS_ERR_RUNTIME = 6
} ms_status;

const char* ms_status_name(ms_status status);
const char* ms_last_error(void);
const char* ms_version(void);

/* Frees strings returned through char** out parameters. */
void ms_string_free(char* s);

/* ---- workload traces ------------------------------------------------- */

typedef struct ms_trace ms_trace;

/* CSV schema: task_id,submit_ms,cpu_req,mem_req,duration_ms,priority,deadline_ms */
ms_status ms_trace_load_csv(const char* path, ms_trace** out_trace);

/* stats_json: object with task_count, cpu_req_mean/std, mem_req_mean/std,
 * duration_ms_mean/std, arrival_rate_per_s and optional priority_histogram
 * (12 counts). Deterministic per (stats, horizon, seed). */
ms_status ms_trace_generate(const char* stats_json, int64_t horizon_ms, double deadline_factor,
                            uint64_t seed, ms_trace** out_trace);

/* Drops abnormal records in place; reports how many were removed. */
ms_status ms_trace_clean(ms_trace* trace, size_t* out_dropped);

/* Rescales cpu/mem requests, clamping into (0,1]. */
ms_status ms_trace_normalize(ms_trace* trace, double cpu_scale, double mem_scale,
                             size_t* out_clamped);

ms_status ms_trace_save_csv(const ms_trace* trace, const char* path);
size_t ms_trace_task_count(const ms_trace* trace);
ms_status ms_trace_stats_json(const ms_trace* trace, char** out_json);
void ms_trace_free(ms_trace* trace);

/* ---- simulator -------------------------------------------------------- */

typedef struct ms_sim ms_sim;

/* cluster_json: {"node_count":..,"max_queue_len":..,"w_success":..,...}.
 * The trace is segmented into window_ms windows; the chosen window is
 * replayed as one episode, one decision per arriving task. */
ms_status ms_sim_create(const char* cluster_json, const ms_trace* trace, int64_t window_ms,
                        uint32_t window_index, uint64_t seed, ms_sim** out_sim);

int32_t ms_sim_observation_size(const ms_sim* sim);
int32_t ms_sim_action_count(const ms_sim* sim);

/* Copies the pending task's observation; len must equal the observation size. */
ms_status ms_sim_observe(const ms_sim* sim, double* buffer, size_t len);

/* Dispatches the pending task to node `action`. *out_done becomes nonzero
 * once the episode is finished (no further steps allowed). */
ms_status ms_sim_step(ms_sim* sim, int32_t action, double* out_reward, int32_t* out_done);

/* Per-node cpu_used snapshot (len must equal the node count) and its mean. */
ms_status ms_sim_utilization(const ms_sim* sim, double* per_node, size_t len, double* out_mean);

/* One row per dispatched task: task_id,node,start_ms,finish_ms,state,delay_ms */
ms_status ms_sim_episode_csv(const ms_sim* sim, char** out_csv);

void ms_sim_free(ms_sim* sim);

/* ---- config-driven runs ------------------------------------------------ */

/* Synthesizes a trace from a stats JSON file and writes it as CSV. */
ms_status ms_run_gen_trace(const char* stats_path, int64_t horizon_ms, double deadline_factor,
                           uint64_t seed, const char* out_csv, size_t* out_task_count);

/* Trains one learning strategy (a3c | dqn | qlearning) as configured in the
 * run-config JSON; writes checkpoint and train_log.csv under out_dir. */
ms_status ms_run_train(const char* config_path, const char* strategy, const char* out_dir);

/* Full comparative evaluation; writes report.json, table.txt, per-strategy
 * training logs and smoothed loss curves under out_dir. */
ms_status ms_run_compare(const char* config_path, const char* out_dir);

/* Stability-under-load study; writes stability.csv under out_dir. */
ms_status ms_run_stability(const char* config_path, const char* out_dir);

/* Analytic-vs-finite-difference gradient check over `cases` random nets;
 * reports the maximum relative error seen. */
ms_status ms_run_gradcheck(uint64_t seed, int32_t cases, double* out_max_rel_error);

#ifdef __cplusplus
}
#endif

#endif /* MSCHED_H */
