#ifndef GFL_H
#define GFL_H

/* Generated by cbindgen from the gfl-ffi crate; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible call.
 */
typedef enum {
  GFL_STATUS_OK = 0,
  /**
   * Null pointer, malformed UTF-8, or an out-of-range argument.
   */
  GFL_STATUS_INVALID_ARGUMENT = 1,
  /**
   * The graph failed structural validation.
   */
  GFL_STATUS_INVALID_GRAPH = 2,
  /**
   * A numeric routine failed: no convergence, rank collapse, overflow.
   */
  GFL_STATUS_NUMERIC = 3,
  /**
   * Task parameters violate a documented constraint.
   */
  GFL_STATUS_CONSTRAINT = 4,
  /**
   * The requested combination is not supported.
   */
  GFL_STATUS_UNSUPPORTED = 5,
  /**
   * File or serialization failure.
   */
  GFL_STATUS_IO = 6,
  /**
   * Internal panic; state is still consistent, the call had no effect.
   */
  GFL_STATUS_INTERNAL = 7,
} GflStatus;

typedef struct GflGraph GflGraph;

typedef struct GflReport GflReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *gfl_last_error_message(void);

/**
 * Frees a string returned by this library. Null is a no-op.
 */
void gfl_string_free(char *text);

/**
 * Builds a complete weighted graph on `n` vertices.
 */
GflStatus gfl_graph_generate_fc(uint64_t n, uint64_t seed, GflGraph **out);

/**
 * Builds a circular skip-link graph on `n` vertices with the given skip.
 */
GflStatus gfl_graph_generate_csl(uint64_t n, uint64_t skip, uint64_t seed, GflGraph **out);

/**
 * Parses a graph from its JSON form.
 */
GflStatus gfl_graph_from_json(const char *text, GflGraph **out);

/**
 * Serializes a graph to JSON; free the result with gfl_string_free.
 */
GflStatus gfl_graph_to_json(const GflGraph *graph, char **out);

void gfl_graph_free(GflGraph *graph);

/**
 * Vertex and edge counts.
 */
GflStatus gfl_graph_counts(const GflGraph *graph, uint64_t *n, uint64_t *d);

/**
 * Smallest nonzero and largest Laplacian eigenvalues.
 */
GflStatus gfl_graph_spectrum(const GflGraph *graph, double *lambda_min, double *lambda_max);

/**
 * Runs one task and returns a report handle.
 *
 * `task` is a task name such as "electric_gd". Unset numeric parameters
 * are passed as NaN. `identity_demands` nonzero uses the n-column
 * centering demands (k is then ignored); otherwise k demand columns are
 * sampled from `demand_seed`, projected when `project_demands` is
 * nonzero. `engine_efficient` nonzero selects the constrained recursion.
 */
GflStatus gfl_run_task(const GflGraph *graph,
                       const char *task,
                       uint64_t layers,
                       uint64_t k,
                       double delta,
                       double temp,
                       double mu,
                       int32_t identity_demands_flag,
                       int32_t project_demands,
                       uint64_t demand_seed,
                       int32_t engine_efficient,
                       GflReport **out);

/**
 * Rows in the report, one per layer including the input state.
 */
uint64_t gfl_report_layer_count(const GflReport *report);

/**
 * Reads one row. A layer with no claimed bound yields bound = NaN and
 * satisfied = -1; otherwise satisfied is 0 or 1.
 */
GflStatus gfl_report_row(const GflReport *report,
                         uint64_t layer,
                         double *error,
                         double *bound,
                         int32_t *satisfied);

/**
 * Oracle spectrum recorded in the report.
 */
GflStatus gfl_report_spectrum(const GflReport *report, double *lambda_min, double *lambda_max);

/**
 * 1 when every claimed bound is satisfied, 0 otherwise, -1 on null.
 */
int32_t gfl_report_all_satisfied(const GflReport *report);

/**
 * Full report as JSON; free the result with gfl_string_free.
 */
GflStatus gfl_report_to_json(const GflReport *report, char **out);

void gfl_report_free(GflReport *report);

/**
 * Library version as a static string; do not free.
 */
const char *gfl_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GFL_H */
