#ifndef ROUNDBUY_H
#define ROUNDBUY_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RbStatus {
  RB_STATUS_OK = 0,
  RB_STATUS_NULL_POINTER = 1,
  RB_STATUS_INVALID_ARGUMENT = 2,
  RB_STATUS_BUFFER_TOO_SMALL = 3,
  RB_STATUS_NOT_FOUND = 4,
  RB_STATUS_DATA_ERROR = 5,
  RB_STATUS_PANIC = 6,
} RbStatus;

/**
 * Opaque weapon catalog.
 */
typedef struct RbCatalog RbCatalog;

/**
 * Opaque trained policy.
 */
typedef struct RbPolicy RbPolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *rb_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rb_version(void);

/**
 * Creates a handle to the bundled 44-weapon catalog.
 *
 * # Safety
 * `out` must be a valid location for one pointer.
 */
enum RbStatus rb_catalog_default(struct RbCatalog **out);

/**
 * Parses a JSON catalog document.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid location for
 * one pointer.
 */
enum RbStatus rb_catalog_from_json(const char *json, struct RbCatalog **out);

/**
 * Number of weapons; the action vocabulary adds End and Start after them.
 *
 * # Safety
 * `catalog` must be a live handle and `out_len` a valid location.
 */
enum RbStatus rb_catalog_len(const struct RbCatalog *catalog, size_t *out_len);

/**
 * Price of weapon `id`.
 *
 * # Safety
 * `catalog` must be a live handle and `out_price` a valid location.
 */
enum RbStatus rb_catalog_price(const struct RbCatalog *catalog, size_t id, int64_t *out_price);

/**
 * Action id of End for this catalog.
 *
 * # Safety
 * `catalog` must be a live handle and `out_id` a valid location.
 */
enum RbStatus rb_catalog_end_action(const struct RbCatalog *catalog, size_t *out_id);

/**
 * Releases a catalog handle. NULL is ignored.
 *
 * # Safety
 * `catalog` must be NULL or a handle not yet freed.
 */
void rb_catalog_free(struct RbCatalog *catalog);

/**
 * Greedy purchase for `cash` and the held weapons `inventory`. Writes the
 * action ids, End included, to `out_actions`; `out_len` always receives
 * the required length.
 *
 * # Safety
 * `catalog` must be a live handle, `inventory` must hold `inventory_len`
 * ids, `out_actions` must have room for `capacity` ids and `out_len` must
 * be a valid location.
 */
enum RbStatus rb_greedy_purchase(const struct RbCatalog *catalog,
                                 int64_t cash,
                                 const size_t *inventory,
                                 size_t inventory_len,
                                 size_t *out_actions,
                                 size_t capacity,
                                 size_t *out_len);

/**
 * F1 between two purchase lists of weapon ids. `multiset` counts
 * duplicates; otherwise duplicates collapse.
 *
 * # Safety
 * `pred` and `truth` must hold `pred_len` and `truth_len` ids and `out`
 * must be a valid location.
 */
enum RbStatus rb_f1(const size_t *pred,
                    size_t pred_len,
                    const size_t *truth,
                    size_t truth_len,
                    bool multiset,
                    double *out);

/**
 * Loads a checkpoint written by `roundbuy train`, with its sidecar.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid location for
 * one pointer.
 */
enum RbStatus rb_policy_load(const char *path, struct RbPolicy **out);

/**
 * Greedy purchase sequence for one state given as a JSON document with
 * fields `own_weapons`, `team_weapons`, `opp_weapons`, `money`, `history`
 * and `budget`.
 *
 * # Safety
 * `policy` must be a live handle, `state_json` a NUL-terminated string,
 * `out_actions` must have room for `capacity` ids and `out_len` must be a
 * valid location.
 */
enum RbStatus rb_policy_generate(const struct RbPolicy *policy,
                                 const char *state_json,
                                 size_t *out_actions,
                                 size_t capacity,
                                 size_t *out_len);

/**
 * Releases a policy handle. NULL is ignored.
 *
 * # Safety
 * `policy` must be NULL or a handle not yet freed.
 */
void rb_policy_free(struct RbPolicy *policy);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROUNDBUY_H */
