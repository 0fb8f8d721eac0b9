#ifndef XGC_H
#define XGC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum XgcStatus {
  XGC_STATUS_OK = 0,
  XGC_STATUS_NULL_ARGUMENT = 1,
  XGC_STATUS_INVALID_UTF8 = 2,
  XGC_STATUS_SCHEMA = 3,
  XGC_STATUS_INFEASIBLE = 4,
  XGC_STATUS_CODEGEN = 5,
  XGC_STATUS_DECODE = 6,
  XGC_STATUS_IO = 7,
  XGC_STATUS_BUFFER_TOO_SMALL = 8,
} XgcStatus;

typedef enum XgcStrategy {
  XGC_STRATEGY_NONE = 0,
  XGC_STRATEGY_GREEDY = 1,
  XGC_STRATEGY_OPTIMAL = 2,
} XgcStrategy;

/**
 * Opaque compiled model.
 */
typedef struct XgcCompilation XgcCompilation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Compiles a built-in corpus model such as `"residual"`. `hw` is a preset
 * name or the path of a JSON hardware description.
 *
 * # Safety
 * `name` and `hw` must be NUL-terminated strings; `out` must be writable.
 */
enum XgcStatus xgc_compile_builtin(const char *name,
                                   const char *hw,
                                   enum XgcStrategy strategy,
                                   struct XgcCompilation **out);

/**
 * Compiles a model manifest with its directory of parameter blobs.
 *
 * # Safety
 * All strings must be NUL-terminated; `out` must be writable.
 */
enum XgcStatus xgc_compile_files(const char *manifest,
                                 const char *params_dir,
                                 const char *hw,
                                 enum XgcStrategy strategy,
                                 struct XgcCompilation **out);

/**
 * Releases a compilation. Null is ignored.
 *
 * # Safety
 * `c` must come from a compile call and not be used afterwards.
 */
void xgc_compilation_free(struct XgcCompilation *c);

/**
 * Predicted cycles of the selected strategy and the number of groups.
 *
 * # Safety
 * `c` must be a live handle; out-pointers must be writable.
 */
enum XgcStatus xgc_strategy_summary(const struct XgcCompilation *c,
                                    uint64_t *cycles,
                                    size_t *groups,
                                    size_t *fused);

/**
 * Number of instructions in the compiled stream.
 *
 * # Safety
 * `c` must be a live handle; `count` must be writable.
 */
enum XgcStatus xgc_instruction_count(const struct XgcCompilation *c, size_t *count);

/**
 * Writes the binary instruction stream. With a null or short buffer the
 * required size is stored in `len` and `XGC_STATUS_BUFFER_TOO_SMALL` is
 * returned.
 *
 * # Safety
 * `buf` must have room for `cap` bytes; `len` must be writable.
 */
enum XgcStatus xgc_emit_binary(const struct XgcCompilation *c,
                               uint8_t *buf,
                               size_t cap,
                               size_t *len);

/**
 * Writes the text assembly, without a trailing NUL, using the same size
 * protocol as [`xgc_emit_binary`].
 *
 * # Safety
 * As for [`xgc_emit_binary`].
 */
enum XgcStatus xgc_emit_text(const struct XgcCompilation *c, uint8_t *buf, size_t cap, size_t *len);

/**
 * Runs the stream executor against the graph interpreter. `passed` is set
 * to 1 on a byte-exact match; otherwise 0 with the first differing offset.
 *
 * # Safety
 * `c` must be a live handle; out-pointers must be writable.
 */
enum XgcStatus xgc_verify(const struct XgcCompilation *c, int32_t *passed, size_t *offset);

/**
 * Decodes an instruction artifact (binary or text) and simulates it.
 *
 * # Safety
 * `bytes` must point to `len` readable bytes; `hw` must be NUL-terminated;
 * `cycles` must be writable.
 */
enum XgcStatus xgc_simulate(const uint8_t *bytes, size_t len, const char *hw, uint64_t *cycles);

/**
 * Copies the last error message of this thread, NUL-terminated and
 * truncated to `cap` bytes. Returns the full message length.
 *
 * # Safety
 * `buf` must have room for `cap` bytes, or be null with `cap == 0`.
 */
size_t xgc_last_error(char *buf, size_t cap);

/**
 * Library version as a static NUL-terminated string.
 */
const char *xgc_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* XGC_H */
