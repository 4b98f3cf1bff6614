#ifndef SPECIBT_H
#define SPECIBT_H

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SpecibtSemantics {
  SPECIBT_SEMANTICS_SEQ = 0,
  SPECIBT_SEMANTICS_SPEC = 1,
  SPECIBT_SEMANTICS_IDEAL = 2,
  SPECIBT_SEMANTICS_MC = 3,
} SpecibtSemantics;

/**
 * Result of every fallible call.
 */
typedef enum SpecibtStatus {
  SPECIBT_STATUS_OK = 0,
  SPECIBT_STATUS_NULL_ARGUMENT = 1,
  SPECIBT_STATUS_INVALID_UTF8 = 2,
  SPECIBT_STATUS_PARSE_ERROR = 3,
  SPECIBT_STATUS_DECODE_ERROR = 4,
  /**
   * A hypothesis of the requested operation does not hold, e.g. the program
   * is not well formed or uses a reserved register.
   */
  SPECIBT_STATUS_SIDE_CONDITION = 5,
  SPECIBT_STATUS_INVALID_ARGUMENT = 6,
  SPECIBT_STATUS_PANIC = 7,
} SpecibtStatus;

/**
 * Opaque parsed program.
 */
typedef struct SpecibtProgram SpecibtProgram;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses program text into `*out`.
 *
 * `text` must be a valid C string and `out` a valid pointer.
 */
enum SpecibtStatus specibt_program_parse(const char *text, struct SpecibtProgram **out);

/**
 * `p` must come from this library and not be used afterwards. Null is ignored.
 */
void specibt_program_free(struct SpecibtProgram *p);

/**
 * Canonical text of the program.
 *
 * `p` must be a live program and `out` a valid pointer.
 */
enum SpecibtStatus specibt_program_print(const struct SpecibtProgram *p, char **out);

/**
 * Well-formedness violations as a JSON array of strings; empty when well formed.
 * `hardened` selects the rules for hardened output.
 *
 * `p` must be a live program and `out` a valid pointer.
 */
enum SpecibtStatus specibt_program_check(const struct SpecibtProgram *p, bool hardened, char **out);

/**
 * Hardens `p` into a new program. `variant`, `msf_reg` and `callee_reg` may be
 * null for the full pass and the default register names.
 *
 * `p` must be a live program, the strings valid or null, `out` a valid pointer.
 */
enum SpecibtStatus specibt_harden(const struct SpecibtProgram *p,
                                  const char *variant,
                                  const char *msf_reg,
                                  const char *callee_reg,
                                  struct SpecibtProgram **out);

/**
 * Flat MiniMC listing of `p` after `data_len` data cells, and its layout
 * sidecar JSON. `layout_out` may be null.
 *
 * `p` must be a live program; `listing_out` valid, `layout_out` valid or null.
 */
enum SpecibtStatus specibt_linearize(const struct SpecibtProgram *p,
                                     size_t data_len,
                                     char **listing_out,
                                     char **layout_out);

/**
 * Runs `p` from the JSON state under `sem` and writes
 * `{"outcome":..,"steps":..,"trace":[..]}`. `directives_json` may be null for
 * none. The initial flags and reserved registers get the defaults used by the
 * command-line tool.
 *
 * `p` must be a live program, the strings valid (or null where allowed) and
 * `out` a valid pointer.
 */
enum SpecibtStatus specibt_run(const struct SpecibtProgram *p,
                               enum SpecibtSemantics sem,
                               const char *state_json,
                               const char *directives_json,
                               size_t fuel,
                               char **out);

/**
 * Sets `*related` to whether one JSON trace is a prefix of the other.
 *
 * The strings must be valid and `related` a valid pointer.
 */
enum SpecibtStatus specibt_trace_cmp(const char *a, const char *b, bool *related);

/**
 * `s` must come from this library and not be used afterwards. Null is ignored.
 */
void specibt_string_free(char *s);

/**
 * Message for the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *specibt_last_error(void);

/**
 * Library version with the semantics hash. Static storage.
 */
const char *specibt_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPECIBT_H */
