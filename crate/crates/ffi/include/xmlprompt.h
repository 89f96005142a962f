#ifndef XMLPROMPT_H
#define XMLPROMPT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every call.
typedef enum XpStatus {
  XP_STATUS_OK = 0,
  // The call worked and the answer is "no": a document the grammar
  // rejects, a failing invariant, a run without an answer.
  XP_STATUS_REJECTED = 1,
  XP_STATUS_NULL_POINTER = 2,
  XP_STATUS_INVALID_UTF8 = 3,
  // A grammar, vocabulary, document, formula or spec failed to parse.
  XP_STATUS_PARSE_ERROR = 4,
  XP_STATUS_INVALID_ARGUMENT = 5,
  XP_STATUS_IO = 6,
  XP_STATUS_PANIC = 7,
} XpStatus;

// A compiled grammar.
typedef struct XpGrammar XpGrammar;

// A list of named invariants.
typedef struct XpInvariants XpInvariants;

// A prompt tree.
typedef struct XpTree XpTree;

// An ordered token vocabulary.
typedef struct XpVocabulary XpVocabulary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer
// stays valid until the next call into this library from the same thread.
const char *xp_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *xp_version(void);

// # Safety
// `s` must be NULL or a string returned by this library, not yet freed.
void xp_string_free(char *s);

// Compiles EBNF grammar source.
//
// # Safety
// `source` must be a NUL-terminated string; `out` must be writable.
enum XpStatus xp_grammar_compile(const char *source, struct XpGrammar **out_grammar);

// Same grammar with another start rule.
//
// # Safety
// `grammar` must be a live handle, `rule` a NUL-terminated string and `out` writable.
enum XpStatus xp_grammar_with_start(const struct XpGrammar *grammar,
                                    const char *rule,
                                    struct XpGrammar **out_grammar);

// # Safety
// `grammar` must be NULL or a live handle.
void xp_grammar_free(struct XpGrammar *grammar);

// `XP_STATUS_OK` if the grammar accepts `document`, `XP_STATUS_REJECTED`
// otherwise. `out_dead_offset`, when not NULL, receives the byte offset of
// the first character that leaves the viable prefixes, or -1.
//
// # Safety
// `grammar` must be a live handle and `document` a NUL-terminated string.
enum XpStatus xp_grammar_validate(const struct XpGrammar *grammar,
                                  const char *document,
                                  int64_t *out_dead_offset);

// Parses a vocabulary file: one token per line, `\n`, `\t`, `\\` escapes.
//
// # Safety
// `source` must be a NUL-terminated string; `out` must be writable.
enum XpStatus xp_vocabulary_parse(const char *source, struct XpVocabulary **out_vocab);

// # Safety
// `vocab` must be a live handle or NULL.
size_t xp_vocabulary_len(const struct XpVocabulary *vocab);

// # Safety
// `vocab` must be NULL or a live handle.
void xp_vocabulary_free(struct XpVocabulary *vocab);

// Writes the token mask after `prefix` into `out_allowed`, one byte per
// token (1 allowed, 0 masked). `len` must equal the vocabulary size.
// Returns `XP_STATUS_REJECTED` when the prefix is not viable.
//
// # Safety
// Handles must be live, `prefix` NUL-terminated and `out_allowed` writable
// for `len` bytes.
enum XpStatus xp_token_mask(const struct XpGrammar *grammar,
                            const struct XpVocabulary *vocab,
                            const char *prefix,
                            uint8_t *out_allowed,
                            size_t len);

// Parses an XML document into a tree.
//
// # Safety
// `xml` must be a NUL-terminated string; `out` must be writable.
enum XpStatus xp_tree_parse(const char *xml, struct XpTree **out_tree);

// # Safety
// `tree` must be NULL or a live handle.
void xp_tree_free(struct XpTree *tree);

// Number of nodes.
//
// # Safety
// `tree` must be a live handle or NULL.
size_t xp_tree_len(const struct XpTree *tree);

// Serializes a tree; holes and patterns use the placeholder syntax.
//
// # Safety
// `tree` must be a live handle; `out_xml` must be writable.
enum XpStatus xp_tree_serialize(const struct XpTree *tree, char **out_xml);

// `XP_STATUS_OK` if `a` refines into `b`, `XP_STATUS_REJECTED` otherwise.
//
// # Safety
// Both handles must be live.
enum XpStatus xp_tree_refines(const struct XpTree *a, const struct XpTree *b);

// Greatest lower bound of two trees.
//
// # Safety
// Both handles must be live; `out` must be writable.
enum XpStatus xp_tree_meet(const struct XpTree *a,
                           const struct XpTree *b,
                           struct XpTree **out_tree);

// Least upper bound of two trees.
//
// # Safety
// Both handles must be live; `out` must be writable.
enum XpStatus xp_tree_join(const struct XpTree *a,
                           const struct XpTree *b,
                           struct XpTree **out_tree);

// Distance under the default metric.
//
// # Safety
// Both handles must be live; `out_distance` must be writable.
enum XpStatus xp_tree_distance(const struct XpTree *a,
                               const struct XpTree *b,
                               double *out_distance);

// Parses an invariant file (named `[stanzas]` of formulas).
//
// # Safety
// `source` must be a NUL-terminated string; `out` must be writable.
enum XpStatus xp_invariants_parse(const char *source, struct XpInvariants **out_set);

// # Safety
// `set` must be NULL or a live handle.
void xp_invariants_free(struct XpInvariants *set);

// Checks every invariant. `out_report`, when not NULL, receives
// `invariant=NAME holds=BOOL [violation=PATH]` lines.
//
// # Safety
// Handles must be live; `out_report` must be NULL or writable.
enum XpStatus xp_invariants_check(const struct XpInvariants *set,
                                  const struct XpTree *tree,
                                  char **out_report);

// Runs a protocol or hole-filler spec file. When `out_dir` is not NULL
// the snapshots and `report.txt` are written there. `out_report`, when
// not NULL, receives the run report.
//
// # Safety
// `spec_path` must be NUL-terminated; `out_dir` NULL or NUL-terminated;
// `out_report` NULL or writable.
enum XpStatus xp_run_spec(const char *spec_path, const char *out_dir, char **out_report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* XMLPROMPT_H */
