/*
 * conceptlayer.h - C interface to the concept layer toolkit.
 *
 * Objects are opaque handles created by *_create / *_load / *_build calls
 * and released with the matching *_free. Every fallible call returns a
 * cl_status; on failure cl_last_error() describes the problem. Strings
 * returned by accessors are owned by the handle they came from and stay
 * valid until that handle is freed.
 *
 * Handles are not internally synchronized. Distinct handles may be used from
 * different threads; const operations on one handle may run concurrently.
 */
#ifndef CONCEPTLAYER_H
#define CONCEPTLAYER_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(CL_BUILDING_LIBRARY)
#    define CL_API __declspec(dllexport)
#  else
#    define CL_API __declspec(dllimport)
#  endif
#else
#  define CL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cl_status {
  CL_OK = 0,
  CL_ERR_INVALID_CONFIGURATION = 1,
  CL_ERR_SLICE_INDEX = 2,
  CL_ERR_SHAPE = 3,
  CL_ERR_DEGENERATE_CONCEPT = 4,
  CL_ERR_DEGENERATE_LAYER = 5,
  CL_ERR_UNINTERPRETABLE_INPUT = 6,
  CL_ERR_UNKNOWN_CONCEPT = 7,
  CL_ERR_SLICE_ORDERING = 8,
  CL_ERR_INVALID_BATCH = 9,
  CL_ERR_DIVERGENCE = 10,
  CL_ERR_FROZEN_PREFIX = 11,
  CL_ERR_INVALID_CORPUS = 12,
  CL_ERR_EXHAUSTED = 13,
  CL_ERR_DEGENERATE_TASK = 14,
  CL_ERR_INVALID_SPLIT = 15,
  CL_ERR_IO = 16,
  CL_ERR_PARSE = 17,
  CL_ERR_INVALID_ARGUMENT = 18,
  CL_ERR_INTERNAL = 19
} cl_status;

typedef struct cl_model cl_model;
typedef struct cl_layer cl_layer;
typedef struct cl_head cl_head;
typedef struct cl_texts cl_texts;
typedef struct cl_search_result cl_search_result;
typedef struct cl_weld_report cl_weld_report;
typedef struct cl_eval_report cl_eval_report;
typedef struct cl_service cl_service;

CL_API const char* cl_version(void);
/* Stable snake_case name, e.g. "slice_ordering". */
CL_API const char* cl_status_name(cl_status status);
/* Message for the most recent failure on the calling thread. */
CL_API const char* cl_last_error(void);

/* ---- Text collections ------------------------------------------------ */

/* labels may be NULL; unlabeled entries report label -1. */
CL_API cl_status cl_texts_create(const char* const* texts, const int* labels, size_t count,
                                 cl_texts** out);
/* One text per line, blank lines skipped. */
CL_API cl_status cl_texts_load_corpus(const char* path, cl_texts** out);
/* label<TAB>text lines. */
CL_API cl_status cl_texts_load_dataset(const char* path, cl_texts** out);
CL_API cl_status cl_texts_synthetic(int classes, size_t count, uint64_t seed, cl_texts** out);
CL_API cl_status cl_texts_save_dataset(const cl_texts* texts, const char* path);
CL_API cl_status cl_texts_save_corpus(const cl_texts* texts, const char* path);
CL_API size_t cl_texts_count(const cl_texts* texts);
CL_API const char* cl_texts_text(const cl_texts* texts, size_t index);
CL_API int cl_texts_label(const cl_texts* texts, size_t index);
/* Splits off every `stride`-th entry (offset `offset`) into *held_out. */
CL_API cl_status cl_texts_split(const cl_texts* texts, size_t stride, size_t offset,
                                cl_texts** kept, cl_texts** held_out);
CL_API void cl_texts_free(cl_texts* texts);

/* ---- Models ---------------------------------------------------------- */

CL_API cl_status cl_model_create_toy(int hidden_dim, int layer_count, uint64_t seed,
                                     cl_model** out);
/* key=value file with hidden_dim, layer_count, seed. */
CL_API cl_status cl_model_from_encoder_config(const char* path, cl_model** out);
CL_API cl_status cl_model_load(const char* path, cl_model** out);
/* run_manifest may be NULL; it is recorded in the artifact when given. */
CL_API cl_status cl_model_save(const cl_model* model, const char* path, const char* run_manifest);
CL_API cl_status cl_model_clone(const cl_model* model, cl_model** out);
/* Copy of the model with every concept layer removed. */
CL_API cl_status cl_model_strip_layers(const cl_model* model, cl_model** out);
CL_API void cl_model_free(cl_model* model);

CL_API int cl_model_hidden_dim(const cl_model* model);
CL_API int cl_model_layer_count(const cl_model* model);
CL_API size_t cl_model_concept_layer_count(const cl_model* model);
/* Slice index of the index-th installed concept layer, or -1. */
CL_API int cl_model_concept_layer_slice(const cl_model* model, size_t index);
/* Copy of the concept layer installed at slice_index. */
CL_API cl_status cl_model_get_layer(const cl_model* model, int slice_index, cl_layer** out);

/* Final pooled output; out_len must equal the hidden dimension. */
CL_API cl_status cl_model_forward(const cl_model* model, const char* text, double* out,
                                  size_t out_len);
/* Pooled output of layer slice_index - 1 of the (conceptualized) prefix. */
CL_API cl_status cl_model_encode_prefix(const cl_model* model, int slice_index, const char* text,
                                        double* out, size_t out_len);
/* Installs a copy of the layer; it must be deeper than existing layers. */
CL_API cl_status cl_model_install_layer(cl_model* model, const cl_layer* layer);

/* ---- Concept layers -------------------------------------------------- */

/* Embeds each tau through the model prefix at slice_index. */
CL_API cl_status cl_layer_build(const cl_model* model, int slice_index, const char* const* ids,
                                const char* const* taus, size_t count, cl_layer** out);
/* Rows are unit vectors, row-major count x hidden_dim. */
CL_API cl_status cl_layer_build_from_vectors(int slice_index, const char* const* ids,
                                             const double* rows, size_t count,
                                             size_t hidden_dim, cl_layer** out);
CL_API cl_status cl_layer_load(const char* path, cl_layer** out);
CL_API cl_status cl_layer_save(const cl_layer* layer, const char* path, const char* run_manifest);
CL_API void cl_layer_free(cl_layer* layer);

CL_API size_t cl_layer_size(const cl_layer* layer);
CL_API int cl_layer_hidden_dim(const cl_layer* layer);
CL_API int cl_layer_slice_index(const cl_layer* layer);
CL_API size_t cl_layer_rank(const cl_layer* layer);
CL_API double cl_layer_condition_number(const cl_layer* layer);
CL_API const char* cl_layer_concept_id(const cl_layer* layer, size_t index);
CL_API const char* cl_layer_concept_tau(const cl_layer* layer, size_t index);
/* Row-major copies; projection is n x h, pseudo-inverse is h x n. */
CL_API cl_status cl_layer_projection(const cl_layer* layer, double* out, size_t out_len);
CL_API cl_status cl_layer_pseudo_inverse(const cl_layer* layer, double* out, size_t out_len);
/* 1 when both layers hold bit-identical matrices and metadata. */
CL_API int cl_layer_equal(const cl_layer* a, const cl_layer* b);

/* ---- Interpretation and intervention --------------------------------- */

typedef struct cl_scored_concept {
  const char* id; /* owned by the model */
  double score;   /* cosine similarity */
  size_t index;   /* position in the concept set */
} cl_scored_concept;

typedef struct cl_intervention {
  const char* concept_id;
  double factor; /* >= 0; 1 leaves the coordinate unchanged */
} cl_intervention;

/* slice_index 0 selects the model's first concept layer. Writes n cosine
 * scores in concept order and the source norm. */
CL_API cl_status cl_project(const cl_model* model, int slice_index, const char* text,
                            double* scores, size_t scores_len, double* norm);
/* Top-k concepts, descending; *count receives the number written. */
CL_API cl_status cl_interpret(const cl_model* model, int slice_index, const char* text, size_t k,
                              cl_scored_concept* out, size_t* count);
/* Conceptualized forward with interventions on the chosen layer, then the
 * head. probs may be NULL. */
CL_API cl_status cl_classify(const cl_model* model, const cl_head* head, int slice_index,
                             const char* text, const cl_intervention* interventions,
                             size_t intervention_count, int* label, double* probs,
                             size_t probs_len);

/* ---- Ontology search ------------------------------------------------- */

typedef struct cl_search_params {
  size_t target_size;
  double threshold;      /* first threshold */
  double threshold_step; /* linear decrement per round, > 0 */
  int slice_index;       /* prefix used for concept and corpus latents */
} cl_search_params;

/* initial may be empty (count 0) to start from the ontology roots.
 * concepts_path (id<TAB>tau) may be NULL. */
CL_API cl_status cl_search_run(const cl_model* model, const cl_search_params* params,
                               const char* ontology_path, const char* concepts_path,
                               const cl_texts* corpus, const char* const* initial,
                               size_t initial_count, cl_search_result** out);
/* Same search over a latent store: corpus entries and concept ids are looked
 * up as text ids at layer (slice_index - 1). */
CL_API cl_status cl_search_run_latents(const char* latent_store_path,
                                       const cl_search_params* params,
                                       const char* ontology_path, const cl_texts* corpus_ids,
                                       const char* const* initial, size_t initial_count,
                                       cl_search_result** out);
CL_API size_t cl_search_result_size(const cl_search_result* result);
CL_API const char* cl_search_result_concept(const cl_search_result* result, size_t index);
/* The concept's tau from the ontology (the id when none was given). */
CL_API const char* cl_search_result_tau(const cl_search_result* result, size_t index);
CL_API size_t cl_search_result_rounds(const cl_search_result* result);
/* Writes the id list and a JSON manifest; either path may be NULL. */
CL_API cl_status cl_search_result_write(const cl_search_result* result, const char* list_path,
                                        const char* manifest_path, const char* run_manifest);
CL_API void cl_search_result_free(cl_search_result* result);

/* ---- Welding --------------------------------------------------------- */

typedef struct cl_weld_config {
  size_t batch_size;
  double learning_rate;
  int epochs;
  int warmup_steps;
  double weight_decay;
  uint64_t seed;
} cl_weld_config;

CL_API void cl_weld_config_default(cl_weld_config* config);
/* Overrides fields present in a key=value file. */
CL_API cl_status cl_weld_config_load(const char* path, cl_weld_config* config);

/* Mean distillation loss of `conceptualized` against the encoder of
 * `original` (its concept layers are ignored). */
CL_API cl_status cl_distillation_loss(const cl_model* original, const cl_model* conceptualized,
                                      const cl_texts* batch, double* loss);
/* Trains the suffix after the deepest concept layer in place. */
CL_API cl_status cl_weld(const cl_model* original, cl_model* conceptualized,
                         const cl_weld_config* config, const cl_texts* corpus,
                         cl_weld_report** out);
CL_API size_t cl_weld_report_epochs(const cl_weld_report* report);
CL_API double cl_weld_report_epoch_loss(const cl_weld_report* report, size_t epoch);
CL_API double cl_weld_report_initial_loss(const cl_weld_report* report);
CL_API double cl_weld_report_final_loss(const cl_weld_report* report);
/* epoch<TAB>loss lines plus a summary line. */
CL_API cl_status cl_weld_report_write(const cl_weld_report* report, const char* path);
CL_API cl_status cl_weld_report_read(const char* path, cl_weld_report** out);
CL_API void cl_weld_report_free(cl_weld_report* report);

/* ---- Classification heads and evaluation ----------------------------- */

typedef struct cl_head_config {
  int hidden_width; /* 0 means twice the input dimension */
  double learning_rate;
  int max_epochs;
  int patience;
  uint64_t seed;
} cl_head_config;

CL_API void cl_head_config_default(cl_head_config* config);
/* Trains on the model's final outputs; texts must carry labels. */
CL_API cl_status cl_head_train(const cl_model* model, const cl_texts* train,
                               const cl_texts* validation, const cl_head_config* config,
                               cl_head** out);
CL_API cl_status cl_head_load(const char* path, cl_head** out);
/* class_names may be NULL. */
CL_API cl_status cl_head_save(const cl_head* head, const char* path,
                              const char* const* class_names, size_t class_name_count,
                              const char* run_manifest);
CL_API void cl_head_free(cl_head* head);
CL_API int cl_head_input_dim(const cl_head* head);
CL_API int cl_head_class_count(const cl_head* head);
/* NULL when the head carries no name for the class. */
CL_API const char* cl_head_class_name(const cl_head* head, size_t index);

/* Evaluates head(model(text)); with a reference model, also reports the
 * agreement between head(model) and head(reference). */
CL_API cl_status cl_eval(const cl_model* model, const cl_head* head, const cl_texts* dataset,
                         const cl_model* reference, cl_eval_report** out);
CL_API size_t cl_eval_report_count(const cl_eval_report* report);
CL_API double cl_eval_report_accuracy(const cl_eval_report* report);
CL_API double cl_eval_report_weighted_f1(const cl_eval_report* report);
CL_API double cl_eval_report_loss(const cl_eval_report* report);
/* Returns 1 and writes the agreement when a reference was given. */
CL_API int cl_eval_report_agreement(const cl_eval_report* report, double* agreement);
/* key=value text, JSON document, and index<TAB>pred<TAB>label dump; any
 * path may be NULL. */
CL_API cl_status cl_eval_report_write(const cl_eval_report* report, const char* kv_path,
                                      const char* json_path, const char* predictions_path);
CL_API void cl_eval_report_free(cl_eval_report* report);

/* ---- HTTP service ---------------------------------------------------- */

CL_API cl_status cl_service_create(cl_service** out);
/* slice_index 0 exposes the first concept layer; top_k 0 means 10. */
CL_API cl_status cl_service_load(cl_service* service, const cl_model* model, const cl_head* head,
                                 int slice_index, size_t top_k);
/* port 0 picks a free port; *bound_port receives the port in use. */
CL_API cl_status cl_service_bind(cl_service* service, const char* host, int port,
                                 int* bound_port);
/* Blocks until cl_service_stop. */
CL_API cl_status cl_service_listen(cl_service* service);
CL_API void cl_service_stop(cl_service* service);
/* In-process request dispatch; *response must be released with
 * cl_string_free. */
CL_API cl_status cl_service_handle(const cl_service* service, const char* method,
                                   const char* path, const char* body, int* http_status,
                                   char** response);
CL_API void cl_service_free(cl_service* service);

CL_API void cl_string_free(char* text);

#ifdef __cplusplus
}
#endif

#endif /* CONCEPTLAYER_H */
