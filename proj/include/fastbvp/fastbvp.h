/* FastBVP-Net public C interface.
 *
 * Every function returns an fbv_status; FBV_OK means success. On failure a
 * human-readable message is stored per thread and readable via
 * fbv_last_error() until the next failing call on the same thread.
 *
 * Strings returned through `char**` are heap-allocated; release them with
 * fbv_string_free. Waveform buffers returned through `double**` are released
 * with fbv_buffer_free. Handles are released with their matching _free call.
 */
#ifndef FASTBVP_H
#define FASTBVP_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  ifdef FBV_BUILD
#    define FBV_API __declspec(dllexport)
#  else
#    define FBV_API __declspec(dllimport)
#  endif
#else
#  define FBV_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fbv_status {
    FBV_OK = 0,
    FBV_ERR_ARGUMENT = 1,     /* bad parameter value */
    FBV_ERR_IO = 2,           /* file system failure */
    FBV_ERR_SCHEMA = 3,       /* malformed input file structure */
    FBV_ERR_DATA = 4,         /* structurally valid but unusable values */
    FBV_ERR_STATE = 5,        /* operation applied in the wrong state */
    FBV_ERR_SHAPE = 6,        /* dimension mismatch */
    FBV_ERR_CONFIG = 7,       /* invalid or inconsistent configuration */
    FBV_ERR_DIVERGED = 8,     /* training produced non-finite loss */
    FBV_ERR_INSUFFICIENT = 9, /* not enough signal to compute the result */
    FBV_ERR_DEGENERATE = 10,  /* result undefined for this input */
    FBV_ERR_INTERNAL = 11
} fbv_status;

typedef struct fbv_stmap fbv_stmap;   /* spatial-temporal map (I x 3 x T) */
typedef struct fbv_model fbv_model;   /* network config + parameters */
typedef struct fbv_corpus fbv_corpus; /* clips with ground truth */

FBV_API const char* fbv_version(void);
FBV_API const char* fbv_status_name(fbv_status status);
FBV_API const char* fbv_last_error(void);

FBV_API void fbv_string_free(char* s);
FBV_API void fbv_buffer_free(double* p);

/* ---- spatial-temporal maps ---------------------------------------------- */

FBV_API fbv_status fbv_stmap_load(const char* csv_path, double sample_rate,
                                  fbv_stmap** out);
FBV_API fbv_status fbv_stmap_from_csv(const char* csv_text, double sample_rate,
                                      fbv_stmap** out);
FBV_API fbv_status fbv_stmap_info(const fbv_stmap* map, int* regions, int* frames,
                                  double* sample_rate);
FBV_API void fbv_stmap_free(fbv_stmap* map);

/* ---- default configurations (JSON) -------------------------------------- */

FBV_API fbv_status fbv_default_model_config(char** json_out);
FBV_API fbv_status fbv_default_train_config(char** json_out);
FBV_API fbv_status fbv_default_synth_spec(char** json_out);

/* ---- synthetic corpus ---------------------------------------------------- */

/* Writes `<id>.csv`, `<id>.truth.json` per clip plus manifest.json. */
FBV_API fbv_status fbv_synth_corpus(const char* spec_json, const char* out_dir);

FBV_API fbv_status fbv_corpus_load(const char* dir, fbv_corpus** out);
FBV_API fbv_status fbv_corpus_info(const fbv_corpus* corpus, int* count, int* frames,
                                   double* sample_rate);
FBV_API void fbv_corpus_free(fbv_corpus* corpus);

/* ---- models -------------------------------------------------------------- */

/* config_json NULL selects the default configuration. */
FBV_API fbv_status fbv_model_create(const char* config_json, uint64_t seed,
                                    fbv_model** out);
FBV_API fbv_status fbv_model_load(const char* path, fbv_model** out);
FBV_API fbv_status fbv_model_save(const fbv_model* model, const char* path);
FBV_API fbv_status fbv_model_config(const fbv_model* model, char** json_out);
FBV_API void fbv_model_free(fbv_model* model);

/* Parameter count and itemized forward FLOPs for a T-frame clip:
 * {"params": N, "frames": T, "total_flops": F, "layers": [{name, flops}...]}.
 * config_json NULL selects the default configuration. */
FBV_API fbv_status fbv_budget_report(const char* config_json, int frames,
                                     char** json_out);

/* ---- training ------------------------------------------------------------ */

typedef void (*fbv_progress_fn)(int epoch, int phase, double train_loss,
                                double val_mae, void* user);

/* Two-phase fit; train_config_json NULL selects defaults. On success the
 * model holds the best-validation parameters. history_csv_out (optional)
 * receives the `epoch,phase,train_loss,val_mae` table. */
FBV_API fbv_status fbv_fit(fbv_model* model, const fbv_corpus* corpus,
                           const char* train_config_json, int threads,
                           fbv_progress_fn progress, void* user,
                           char** history_csv_out, int* best_epoch_out,
                           double* best_val_mae_out);

/* ---- inference ------------------------------------------------------------ */

/* Raw RGB map -> BVP waveform + physiology report JSON. Clips shorter than
 * 15 s are rejected (FBV_ERR_INSUFFICIENT). attention_json_out (optional)
 * receives the reconstruction-stage attention maps:
 * {"blocks": [{"block", "channels", "segments", "weights"}...]}. */
FBV_API fbv_status fbv_infer(const fbv_model* model, const fbv_stmap* map,
                             int threads, double** bvp_out, size_t* bvp_len_out,
                             char** report_json_out, char** attention_json_out);

/* Classic extractor ("green", "chrom", "pos") on the same map, same outputs. */
FBV_API fbv_status fbv_baseline_infer(const fbv_stmap* map, const char* method,
                                      double** bvp_out, size_t* bvp_len_out,
                                      char** report_json_out);

/* ---- evaluation ------------------------------------------------------------ */

/* CSV `method,mae,rmse,std,r` with rows fastbvp (when model is non-NULL),
 * green, chrom, pos. */
FBV_API fbv_status fbv_eval(const fbv_model* model, const fbv_corpus* corpus,
                            int threads, char** csv_out);

/* ---- band decomposition ----------------------------------------------------- */

/* mYUV conversion + per-trace normalization + multi-band split of a raw RGB
 * map; bands_json NULL selects the default bands. CSV columns:
 * `band,frame,r1_Y,r1_U,r1_V,...`. */
FBV_API fbv_status fbv_decompose_csv(const fbv_stmap* map, const char* bands_json,
                                     int threads, char** csv_out);

#ifdef __cplusplus
}
#endif

#endif /* FASTBVP_H */
