#ifndef CONVATTN_H
#define CONVATTN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define CAF_OK 0

#define CAF_ERR_CONFIG 2

#define CAF_ERR_IO 3

#define CAF_ERR_FORMAT 4

#define CAF_ERR_NUMERIC 5

/**
 * Opaque in-memory dataset.
 */
typedef struct CafDataset CafDataset;

/**
 * Opaque trained-or-trainable fusion model.
 */
typedef struct CafModel CafModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message for the calling thread, valid until the next failing
 * call on the same thread. Never null.
 */
const char *caf_last_error_message(void);

/**
 * Build a fresh model from a fusion-config JSON string. Returns null on
 * error; see caf_last_error_message.
 */
struct CafModel *caf_model_new(const char *config_json, uint64_t seed);

/**
 * Load a model checkpoint. Returns null on error.
 */
struct CafModel *caf_model_load(const char *path);

/**
 * Save the model as a checkpoint file.
 */
int32_t caf_model_save(struct CafModel *model, const char *path);

void caf_model_free(struct CafModel *model);

/**
 * Number of trainable parameters.
 */
size_t caf_model_param_count(struct CafModel *model);

/**
 * Load a dataset directory (manifest.json plus stream files). Returns null
 * on error.
 */
struct CafDataset *caf_dataset_load(const char *dir);

void caf_dataset_free(struct CafDataset *dataset);

/**
 * Number of samples in the dataset.
 */
size_t caf_dataset_len(const struct CafDataset *dataset);

/**
 * Train the model in place. `train_config_json` may be null for defaults.
 * On success writes the final train-split WAF to `out_train_waf` (may be
 * null).
 */
int32_t caf_train(struct CafModel *model,
                  const struct CafDataset *dataset,
                  const char *train_config_json,
                  double *out_train_waf);

/**
 * Evaluate the model over the labeled samples of a dataset; writes WAF and
 * accuracy (either pointer may be null).
 */
int32_t caf_evaluate(struct CafModel *model,
                     const struct CafDataset *dataset,
                     double *out_waf,
                     double *out_acc);

/**
 * Classify one sample. `features` holds the streams concatenated in model
 * declaration order; `len` must equal the sum of stream dims. The predicted
 * class index is written to `out_class`.
 */
int32_t caf_predict(struct CafModel *model, const double *features, size_t len, size_t *out_class);

/**
 * Finite-difference gradient check of a fresh model built from the config
 * JSON. Writes the max relative error (pointer may be null); returns
 * CAF_ERR_NUMERIC if it exceeds 1e-5.
 */
int32_t caf_gradcheck(const char *config_json, uint64_t seed, double *out_max_rel_err);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONVATTN_H */
