// Joint model assembly: shared encoder with one CRF head per task, the
// alpha-weighted joint objective, Adam training with best-dev checkpoint
// selection, alpha sweeps, parallel decoding, and auxiliary-head stripping.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <vector>

#include "dfl/corpus.hpp"
#include "dfl/crf.hpp"
#include "dfl/encoder.hpp"
#include "dfl/metrics.hpp"

namespace dfl {

struct JointModel {
  EncoderParams encoder;
  std::map<Task, CrfHead> heads;  // disfluency head always present
  std::map<Task, Tagset> tagsets;
  Vocab vocab;

  // Draws the encoder first, then heads in task order, so a model with aux
  // heads starts from the same shared weights as a disfluency-only model
  // built from the same seed.
  static JointModel init(const EncoderConfig& cfg, const Vocab& vocab,
                         const std::map<Task, Tagset>& tagsets, uint64_t seed);

  bool has(Task t) const { return heads.count(t) > 0; }
  // Encoder tensors followed by each head's tensors in task order.
  std::vector<TensorRef> tensors();
  std::vector<ConstTensorRef> tensors() const;
};

// Vocabulary (min frequency 2), disfluency tagset, NER/POS tagsets for the
// requested aux tasks, and a seeded model over them. cfg.vocab_size is
// overwritten with the built vocabulary's size.
JointModel build_model(EncoderConfig cfg, const std::vector<Sentence>& train,
                       const std::set<Task>& aux_tasks, uint64_t seed);

// Inference model: encoder + disfluency head only. Disfluency decoding is
// unchanged because aux heads never feed the shared representation.
JointModel strip_aux(const JointModel& model);

struct TrainConfig {
  double alpha = 0.1;
  double learning_rate = 5e-5;
  int batch_size = 32;
  int epochs = 30;
  int seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip_norm = 5.0;
  std::set<Task> aux_tasks;  // subset of {Ner, Pos}

  void validate() const;  // alpha >= 0, batch_size >= 1, epochs >= 0, lr > 0
};

struct JointGrads {
  EncoderGrads encoder;
  std::map<Task, CrfGrads> heads;

  static JointGrads zeros_like(const JointModel& model);
  void set_zero();  // in place, storage kept
  // Same order and names as JointModel::tensors().
  std::vector<TensorRef> tensors();
};

struct TaskLosses {
  double disfl = 0.0;
  double ner = 0.0;
  double pos = 0.0;
  double total = 0.0;  // disfl + alpha * (ner + pos)
};

// Batch-mean joint objective over the rows of `batch` listed in `rows`
// (empty = every row). Gradients, when requested, are overwritten with the
// batch means. Aux heads are skipped entirely when alpha is 0 or the task is
// absent from aux_tasks: their losses read 0 and their gradients stay zero.
TaskLosses joint_loss(const JointModel& model, const EncodedBatch& batch,
                      const std::vector<int>& rows, double alpha,
                      const std::set<Task>& aux_tasks, bool train_mode, Rng* rng,
                      JointGrads* grads);

// Batch-mean NLL of one head alone, for gradient decomposition checks.
double single_task_loss(const JointModel& model, const EncodedBatch& batch,
                        const std::vector<int>& rows, Task task, JointGrads* grads);

struct AdamState {
  std::vector<Vec> m;
  std::vector<Vec> v;
  std::vector<std::string> names;  // pairing checked against the param refs
  int64_t step = 0;

  static AdamState init(const std::vector<TensorRef>& params);
};

// Standard bias-corrected Adam, applied in place.
void adam_step(const std::vector<TensorRef>& params, const std::vector<TensorRef>& grads,
               AdamState& state, double lr, double beta1, double beta2, double eps);

// Viterbi paths for one task over every row of the batch; `num_threads` > 1
// splits rows across workers (row results are position-stable, so the
// output is identical at any thread count).
std::vector<std::vector<int>> decode_task(const JointModel& model, const EncodedBatch& batch,
                                          Task task, int num_threads = 1);

// Gold label prefixes of the batch, shaped like decode_task output.
std::vector<std::vector<int>> gold_labels(const EncodedBatch& batch, Task task);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  Metrics dev;
};

struct TrainResult {
  JointModel model;  // weights of the best-dev-F1 epoch
  std::vector<EpochRecord> log;
  double best_dev_f1 = 0.0;
  int best_epoch = 0;  // 0 when epochs == 0
};

// Deterministic given cfg.seed: shuffling and dropout streams both derive
// from it. Keeps the weights of the epoch with the best dev F1 (earliest on
// ties). Aborts with a diagnostic if the loss turns non-finite.
TrainResult train(const JointModel& model, const std::vector<Sentence>& train_split,
                  const std::vector<Sentence>& dev_split, const TrainConfig& cfg);

struct SweepRow {
  double alpha = 0.0;
  int seed = 0;
  Metrics dev;
};

struct SweepResult {
  std::vector<SweepRow> rows;  // alpha-major, then seed
  double best_alpha = 0.0;     // by mean dev F1, ties to the smaller alpha
};

SweepResult alpha_sweep(const EncoderConfig& enc_cfg, const TrainConfig& base,
                        const std::vector<double>& alphas, const std::vector<int>& seeds,
                        const std::vector<Sentence>& train_split,
                        const std::vector<Sentence>& dev_split);

// CSV: header alpha,seed,dev_f1,dev_precision,dev_recall; 6-decimal floats.
void write_sweep_csv(std::ostream& out, const SweepResult& sweep);

// End-to-end gradient check of encoder + disfluency CRF NLL on one random
// sentence; returns the worst relative error across all trainable tensors.
double grad_check_encoder_crf(const EncoderConfig& cfg, uint64_t seed);

}  // namespace dfl
