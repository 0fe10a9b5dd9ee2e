#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mufuru/cells.hpp"
#include "mufuru/metrics.hpp"
#include "mufuru/tasks.hpp"
#include "mufuru/tensor.hpp"

namespace mufuru {

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamConfig {
  double alpha = 1e-3;
  double beta1 = 0.0;  // no momentum
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// ADAM with bias correction:
///   t <- t+1; m <- b1 m + (1-b1) g; v <- b2 v + (1-b2) g^2;
///   theta <- theta - alpha * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps).
/// With beta1 = 0 the first moment is overwritten by the raw gradient every
/// step. Moment buffers are public state, matched positionally to the
/// parameter list the optimizer was built with.
struct Adam {
  AdamConfig cfg;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t t = 0;

  Adam(AdamConfig cfg, std::span<const Tensor> params);
  /// Reads each parameter's grad buffer and applies the update in place.
  void step(std::span<const Tensor> params);
};

/// Scales all grads by clip/norm when their global L2 norm exceeds clip.
/// Returns the pre-clip norm.
double clip_global_norm(std::span<const Tensor> params, double clip);

// ---------------------------------------------------------------------------
// Losses and metrics
// ---------------------------------------------------------------------------

/// -log softmax(logits)[target] via the stable log-sum-exp form.
/// logits is a [C] vector.
Tensor cross_entropy(Tape& tape, const Tensor& logits, int target);

/// Sum of per-row cross-entropies for [B,C] logits and B targets.
Tensor cross_entropy_sum(Tape& tape, const Tensor& logits,
                         std::span<const int> targets);

/// exp(total_nll / token_count), natural base.
double perplexity(double total_nll, std::int64_t token_count);

// ---------------------------------------------------------------------------
// Heads and embeddings
// ---------------------------------------------------------------------------

/// Logistic-regression readout on a final state: logits = W_c h + b_c.
struct ClassifierHead {
  Tensor w;  // C x M
  Tensor b;  // C
};
ClassifierHead init_classifier_head(int num_classes, int state_size, Rng& rng);

/// Vocabulary projection for language modeling: logits = W_o h + b_o.
struct LmHead {
  Tensor w;  // V x M
  Tensor b;  // V
};
LmHead init_lm_head(int vocab_size, int state_size, Rng& rng);

/// Trainable token embeddings, initialized uniformly in [-0.05, 0.05].
struct Embedding {
  Tensor table;  // V x D
};
Embedding init_embedding(int vocab_size, int dim, Rng& rng);

// ---------------------------------------------------------------------------
// Training loops
// ---------------------------------------------------------------------------

struct TrainConfig {
  int epochs = 100;
  int batch_size = 50;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  int eval_every = 0;     // in mini-batches; 0 = once per epoch
  double clip_norm = 0.0; // 0 = off
  int truncation = 32;    // LM only: BPTT truncation length
};

/// Sequence-classification result. The cell/head passed in are restored to
/// the best-dev parameters before returning; `history` holds one row per
/// evaluation event in order.
struct ClassifyResult {
  std::vector<MetricRow> history;
  double best_dev_accuracy = 0.0;
  double final_train_loss = 0.0;
  std::int64_t steps = 0;
};

/// Input encoding for classification tasks: one-hot ids or learned
/// embeddings. `embedding` may be null for one-hot.
struct SequenceBatchEncoder {
  int vocab_size = 0;
  Embedding* embedding = nullptr;  // null -> one-hot rows
};

/// Mini-batch training of a classifier on final states: sequences are
/// bucketed by length, padded to the bucket maximum with the state frozen
/// past each sequence's true end, so the readout sees h at the true final
/// step. Dev accuracy is evaluated every cfg.eval_every batches (at least
/// once per epoch) and the best-dev parameters are retained.
ClassifyResult train_classifier(Cell& cell, ClassifierHead& head,
                                Embedding* embedding,
                                std::span<const LabeledSequence> train,
                                std::span<const LabeledSequence> dev,
                                int vocab_size, int num_classes,
                                const TrainConfig& cfg);

/// Accuracy and mean loss of the classifier over a dataset.
struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};
EvalResult evaluate_classifier(const Cell& cell, const ClassifierHead& head,
                               const Embedding* embedding,
                               std::span<const LabeledSequence> data,
                               int vocab_size, int batch_size = 64);

/// Language-model training: the corpus is split into batch_size parallel
/// streams, BPTT is truncated at cfg.truncation steps, and the state is
/// carried (detached) across truncation boundaries within an epoch. History
/// holds train/valid perplexity per epoch; the best-valid parameters are
/// retained in the passed-in model.
struct LmResult {
  std::vector<MetricRow> history;
  double best_valid_perplexity = 0.0;
  std::int64_t steps = 0;
};
LmResult train_lm(Cell& cell, LmHead& head, Embedding* embedding,
                  const TextCorpus& corpus, const TrainConfig& cfg);

/// Total NLL and token count of a forward pass over a token stream. The
/// stream divides into batch_size parallel segments; remainder tokens and
/// each segment's unpredictable first token are not counted.
struct NllResult {
  double total_nll = 0.0;
  std::int64_t tokens = 0;
};
NllResult lm_nll(const Cell& cell, const LmHead& head,
                 const Embedding* embedding, std::span<const int> stream,
                 int vocab_size, int batch_size, int truncation);

/// Mean operation weight per (input token, op), averaged over feature
/// dimensions and occurrences. Rows sum to 1 at every token that occurs.
struct OpWeightProfile {
  std::vector<std::string> tokens;           // row labels
  std::vector<CompositionOp> ops;            // column order
  std::vector<std::vector<double>> weights;  // tokens x ops
};

OpWeightProfile op_weight_profile(const Cell& cell,
                                  std::span<const LabeledSequence> data,
                                  std::span<const std::string> token_names);

void write_profile_csv(const std::string& path, const OpWeightProfile& profile);

/// Logic-task harness: classification of formula truth from the final state,
/// with the MuFuRU operation-weight profile aggregated over the test split.
struct LogicResult {
  std::vector<MetricRow> history;
  double best_dev_accuracy = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  OpWeightProfile profile;  // empty for non-MuFuRU cells
  std::int64_t steps = 0;
};
LogicResult train_logic(Cell& cell, ClassifierHead& head,
                        const LogicDatasets& data, const TrainConfig& cfg);

/// LabeledSequence view of logic formulae (token ids, 0/1 labels).
std::vector<LabeledSequence> logic_to_sequences(
    std::span<const LogicFormula> formulae);

}  // namespace mufuru
