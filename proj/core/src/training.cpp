#include "mufuru/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

namespace mufuru {

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

Adam::Adam(AdamConfig cfg_in, std::span<const Tensor> params) : cfg(cfg_in) {
  m.reserve(params.size());
  v.reserve(params.size());
  for (const Tensor& p : params) {
    m.emplace_back(static_cast<std::size_t>(p.size()), 0.0);
    v.emplace_back(static_cast<std::size_t>(p.size()), 0.0);
  }
}

void Adam::step(std::span<const Tensor> params) {
  if (params.size() != m.size()) {
    throw DimensionError("optimizer bound to " + std::to_string(m.size()) +
                         " parameters, got " + std::to_string(params.size()));
  }
  ++t;
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i];
    if (static_cast<std::size_t>(p.size()) != m[i].size()) {
      throw DimensionError("parameter " + std::to_string(i) +
                           " changed size under the optimizer");
    }
    auto theta = p.value();
    const bool has_grad = p.has_grad();
    const double* g = has_grad ? p.node()->grad.data() : nullptr;
    double* mi = m[i].data();
    double* vi = v[i].data();
    for (std::size_t j = 0; j < m[i].size(); ++j) {
      const double gj = g ? g[j] : 0.0;
      mi[j] = b1 * mi[j] + (1.0 - b1) * gj;
      vi[j] = b2 * vi[j] + (1.0 - b2) * gj * gj;
      const double mhat = mi[j] / corr1;
      const double vhat = vi[j] / corr2;
      theta[j] -= cfg.alpha * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
}

double clip_global_norm(std::span<const Tensor> params, double clip) {
  double sq = 0.0;
  for (const Tensor& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.node()->grad) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (clip > 0.0 && norm > clip) {
    const double s = clip / norm;
    for (const Tensor& p : params) {
      if (!p.has_grad()) continue;
      for (double& g : p.node()->grad) g *= s;
    }
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

Tensor cross_entropy_sum(Tape& tape, const Tensor& logits,
                         std::span<const int> targets) {
  int batch = 0, classes = 0;
  if (logits.rank() == 2) {
    batch = logits.shape()[0];
    classes = logits.shape()[1];
  } else if (logits.rank() == 1) {
    batch = 1;
    classes = logits.shape()[0];
  } else {
    throw DimensionError("cross_entropy expects [C] or [B,C] logits, got " +
                         shape_str(logits.shape()));
  }
  if (static_cast<int>(targets.size()) != batch) {
    throw ArgumentError("cross_entropy: " + std::to_string(targets.size()) +
                        " targets for batch of " + std::to_string(batch));
  }
  for (int tgt : targets) {
    if (tgt < 0 || tgt >= classes) {
      throw ArgumentError("cross_entropy target " + std::to_string(tgt) +
                          " out of range for " + std::to_string(classes) +
                          " classes");
    }
  }
  Tensor out = tape.alloc({}, logits.requires_grad());
  std::vector<double> probs(static_cast<std::size_t>(batch) * classes);
  {
    const double* z = logits.value().data();
    double nll = 0.0;
    for (int i = 0; i < batch; ++i) {
      const double* row = z + static_cast<std::size_t>(i) * classes;
      double mx = row[0];
      for (int c = 1; c < classes; ++c) mx = std::fmax(mx, row[c]);
      double sum = 0.0;
      double* prow = probs.data() + static_cast<std::size_t>(i) * classes;
      for (int c = 0; c < classes; ++c) {
        prow[c] = std::exp(row[c] - mx);
        sum += prow[c];
      }
      for (int c = 0; c < classes; ++c) prow[c] /= sum;
      nll += mx + std::log(sum) - row[targets[i]];
    }
    out.value()[0] = nll;
  }
  if (tape.recording() && out.requires_grad()) {
    tape.touch(logits);
    tape.touch(out);
    auto ld = logits.handle(), od = out.handle();
    std::vector<int> tgt(targets.begin(), targets.end());
    tape.record([ld, od, probs = std::move(probs), tgt, batch, classes] {
      if (!ld->requires_grad) return;
      const double g = od->grad[0];
      double* dl = ld->grad.data();
      for (int i = 0; i < batch; ++i) {
        const double* prow = probs.data() + static_cast<std::size_t>(i) * classes;
        double* drow = dl + static_cast<std::size_t>(i) * classes;
        for (int c = 0; c < classes; ++c) {
          drow[c] += (prow[c] - (c == tgt[i] ? 1.0 : 0.0)) * g;
        }
      }
    });
  }
  return out;
}

Tensor cross_entropy(Tape& tape, const Tensor& logits, int target) {
  const int t[1] = {target};
  return cross_entropy_sum(tape, logits, t);
}

double perplexity(double total_nll, std::int64_t token_count) {
  if (token_count <= 0) throw ArgumentError("perplexity needs token_count > 0");
  return std::exp(total_nll / static_cast<double>(token_count));
}

// ---------------------------------------------------------------------------
// Heads and embeddings
// ---------------------------------------------------------------------------

ClassifierHead init_classifier_head(int num_classes, int state_size, Rng& rng) {
  ClassifierHead head;
  head.w = glorot_uniform(num_classes, state_size, rng);
  head.b = Tensor::zeros({num_classes}, true);
  return head;
}

LmHead init_lm_head(int vocab_size, int state_size, Rng& rng) {
  LmHead head;
  head.w = glorot_uniform(vocab_size, state_size, rng);
  head.b = Tensor::zeros({vocab_size}, true);
  return head;
}

Embedding init_embedding(int vocab_size, int dim, Rng& rng) {
  return {Tensor::uniform({vocab_size, dim}, -0.05, 0.05, rng, true)};
}

// ---------------------------------------------------------------------------
// Shared loop machinery
// ---------------------------------------------------------------------------

namespace {

std::vector<std::vector<double>> snapshot_values(
    std::span<const Tensor> params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const Tensor& p : params) {
    out.emplace_back(p.value().begin(), p.value().end());
  }
  return out;
}

void restore_values(std::span<const Tensor> params,
                    const std::vector<std::vector<double>>& snap) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i];
    std::copy(snap[i].begin(), snap[i].end(), p.value().begin());
  }
}

// Length-bucketed batch index lists: indices sorted stably by sequence
// length (preserving the incoming order within a length), then chunked.
std::vector<std::vector<int>> bucket_batches(
    std::span<const LabeledSequence> data, std::span<const int> order,
    int batch_size) {
  std::vector<int> sorted(order.begin(), order.end());
  std::stable_sort(sorted.begin(), sorted.end(), [&data](int a, int b) {
    return data[static_cast<std::size_t>(a)].tokens.size() <
           data[static_cast<std::size_t>(b)].tokens.size();
  });
  std::vector<std::vector<int>> batches;
  for (std::size_t i = 0; i < sorted.size(); i += batch_size) {
    const std::size_t end = std::min(sorted.size(), i + batch_size);
    batches.emplace_back(sorted.begin() + static_cast<std::ptrdiff_t>(i),
                         sorted.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

// Forward pass over one padded batch. The state is frozen once a sequence
// ends, so the final state row of every sequence is its true final state.
Tensor classifier_batch_state(Tape& tape, const Cell& cell,
                              const Embedding* embedding,
                              std::span<const LabeledSequence> data,
                              std::span<const int> batch, int vocab_size) {
  const int b = static_cast<int>(batch.size());
  const int m = cell.shape.state_size;
  std::size_t max_len = 0, min_len = SIZE_MAX;
  for (int idx : batch) {
    max_len = std::max(max_len, data[idx].tokens.size());
    min_len = std::min(min_len, data[idx].tokens.size());
  }
  Tensor s = Tensor::zeros({b, m});
  for (std::size_t t = 0; t < max_len; ++t) {
    Tensor x;
    if (embedding) {
      std::vector<int> ids(static_cast<std::size_t>(b), 0);
      for (int i = 0; i < b; ++i) {
        const auto& toks = data[batch[i]].tokens;
        if (t < toks.size()) ids[i] = toks[t];
      }
      x = tape.embed(embedding->table, ids);
    } else {
      x = Tensor::zeros({b, vocab_size});
      for (int i = 0; i < b; ++i) {
        const auto& toks = data[batch[i]].tokens;
        if (t < toks.size()) {
          const int id = toks[t];
          if (id < 0 || id >= vocab_size) {
            throw DataError("token id " + std::to_string(id) +
                            " outside vocabulary of size " +
                            std::to_string(vocab_size));
          }
          x.value()[static_cast<std::size_t>(i) * vocab_size + id] = 1.0;
        }
      }
    }
    StepOut so = cell_step(tape, cell, x, s);
    if (t < min_len) {
      s = so.state;
    } else {
      // Some sequences have ended; freeze their rows.
      Tensor alive = Tensor::zeros({b, m});
      Tensor done = Tensor::zeros({b, m});
      for (int i = 0; i < b; ++i) {
        const double on = t < data[batch[i]].tokens.size() ? 1.0 : 0.0;
        for (int j = 0; j < m; ++j) {
          alive.value()[static_cast<std::size_t>(i) * m + j] = on;
          done.value()[static_cast<std::size_t>(i) * m + j] = 1.0 - on;
        }
      }
      s = tape.add(tape.mul(alive, so.state), tape.mul(done, s));
    }
  }
  return s;
}

struct BatchEval {
  double nll_sum = 0.0;
  int correct = 0;
};

BatchEval eval_batch(const Cell& cell, const ClassifierHead& head,
                     const Embedding* embedding,
                     std::span<const LabeledSequence> data,
                     std::span<const int> batch, int vocab_size) {
  Tape tape(false);
  Tensor s = classifier_batch_state(tape, cell, embedding, data, batch,
                                    vocab_size);
  Tensor logits = tape.linear(s, head.w, head.b);
  const int classes = head.w.shape()[0];
  std::vector<int> targets;
  targets.reserve(batch.size());
  for (int idx : batch) targets.push_back(data[idx].label);
  BatchEval ev;
  ev.nll_sum = cross_entropy_sum(tape, logits, targets).item();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double* row = logits.value().data() + i * classes;
    int arg = 0;
    for (int c = 1; c < classes; ++c) {
      if (row[c] > row[arg]) arg = c;
    }
    if (arg == targets[i]) ++ev.correct;
  }
  return ev;
}

}  // namespace

EvalResult evaluate_classifier(const Cell& cell, const ClassifierHead& head,
                               const Embedding* embedding,
                               std::span<const LabeledSequence> data,
                               int vocab_size, int batch_size) {
  if (data.empty()) throw ArgumentError("evaluate_classifier on empty data");
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const auto batches = bucket_batches(data, order, batch_size);
  double nll = 0.0;
  std::int64_t correct = 0;
  for (const auto& batch : batches) {
    BatchEval ev = eval_batch(cell, head, embedding, data, batch, vocab_size);
    nll += ev.nll_sum;
    correct += ev.correct;
  }
  EvalResult res;
  res.loss = nll / static_cast<double>(data.size());
  res.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return res;
}

ClassifyResult train_classifier(Cell& cell, ClassifierHead& head,
                                Embedding* embedding,
                                std::span<const LabeledSequence> train,
                                std::span<const LabeledSequence> dev,
                                int vocab_size, int num_classes,
                                const TrainConfig& cfg) {
  if (train.empty()) throw ArgumentError("train_classifier on empty train set");
  if (dev.empty()) throw ArgumentError("train_classifier on empty dev set");
  if (num_classes != head.w.shape()[0]) {
    throw DimensionError("classifier head has " +
                         std::to_string(head.w.shape()[0]) +
                         " outputs for " + std::to_string(num_classes) +
                         " classes");
  }

  std::vector<Tensor> params = cell.parameters();
  params.push_back(head.w);
  params.push_back(head.b);
  if (embedding) params.push_back(embedding->table);

  Adam adam({.alpha = cfg.learning_rate}, params);
  Rng rng(cfg.seed);

  ClassifyResult result;
  double best_dev = -1.0;
  std::vector<std::vector<double>> best_snapshot;
  double run_loss = 0.0, run_correct = 0.0;
  std::int64_t run_count = 0, run_batches = 0;
  std::int64_t step = 0;

  auto eval_event = [&](int epoch) {
    EvalResult dev_res =
        evaluate_classifier(cell, head, embedding, dev, vocab_size);
    const double train_loss =
        run_count > 0 ? run_loss / static_cast<double>(run_count) : 0.0;
    const double train_acc =
        run_count > 0 ? run_correct / static_cast<double>(run_count) : 0.0;
    result.history.push_back({step, epoch, "train", train_loss, train_acc});
    result.history.push_back({step, epoch, "dev", dev_res.loss, dev_res.accuracy});
    result.final_train_loss = train_loss;
    run_loss = run_correct = 0.0;
    run_count = run_batches = 0;
    if (dev_res.accuracy > best_dev) {
      best_dev = dev_res.accuracy;
      best_snapshot = snapshot_values(params);
    }
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<int> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    auto batches = bucket_batches(train, order, cfg.batch_size);
    rng.shuffle(batches);
    for (const auto& batch : batches) {
      Tape tape;
      Tensor s = classifier_batch_state(tape, cell, embedding, train, batch,
                                        vocab_size);
      Tensor logits = tape.linear(s, head.w, head.b);
      std::vector<int> targets;
      targets.reserve(batch.size());
      for (int idx : batch) targets.push_back(train[idx].label);
      Tensor loss = tape.scale(cross_entropy_sum(tape, logits, targets),
                               1.0 / static_cast<double>(batch.size()));
      const double loss_val = loss.item();
      if (!std::isfinite(loss_val)) {
        throw CheckError("non-finite loss at step " + std::to_string(step + 1));
      }
      tape.backward(loss);
      if (cfg.clip_norm > 0.0) clip_global_norm(params, cfg.clip_norm);
      adam.step(params);
      ++step;

      run_loss += loss_val * static_cast<double>(batch.size());
      const int classes = head.w.shape()[0];
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const double* row = logits.value().data() + i * classes;
        int arg = 0;
        for (int c = 1; c < classes; ++c) {
          if (row[c] > row[arg]) arg = c;
        }
        if (arg == targets[i]) run_correct += 1.0;
      }
      run_count += static_cast<std::int64_t>(batch.size());
      ++run_batches;
      if (cfg.eval_every > 0 && step % cfg.eval_every == 0) eval_event(epoch);
    }
    if (cfg.eval_every == 0) eval_event(epoch);
  }
  if (run_batches > 0) eval_event(cfg.epochs);

  if (!best_snapshot.empty()) restore_values(params, best_snapshot);
  result.best_dev_accuracy = best_dev;
  result.steps = step;
  return result;
}

// ---------------------------------------------------------------------------
// Language modeling
// ---------------------------------------------------------------------------

namespace {

// stream b of `count` parallel streams covers tokens [b*s, (b+1)*s).
struct StreamView {
  std::span<const int> tokens;
  int batch = 0;
  std::int64_t stream_len = 0;

  StreamView(std::span<const int> toks, int requested_batch)
      : tokens(toks) {
    batch = static_cast<int>(std::max<std::int64_t>(
        1, std::min<std::int64_t>(requested_batch,
                                  static_cast<std::int64_t>(toks.size()) / 2)));
    stream_len = static_cast<std::int64_t>(toks.size()) / batch;
  }
  int at(int b, std::int64_t i) const {
    return tokens[static_cast<std::size_t>(b) * stream_len +
                  static_cast<std::size_t>(i)];
  }
};

Tensor lm_inputs(Tape& tape, const Embedding* embedding, const StreamView& sv,
                 std::int64_t pos, int vocab_size) {
  if (embedding) {
    std::vector<int> ids(static_cast<std::size_t>(sv.batch));
    for (int b = 0; b < sv.batch; ++b) ids[b] = sv.at(b, pos);
    return tape.embed(embedding->table, ids);
  }
  Tensor x = Tensor::zeros({sv.batch, vocab_size});
  for (int b = 0; b < sv.batch; ++b) {
    const int id = sv.at(b, pos);
    if (id < 0 || id >= vocab_size) {
      throw DataError("corpus token id " + std::to_string(id) +
                      " outside vocabulary of size " +
                      std::to_string(vocab_size));
    }
    x.value()[static_cast<std::size_t>(b) * vocab_size + id] = 1.0;
  }
  return x;
}

}  // namespace

NllResult lm_nll(const Cell& cell, const LmHead& head,
                 const Embedding* embedding, std::span<const int> stream,
                 int vocab_size, int batch_size, int truncation) {
  if (stream.size() < 2) throw ArgumentError("lm_nll needs at least 2 tokens");
  StreamView sv(stream, batch_size);
  const int m = cell.shape.state_size;
  NllResult res;
  Tensor s = Tensor::zeros({sv.batch, m});
  std::int64_t pos = 0;
  while (pos + 1 < sv.stream_len) {
    const auto chunk =
        std::min<std::int64_t>(truncation, sv.stream_len - 1 - pos);
    Tape tape(false);
    Tensor st = Tensor::from(s.shape(), {s.value().begin(), s.value().end()});
    for (std::int64_t t = 0; t < chunk; ++t) {
      Tensor x = lm_inputs(tape, embedding, sv, pos + t, vocab_size);
      StepOut so = cell_step(tape, cell, x, st);
      st = so.state;
      Tensor logits = tape.linear(so.output, head.w, head.b);
      std::vector<int> targets(static_cast<std::size_t>(sv.batch));
      for (int b = 0; b < sv.batch; ++b) targets[b] = sv.at(b, pos + t + 1);
      res.total_nll += cross_entropy_sum(tape, logits, targets).item();
      res.tokens += sv.batch;
    }
    s.copy_values_from(st);
    pos += chunk;
  }
  return res;
}

LmResult train_lm(Cell& cell, LmHead& head, Embedding* embedding,
                  const TextCorpus& corpus, const TrainConfig& cfg) {
  const int vocab_size = static_cast<int>(corpus.vocab.size());
  if (vocab_size < 1) throw DataError("corpus has an empty vocabulary");
  if (static_cast<int>(corpus.train.size()) <= cfg.truncation) {
    throw ArgumentError("training corpus shorter than the truncation length");
  }
  for (const auto* split : {&corpus.valid, &corpus.test}) {
    for (int id : *split) {
      if (id < 0 || id >= vocab_size) {
        throw DataError("corpus split carries token id " + std::to_string(id) +
                        " outside the shared vocabulary");
      }
    }
  }

  std::vector<Tensor> params = cell.parameters();
  params.push_back(head.w);
  params.push_back(head.b);
  if (embedding) params.push_back(embedding->table);
  Adam adam({.alpha = cfg.learning_rate}, params);

  StreamView sv(corpus.train, cfg.batch_size);
  const int m = cell.shape.state_size;

  LmResult result;
  double best_valid = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best_snapshot;
  std::int64_t step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double epoch_nll = 0.0;
    std::int64_t epoch_tokens = 0;
    Tensor carry = Tensor::zeros({sv.batch, m});
    std::int64_t pos = 0;
    while (pos + 1 < sv.stream_len) {
      const auto chunk =
          std::min<std::int64_t>(cfg.truncation, sv.stream_len - 1 - pos);
      Tape tape;
      Tensor s = Tensor::from(carry.shape(),
                              {carry.value().begin(), carry.value().end()});
      Tensor total;
      for (std::int64_t t = 0; t < chunk; ++t) {
        Tensor x = lm_inputs(tape, embedding, sv, pos + t, vocab_size);
        StepOut so = cell_step(tape, cell, x, s);
        s = so.state;
        Tensor logits = tape.linear(so.output, head.w, head.b);
        std::vector<int> targets(static_cast<std::size_t>(sv.batch));
        for (int b = 0; b < sv.batch; ++b) targets[b] = sv.at(b, pos + t + 1);
        Tensor ce = cross_entropy_sum(tape, logits, targets);
        total = total.defined() ? tape.add(total, ce) : ce;
      }
      const auto tokens = static_cast<double>(sv.batch) *
                          static_cast<double>(chunk);
      Tensor loss = tape.scale(total, 1.0 / tokens);
      const double loss_val = loss.item();
      if (!std::isfinite(loss_val)) {
        throw CheckError("non-finite loss at step " + std::to_string(step + 1));
      }
      tape.backward(loss);
      if (cfg.clip_norm > 0.0) clip_global_norm(params, cfg.clip_norm);
      adam.step(params);
      ++step;
      epoch_nll += loss_val * tokens;
      epoch_tokens += static_cast<std::int64_t>(tokens);
      carry.copy_values_from(s);  // detach across the truncation boundary
      pos += chunk;
    }
    const double train_ppl = perplexity(epoch_nll, epoch_tokens);
    NllResult valid = lm_nll(cell, head, embedding, corpus.valid, vocab_size,
                             cfg.batch_size, cfg.truncation);
    const double valid_ppl = perplexity(valid.total_nll, valid.tokens);
    result.history.push_back(
        {step, epoch, "train", epoch_nll / static_cast<double>(epoch_tokens),
         train_ppl});
    result.history.push_back(
        {step, epoch, "valid",
         valid.total_nll / static_cast<double>(valid.tokens), valid_ppl});
    if (valid_ppl < best_valid) {
      best_valid = valid_ppl;
      best_snapshot = snapshot_values(params);
    }
  }
  if (!best_snapshot.empty()) restore_values(params, best_snapshot);
  result.best_valid_perplexity = best_valid;
  result.steps = step;
  return result;
}

// ---------------------------------------------------------------------------
// Operation-weight profile
// ---------------------------------------------------------------------------

OpWeightProfile op_weight_profile(const Cell& cell,
                                  std::span<const LabeledSequence> data,
                                  std::span<const std::string> token_names) {
  const auto* params = std::get_if<MuFuRUParams>(&cell.params);
  if (!params) {
    throw ArgumentError("operation-weight profile requires a MuFuRU cell");
  }
  const int vocab = static_cast<int>(token_names.size());
  if (cell.shape.input_size != vocab) {
    throw ArgumentError("cell input size " +
                        std::to_string(cell.shape.input_size) +
                        " does not match vocabulary of " +
                        std::to_string(vocab) + " tokens (one-hot input)");
  }
  const std::size_t l = params->ops.size();
  const int m = cell.shape.state_size;
  std::vector<std::vector<double>> acc(vocab, std::vector<double>(l, 0.0));
  std::vector<std::int64_t> count(vocab, 0);

  for (const LabeledSequence& seq : data) {
    Tape tape(false);
    Tensor s = Tensor::zeros({m});
    for (int id : seq.tokens) {
      if (id < 0 || id >= vocab) {
        throw DataError("token id " + std::to_string(id) +
                        " outside vocabulary of size " + std::to_string(vocab));
      }
      std::vector<Tensor> weights;
      StepOut so = mufuru_step(tape, *params, onehot(id, vocab), s, false,
                               &weights);
      s = so.state;
      for (std::size_t j = 0; j < l; ++j) {
        double mean = 0.0;
        for (double w : weights[j].value()) mean += w;
        acc[id][j] += mean / static_cast<double>(m);
      }
      ++count[id];
    }
  }

  OpWeightProfile profile;
  profile.tokens.assign(token_names.begin(), token_names.end());
  profile.ops = params->ops;
  profile.weights.assign(vocab, std::vector<double>(l, 0.0));
  for (int v = 0; v < vocab; ++v) {
    if (count[v] == 0) continue;
    for (std::size_t j = 0; j < l; ++j) {
      profile.weights[v][j] = acc[v][j] / static_cast<double>(count[v]);
    }
  }
  return profile;
}

void write_profile_csv(const std::string& path,
                       const OpWeightProfile& profile) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open profile file for writing: " + path);
  os << "token";
  for (CompositionOp op : profile.ops) os << ',' << op_name(op);
  os << '\n';
  char buf[64];
  for (std::size_t r = 0; r < profile.tokens.size(); ++r) {
    os << profile.tokens[r];
    for (double w : profile.weights[r]) {
      std::snprintf(buf, sizeof buf, "%.17g", w);
      os << ',' << buf;
    }
    os << '\n';
  }
  if (!os) throw IoError("failed writing profile file: " + path);
}

// ---------------------------------------------------------------------------
// Logic task
// ---------------------------------------------------------------------------

std::vector<LabeledSequence> logic_to_sequences(
    std::span<const LogicFormula> formulae) {
  std::vector<LabeledSequence> out;
  out.reserve(formulae.size());
  for (const LogicFormula& f : formulae) {
    LabeledSequence seq;
    seq.tokens.reserve(f.tokens.size());
    for (LogicToken t : f.tokens) seq.tokens.push_back(static_cast<int>(t));
    seq.label = f.label ? 1 : 0;
    out.push_back(std::move(seq));
  }
  return out;
}

LogicResult train_logic(Cell& cell, ClassifierHead& head,
                        const LogicDatasets& data, const TrainConfig& cfg) {
  if (cell.shape.input_size != kLogicVocabSize) {
    throw DimensionError("logic task needs input size " +
                         std::to_string(kLogicVocabSize) + ", cell has " +
                         std::to_string(cell.shape.input_size));
  }
  const auto train = logic_to_sequences(data.train);
  const auto dev = logic_to_sequences(data.dev);
  const auto test = logic_to_sequences(data.test);

  ClassifyResult cls = train_classifier(cell, head, nullptr, train, dev,
                                        kLogicVocabSize, 2, cfg);

  LogicResult result;
  result.history = std::move(cls.history);
  result.best_dev_accuracy = cls.best_dev_accuracy;
  result.steps = cls.steps;
  result.train_accuracy =
      evaluate_classifier(cell, head, nullptr, train, kLogicVocabSize).accuracy;
  EvalResult test_res =
      evaluate_classifier(cell, head, nullptr, test, kLogicVocabSize);
  result.test_accuracy = test_res.accuracy;
  result.history.push_back({result.steps, cfg.epochs, "test", test_res.loss,
                            test_res.accuracy});

  if (cell.kind() == CellKind::Mufuru) {
    std::vector<std::string> names;
    for (int i = 0; i < kLogicVocabSize; ++i) {
      names.emplace_back(1, logic_symbol(static_cast<LogicToken>(i)));
    }
    result.profile = op_weight_profile(cell, test, names);
  }
  return result;
}

}  // namespace mufuru
