#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mufuru/rng.hpp"
#include "mufuru/tensor.hpp"

namespace mufuru {

// ---------------------------------------------------------------------------
// Propositional-logic task
// ---------------------------------------------------------------------------

/// Fixed, ordered vocabulary; the one-hot index of a token is its position
/// in this list.
enum class LogicToken { False = 0, True = 1, And = 2, Or = 3, Xor = 4, Implies = 5 };

inline constexpr int kLogicVocabSize = 6;

/// File symbols: 0 1 & | ^ >
char logic_symbol(LogicToken t);
std::optional<LogicToken> logic_token_from_symbol(char c);
bool is_gate(LogicToken t);

/// Token pattern v1 v2 g1 v3 g2 ... : values and gates strictly alternate
/// after the first two values; k gates means exactly 2k+1 tokens.
struct LogicFormula {
  std::vector<LogicToken> tokens;
  bool label = false;
};

/// Left-to-right fold: acc <- v1, then acc <- g_i(acc, v_{i+1}) in order.
/// IMPLIES(a,b) = !a or b. Throws ParseError naming the offending position
/// on a malformed pattern.
bool eval_formula(std::span<const LogicToken> tokens);

inline constexpr std::array<LogicToken, 4> kDefaultGateSet = {
    LogicToken::And, LogicToken::Or, LogicToken::Xor, LogicToken::Implies};

/// Uniform truth values and gates; the label comes from eval_formula.
LogicFormula sample_formula(int num_gates, Rng& rng,
                            std::span<const LogicToken> gate_set = kDefaultGateSet);

struct LogicGenConfig {
  int train_count = 1000;
  int test_count = 1000;
  int train_min_gates = 5;
  int train_max_gates = 10;
  int test_min_gates = 11;
  int test_max_gates = 20;
  double dev_fraction = 0.10;  // carved from the training formulae
  std::vector<LogicToken> gate_set{kDefaultGateSet.begin(), kDefaultGateSet.end()};
};

struct LogicDatasets {
  std::vector<LogicFormula> train;
  std::vector<LogicFormula> dev;
  std::vector<LogicFormula> test;
};

/// Train and test sequences are disjoint as exact token sequences; collisions
/// are resampled. Deterministic given the generator state.
LogicDatasets generate_logic_datasets(Rng& rng, const LogicGenConfig& cfg = {});

/// One formula per line: space-separated symbols, then a tab, then the label.
void save_logic_file(const std::string& path,
                     std::span<const LogicFormula> formulae);
/// Validates the token pattern and that each stored label matches
/// eval_formula of its tokens.
std::vector<LogicFormula> load_logic_file(const std::string& path);

/// One vector per token: 1.0 at the token id, 0 elsewhere.
std::vector<Tensor> encode_onehot(std::span<const int> ids, int vocab_size);
Tensor onehot(int id, int vocab_size);

// ---------------------------------------------------------------------------
// Text corpora (language modeling)
// ---------------------------------------------------------------------------

inline constexpr int kUnkId = 0;
inline constexpr const char* kUnkToken = "<unk>";

enum class TokenLevel { Word, Char };

struct TextCorpus {
  std::vector<std::string> vocab;  // vocab[0] == "<unk>"
  std::vector<int> train;
  std::vector<int> valid;
  std::vector<int> test;
};

/// Whitespace tokens (word level) or UTF-8 code points (char level). The
/// vocabulary holds the most frequent max_vocab-1 training tokens plus the
/// UNK entry; ties break lexicographically and ids are assigned by
/// descending frequency then lexicographic order. Valid/test tokens missing
/// from the vocabulary map to UNK.
TextCorpus load_text_corpus(const std::string& train_path,
                            const std::string& valid_path,
                            const std::string& test_path, int max_vocab,
                            TokenLevel level);

/// Vocabulary construction alone, shared with the labeled-sequence loader.
std::vector<std::string> build_vocab(
    const std::vector<std::pair<std::string, std::int64_t>>& counts,
    int max_vocab);

// ---------------------------------------------------------------------------
// Labeled sequences (classification)
// ---------------------------------------------------------------------------

struct LabeledSequence {
  std::vector<int> tokens;
  int label = 0;
};

struct SequenceDataset {
  std::vector<LabeledSequence> items;
  std::vector<std::string> vocab;        // vocab[0] == "<unk>"
  std::vector<std::string> label_names;  // first-appearance order
};

/// Tab-separated records: label<TAB>token token token... Labels map to
/// contiguous indices in first-appearance order; tokens are vocabularized
/// with the same frequency/tie rule as text corpora.
SequenceDataset load_labeled_sequences(const std::string& path,
                                       int max_vocab = 1 << 20,
                                       TokenLevel level = TokenLevel::Word);

/// Loads a split reusing an existing vocabulary and label table (unknown
/// tokens become UNK; an unknown label is a data error).
SequenceDataset load_labeled_sequences_with(const std::string& path,
                                            const SequenceDataset& reference,
                                            TokenLevel level = TokenLevel::Word);

}  // namespace mufuru
