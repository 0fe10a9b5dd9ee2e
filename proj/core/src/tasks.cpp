#include "mufuru/tasks.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "mufuru/errors.hpp"

namespace mufuru {

// ---------------------------------------------------------------------------
// Logic formulae
// ---------------------------------------------------------------------------

char logic_symbol(LogicToken t) {
  switch (t) {
    case LogicToken::False: return '0';
    case LogicToken::True: return '1';
    case LogicToken::And: return '&';
    case LogicToken::Or: return '|';
    case LogicToken::Xor: return '^';
    case LogicToken::Implies: return '>';
  }
  return '?';
}

std::optional<LogicToken> logic_token_from_symbol(char c) {
  switch (c) {
    case '0': return LogicToken::False;
    case '1': return LogicToken::True;
    case '&': return LogicToken::And;
    case '|': return LogicToken::Or;
    case '^': return LogicToken::Xor;
    case '>': return LogicToken::Implies;
    default: return std::nullopt;
  }
}

bool is_gate(LogicToken t) {
  return t != LogicToken::False && t != LogicToken::True;
}

static bool apply_gate(LogicToken gate, bool a, bool b) {
  switch (gate) {
    case LogicToken::And: return a && b;
    case LogicToken::Or: return a || b;
    case LogicToken::Xor: return a != b;
    case LogicToken::Implies: return !a || b;
    default:
      throw ArgumentError("apply_gate on a value token");
  }
}

bool eval_formula(std::span<const LogicToken> tokens) {
  if (tokens.empty() || tokens.size() % 2 == 0) {
    throw ParseError("formula must have an odd number of tokens (2k+1), got " +
                     std::to_string(tokens.size()));
  }
  // Expected pattern: v1 v2 g1 v3 g2 ... -> value at even positions except
  // position 1, gates at odd positions >= 2 in (gate, value) pairs.
  if (is_gate(tokens[0])) {
    throw ParseError("expected truth value at position 0");
  }
  if (tokens.size() == 1) return tokens[0] == LogicToken::True;
  if (is_gate(tokens[1])) {
    throw ParseError("expected truth value at position 1");
  }
  bool acc = tokens[0] == LogicToken::True;
  bool pending = tokens[1] == LogicToken::True;
  std::size_t i = 2;
  for (;;) {
    if (i >= tokens.size() || !is_gate(tokens[i])) {
      throw ParseError("expected gate at position " + std::to_string(i));
    }
    acc = apply_gate(tokens[i], acc, pending);
    ++i;
    if (i == tokens.size()) return acc;
    if (is_gate(tokens[i])) {
      throw ParseError("expected truth value at position " + std::to_string(i));
    }
    pending = tokens[i] == LogicToken::True;
    ++i;
  }
}

LogicFormula sample_formula(int num_gates, Rng& rng,
                            std::span<const LogicToken> gate_set) {
  if (num_gates < 1) throw ArgumentError("num_gates must be >= 1");
  if (gate_set.empty()) throw ArgumentError("gate set must be non-empty");
  LogicFormula f;
  f.tokens.reserve(2 * static_cast<std::size_t>(num_gates) + 1);
  auto value = [&rng] {
    return rng.coin() ? LogicToken::True : LogicToken::False;
  };
  // Token order v1 v2 g1 v3 g2 ...
  f.tokens.push_back(value());
  for (int g = 0; g < num_gates; ++g) {
    f.tokens.push_back(value());
    f.tokens.push_back(gate_set[rng.below(gate_set.size())]);
  }
  f.label = eval_formula(f.tokens);
  return f;
}

LogicDatasets generate_logic_datasets(Rng& rng, const LogicGenConfig& cfg) {
  if (cfg.train_count < 1 || cfg.test_count < 0) {
    throw ArgumentError("logic dataset counts must be positive");
  }
  LogicDatasets out;
  std::set<std::vector<LogicToken>> train_seqs;
  std::vector<LogicFormula> train_pool;
  while (static_cast<int>(train_pool.size()) < cfg.train_count) {
    const int gates = cfg.train_min_gates +
                      static_cast<int>(rng.below(
                          cfg.train_max_gates - cfg.train_min_gates + 1));
    LogicFormula f = sample_formula(gates, rng, cfg.gate_set);
    train_pool.push_back(f);
    train_seqs.insert(f.tokens);
  }
  while (static_cast<int>(out.test.size()) < cfg.test_count) {
    const int gates = cfg.test_min_gates +
                      static_cast<int>(rng.below(
                          cfg.test_max_gates - cfg.test_min_gates + 1));
    LogicFormula f = sample_formula(gates, rng, cfg.gate_set);
    if (train_seqs.contains(f.tokens)) continue;  // resample on collision
    out.test.push_back(std::move(f));
  }
  // Dev split carved from the training pool, seeded by the same generator.
  std::vector<std::size_t> order(train_pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  const auto dev_count = static_cast<std::size_t>(
      cfg.dev_fraction * static_cast<double>(train_pool.size()));
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i < dev_count) {
      out.dev.push_back(train_pool[order[i]]);
    } else {
      out.train.push_back(train_pool[order[i]]);
    }
  }
  return out;
}

void save_logic_file(const std::string& path,
                     std::span<const LogicFormula> formulae) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open logic file for writing: " + path);
  for (const LogicFormula& f : formulae) {
    for (std::size_t i = 0; i < f.tokens.size(); ++i) {
      if (i) os << ' ';
      os << logic_symbol(f.tokens[i]);
    }
    os << '\t' << (f.label ? '1' : '0') << '\n';
  }
  if (!os) throw IoError("failed writing logic file: " + path);
}

std::vector<LogicFormula> load_logic_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open logic file: " + path);
  std::vector<LogicFormula> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError("logic file line " + std::to_string(line_no) +
                      ": missing label column");
    }
    LogicFormula f;
    std::istringstream ts(line.substr(0, tab));
    std::string sym;
    while (ts >> sym) {
      if (sym.size() != 1) {
        throw DataError("logic file line " + std::to_string(line_no) +
                        ": bad token '" + sym + "'");
      }
      auto tok = logic_token_from_symbol(sym[0]);
      if (!tok) {
        throw DataError("logic file line " + std::to_string(line_no) +
                        ": bad token '" + sym + "'");
      }
      f.tokens.push_back(*tok);
    }
    const std::string label_str = line.substr(tab + 1);
    if (label_str != "0" && label_str != "1") {
      throw DataError("logic file line " + std::to_string(line_no) +
                      ": label must be 0 or 1");
    }
    f.label = label_str == "1";
    bool expect = false;
    try {
      expect = eval_formula(f.tokens);
    } catch (const ParseError& e) {
      throw DataError("logic file line " + std::to_string(line_no) + ": " +
                      e.what());
    }
    if (expect != f.label) {
      throw DataError("logic file line " + std::to_string(line_no) +
                      ": label disagrees with formula evaluation");
    }
    out.push_back(std::move(f));
  }
  return out;
}

Tensor onehot(int id, int vocab_size) {
  if (id < 0 || id >= vocab_size) {
    throw DataError("token id " + std::to_string(id) +
                    " outside vocabulary of size " + std::to_string(vocab_size));
  }
  Tensor t = Tensor::zeros({vocab_size});
  t.value()[static_cast<std::size_t>(id)] = 1.0;
  return t;
}

std::vector<Tensor> encode_onehot(std::span<const int> ids, int vocab_size) {
  std::vector<Tensor> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(onehot(id, vocab_size));
  return out;
}

// ---------------------------------------------------------------------------
// Text corpora
// ---------------------------------------------------------------------------

namespace {

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open file: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return std::move(ss).str();
}

std::vector<std::string> tokenize(const std::string& text, TokenLevel level) {
  std::vector<std::string> tokens;
  if (level == TokenLevel::Word) {
    std::istringstream ss(text);
    std::string tok;
    while (ss >> tok) tokens.push_back(tok);
  } else {
    // UTF-8 code points; bytes with malformed continuation fall back to
    // single-byte tokens.
    std::size_t i = 0;
    while (i < text.size()) {
      const auto b = static_cast<unsigned char>(text[i]);
      std::size_t len = 1;
      if ((b & 0xE0) == 0xC0) len = 2;
      else if ((b & 0xF0) == 0xE0) len = 3;
      else if ((b & 0xF8) == 0xF0) len = 4;
      if (i + len > text.size()) len = 1;
      tokens.push_back(text.substr(i, len));
      i += len;
    }
  }
  return tokens;
}

std::vector<std::pair<std::string, std::int64_t>> count_tokens(
    const std::vector<std::string>& tokens) {
  std::unordered_map<std::string, std::int64_t> counts;
  for (const std::string& t : tokens) ++counts[t];
  return {counts.begin(), counts.end()};
}

std::unordered_map<std::string, int> vocab_index(
    const std::vector<std::string>& vocab) {
  std::unordered_map<std::string, int> index;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    index.emplace(vocab[i], static_cast<int>(i));
  }
  return index;
}

std::vector<int> map_ids(const std::vector<std::string>& tokens,
                         const std::unordered_map<std::string, int>& index) {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const std::string& t : tokens) {
    auto it = index.find(t);
    ids.push_back(it == index.end() ? kUnkId : it->second);
  }
  return ids;
}

}  // namespace

std::vector<std::string> build_vocab(
    const std::vector<std::pair<std::string, std::int64_t>>& counts,
    int max_vocab) {
  if (max_vocab < 1) throw ArgumentError("max_vocab must be >= 1");
  std::vector<std::pair<std::string, std::int64_t>> sorted = counts;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> vocab{kUnkToken};
  for (const auto& [token, count] : sorted) {
    if (static_cast<int>(vocab.size()) >= max_vocab) break;
    vocab.push_back(token);
  }
  return vocab;
}

TextCorpus load_text_corpus(const std::string& train_path,
                            const std::string& valid_path,
                            const std::string& test_path, int max_vocab,
                            TokenLevel level) {
  const auto train_tokens = tokenize(read_file(train_path), level);
  if (train_tokens.empty()) {
    throw DataError("training corpus is empty: " + train_path);
  }
  TextCorpus corpus;
  corpus.vocab = build_vocab(count_tokens(train_tokens), max_vocab);
  const auto index = vocab_index(corpus.vocab);
  corpus.train = map_ids(train_tokens, index);
  corpus.valid = map_ids(tokenize(read_file(valid_path), level), index);
  corpus.test = map_ids(tokenize(read_file(test_path), level), index);
  return corpus;
}

// ---------------------------------------------------------------------------
// Labeled sequences
// ---------------------------------------------------------------------------

namespace {

struct RawRecord {
  std::string label;
  std::vector<std::string> tokens;
};

std::vector<RawRecord> read_tsv(const std::string& path, TokenLevel level) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open dataset: " + path);
  std::vector<RawRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError("line " + std::to_string(line_no) +
                      ": expected label<TAB>tokens");
    }
    RawRecord rec;
    rec.label = line.substr(0, tab);
    rec.tokens = tokenize(line.substr(tab + 1), level);
    if (rec.label.empty()) {
      throw DataError("line " + std::to_string(line_no) + ": empty label");
    }
    if (rec.tokens.empty()) {
      throw DataError("line " + std::to_string(line_no) +
                      ": empty token sequence");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace

SequenceDataset load_labeled_sequences(const std::string& path, int max_vocab,
                                       TokenLevel level) {
  const auto records = read_tsv(path, level);
  SequenceDataset ds;
  std::vector<std::string> all_tokens;
  for (const RawRecord& r : records) {
    all_tokens.insert(all_tokens.end(), r.tokens.begin(), r.tokens.end());
  }
  ds.vocab = build_vocab(count_tokens(all_tokens), max_vocab);
  const auto index = vocab_index(ds.vocab);
  std::unordered_map<std::string, int> label_ids;
  for (const RawRecord& r : records) {
    auto [it, inserted] =
        label_ids.emplace(r.label, static_cast<int>(ds.label_names.size()));
    if (inserted) ds.label_names.push_back(r.label);
    ds.items.push_back({map_ids(r.tokens, index), it->second});
  }
  return ds;
}

SequenceDataset load_labeled_sequences_with(const std::string& path,
                                            const SequenceDataset& reference,
                                            TokenLevel level) {
  const auto records = read_tsv(path, level);
  SequenceDataset ds;
  ds.vocab = reference.vocab;
  ds.label_names = reference.label_names;
  const auto index = vocab_index(ds.vocab);
  std::unordered_map<std::string, int> label_ids;
  for (std::size_t i = 0; i < ds.label_names.size(); ++i) {
    label_ids.emplace(ds.label_names[i], static_cast<int>(i));
  }
  int line_no = 0;
  for (const RawRecord& r : records) {
    ++line_no;
    auto it = label_ids.find(r.label);
    if (it == label_ids.end()) {
      throw DataError("record " + std::to_string(line_no) + ": label '" +
                      r.label + "' not present in the reference split");
    }
    ds.items.push_back({map_ids(r.tokens, index), it->second});
  }
  return ds;
}

}  // namespace mufuru
