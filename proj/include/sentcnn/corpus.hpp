#pragma once

// Labeled sentence datasets: tokenization, vocabulary, index encoding and
// the cross-validation / dev-split plans.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sentcnn/error.hpp"
#include "sentcnn/rng.hpp"

namespace sentcnn::corpus {

using TokenId = std::int32_t;
inline constexpr TokenId kPadId = 0;
// Contains characters the tokenizer always strips, so it can never be produced from text.
inline constexpr std::string_view kPadToken = "<pad>";

namespace detail {

inline bool is_alnum(unsigned char ch) {
  return (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9');
}

inline bool is_isolated_punct(char ch) {
  return ch == ',' || ch == '!' || ch == '?' || ch == '(' || ch == ')';
}

// Suffixes detached from the preceding word ("don't" -> "do n't").
inline constexpr std::string_view kClitics[] = {"n't", "'s", "'ve", "'re", "'d", "'ll"};

inline bool clitic_at(std::string_view s, std::size_t pos) {
  for (auto c : kClitics)
    if (s.substr(pos, c.size()) == c) return true;
  return false;
}

}  // namespace detail

/// Lowercases, detaches clitics, isolates `, ! ? ( )` and blanks every other
/// non-alphanumeric byte except the apostrophe. Idempotent on its own output.
inline std::vector<std::string> clean_and_tokenize(std::string_view raw) {
  std::string mapped;
  mapped.reserve(raw.size() + 8);
  for (char ch : raw) {
    const auto u = static_cast<unsigned char>(ch);
    if (detail::is_alnum(u)) {
      mapped.push_back(static_cast<char>(u >= 'A' && u <= 'Z' ? u - 'A' + 'a' : u));
    } else if (ch == '\'') {
      mapped.push_back(ch);
    } else if (detail::is_isolated_punct(ch)) {
      mapped.push_back(' ');
      mapped.push_back(ch);
      mapped.push_back(' ');
    } else {
      mapped.push_back(' ');
    }
  }

  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  const std::string_view view(mapped);
  for (std::size_t i = 0; i < view.size(); ++i) {
    const char ch = view[i];
    if (ch == ' ') {
      flush();
      continue;
    }
    if (!current.empty() && detail::clitic_at(view, i)) flush();
    current.push_back(ch);
  }
  flush();
  return tokens;
}

/// Bidirectional word <-> id map. Id 0 is the padding token.
class Vocabulary {
 public:
  Vocabulary() { add(std::string(kPadToken)); }

  /// Returns the id of `word`, inserting it if new.
  TokenId add(const std::string& word) {
    auto [it, inserted] = word_to_id_.try_emplace(word, static_cast<TokenId>(id_to_word_.size()));
    if (inserted) id_to_word_.push_back(word);
    return it->second;
  }

  std::optional<TokenId> find(std::string_view word) const {
    auto it = word_to_id_.find(std::string(word));
    if (it == word_to_id_.end()) return std::nullopt;
    return it->second;
  }

  /// Unknown words map to the pad id.
  TokenId id_or_pad(std::string_view word) const { return find(word).value_or(kPadId); }

  const std::string& word(TokenId id) const { return id_to_word_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return id_to_word_.size(); }
  const std::vector<std::string>& words() const { return id_to_word_; }

 private:
  std::unordered_map<std::string, TokenId> word_to_id_;
  std::vector<std::string> id_to_word_;
};

struct TokenizedExample {
  std::vector<std::string> tokens;
  int label = 0;
};

struct Example {
  std::vector<TokenId> token_ids;
  int label = 0;
};

/// Index lists into Dataset::examples.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> dev;
  std::vector<std::size_t> test;
};

struct Dataset {
  std::vector<Example> examples;
  int num_classes = 0;
  std::optional<Split> split;
};

/// Ids follow first-occurrence order over the examples.
inline Vocabulary build_vocabulary(std::span<const TokenizedExample> data) {
  if (data.empty()) throw Error(ErrorKind::validation, "empty corpus");
  Vocabulary vocab;
  for (const auto& ex : data)
    for (const auto& tok : ex.tokens) vocab.add(tok);
  return vocab;
}

inline std::vector<TokenId> encode_and_pad(std::span<const std::string> tokens, const Vocabulary& vocab,
                                           std::size_t max_width) {
  std::vector<TokenId> ids;
  ids.reserve(std::max(tokens.size(), max_width));
  for (const auto& t : tokens) ids.push_back(vocab.id_or_pad(t));
  if (ids.size() < max_width) ids.resize(max_width, kPadId);
  return ids;
}

inline std::vector<Example> encode_all(std::span<const TokenizedExample> data, const Vocabulary& vocab,
                                       std::size_t max_width) {
  std::vector<Example> out;
  out.reserve(data.size());
  for (const auto& ex : data) out.push_back({encode_and_pad(ex.tokens, vocab, max_width), ex.label});
  return out;
}

/// Assignment of every example to one of n_folds folds.
struct FoldPlan {
  std::vector<int> fold_of;
  int n_folds = 0;

  std::vector<std::size_t> sizes() const {
    std::vector<std::size_t> s(static_cast<std::size_t>(n_folds), 0);
    for (int f : fold_of) ++s[static_cast<std::size_t>(f)];
    return s;
  }

  std::vector<std::size_t> members(int fold) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
      if (fold_of[i] == fold) idx.push_back(i);
    return idx;
  }

  std::vector<std::size_t> complement(int fold) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
      if (fold_of[i] != fold) idx.push_back(i);
    return idx;
  }

  std::uint64_t fingerprint() const {
    Fnv1a h;
    h.update(&n_folds, sizeof n_folds);
    h.update_values(fold_of);
    return h.digest();
  }

  /// `<example-index>\t<fold-id>` per line.
  void write(std::ostream& os) const {
    for (std::size_t i = 0; i < fold_of.size(); ++i) os << i << '\t' << fold_of[i] << '\n';
  }
};

/// Shuffled round-robin: position p of a seeded permutation goes to fold p mod n_folds.
inline FoldPlan assign_folds(std::size_t n_examples, int n_folds, std::uint64_t seed) {
  if (n_folds < 2) throw Error(ErrorKind::validation, "need at least 2 folds");
  if (n_examples < static_cast<std::size_t>(n_folds))
    throw Error(ErrorKind::validation, "fewer examples (" + std::to_string(n_examples) + ") than folds (" +
                                           std::to_string(n_folds) + ")");
  Rng rng(seed);
  const auto perm = random_permutation(n_examples, rng);
  FoldPlan plan{std::vector<int>(n_examples, 0), n_folds};
  for (std::size_t p = 0; p < n_examples; ++p)
    plan.fold_of[perm[p]] = static_cast<int>(p % static_cast<std::size_t>(n_folds));
  return plan;
}

/// Carves round(fraction * N) of `indices` out as a dev set. Both halves keep
/// the input order.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> select_dev_split(
    std::span<const std::size_t> indices, double fraction, std::uint64_t seed) {
  const std::size_t n = indices.size();
  if (n < 10) throw Error(ErrorKind::validation, "need at least 10 examples to carve a dev split");
  const auto dev_n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  Rng rng(seed);
  const auto perm = random_permutation(n, rng);
  std::vector<char> is_dev(n, 0);
  for (std::size_t p = 0; p < dev_n; ++p) is_dev[perm[p]] = 1;
  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> out;
  out.first.reserve(n - dev_n);
  out.second.reserve(dev_n);
  for (std::size_t i = 0; i < n; ++i) (is_dev[i] ? out.second : out.first).push_back(indices[i]);
  return out;
}

/// Reads `<label>\t<sentence>` lines. Blank lines are skipped; `origin` names
/// the source in diagnostics.
inline std::vector<TokenizedExample> read_labeled_text(std::istream& in, const std::string& origin) {
  std::vector<TokenizedExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto tab = line.find('\t');
    auto fail = [&](const std::string& why) {
      return Error(ErrorKind::validation, origin + ":" + std::to_string(line_no) + ": " + why);
    };
    if (tab == std::string::npos) throw fail("expected <label><TAB><sentence>");
    const std::string label_text = line.substr(0, tab);
    int label = 0;
    std::size_t used = 0;
    try {
      label = std::stoi(label_text, &used);
    } catch (const std::exception&) {
      throw fail("bad label '" + label_text + "'");
    }
    if (used != label_text.size() || label < 0) throw fail("bad label '" + label_text + "'");
    out.push_back({clean_and_tokenize(std::string_view(line).substr(tab + 1)), label});
  }
  return out;
}

inline std::vector<TokenizedExample> load_labeled_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::validation, "cannot open dataset file " + path);
  return read_labeled_text(in, path);
}

inline int count_classes(std::span<const TokenizedExample> data) {
  int c = 0;
  for (const auto& ex : data) c = std::max(c, ex.label + 1);
  return c;
}

/// The per-dataset summary figures: classes, mean length, size, vocabulary.
struct CorpusStats {
  int num_classes = 0;
  double mean_length = 0.0;
  std::size_t size = 0;
  std::size_t vocab_size = 0;  // excludes the pad token
};

inline CorpusStats corpus_stats(std::span<const TokenizedExample> data) {
  CorpusStats s;
  s.size = data.size();
  s.num_classes = count_classes(data);
  std::size_t tokens = 0;
  for (const auto& ex : data) tokens += ex.tokens.size();
  s.mean_length = data.empty() ? 0.0 : static_cast<double>(tokens) / static_cast<double>(data.size());
  s.vocab_size = data.empty() ? 0 : build_vocabulary(data).size() - 1;
  return s;
}

}  // namespace sentcnn::corpus
