#pragma once

// Pre-trained word vectors (word2vec binary and text formats), initialization
// of words missing from the vector file, and channel assembly per model variant.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sentcnn/corpus.hpp"
#include "sentcnn/error.hpp"
#include "sentcnn/matrix.hpp"
#include "sentcnn/rng.hpp"

namespace sentcnn::embed {

static_assert(std::endian::native == std::endian::little, "vector file I/O assumes a little-endian host");
static_assert(std::numeric_limits<float>::is_iec559);

enum class Variant { rand, static_, non_static, multichannel };

inline std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::rand: return "rand";
    case Variant::static_: return "static";
    case Variant::non_static: return "non-static";
    case Variant::multichannel: return "multichannel";
  }
  return "?";
}

inline std::optional<Variant> parse_variant(std::string_view s) {
  for (auto v : {Variant::rand, Variant::static_, Variant::non_static, Variant::multichannel})
    if (variant_name(v) == s) return v;
  return std::nullopt;
}

inline bool needs_pretrained(Variant v) { return v != Variant::rand; }

/// V x k word-vector table. Row 0 (pad) stays zero.
struct EmbeddingChannel {
  Matrix matrix;
  bool trainable = false;

  std::size_t dim() const { return matrix.cols; }

  void zero_pad_row() {
    for (double& x : matrix.row(corpus::kPadId)) x = 0.0;
  }
};

/// One record of a vector file, values kept at file precision.
struct VectorRecord {
  std::string word;
  std::vector<float> values;
};

/// Streaming reader for the word2vec binary layout:
/// `<count> <dim>\n`, then per record the word, one space, `dim` little-endian
/// binary32 values, and an optional `\n`.
class Word2VecBinaryReader {
 public:
  explicit Word2VecBinaryReader(std::istream& in) : in_(in) {
    std::string header;
    if (!std::getline(in_, header)) throw Error(ErrorKind::corrupt, "bad header");
    std::istringstream hs(header);
    long long count = -1, dim = -1;
    std::string rest;
    if (!(hs >> count >> dim) || (hs >> rest) || count < 0 || dim <= 0)
      throw Error(ErrorKind::corrupt, "bad header");
    count_ = static_cast<std::size_t>(count);
    dim_ = static_cast<std::size_t>(dim);
  }

  std::size_t count() const { return count_; }
  std::size_t dim() const { return dim_; }

  /// False once all declared records have been read.
  bool next(VectorRecord& rec) {
    if (read_ == count_) return false;
    rec.word.clear();
    for (;;) {
      const int ch = in_.get();
      if (ch == std::char_traits<char>::eof()) throw truncated();
      if (ch == ' ') break;
      // A leading newline belongs to the previous record.
      if (ch == '\n' && rec.word.empty()) continue;
      rec.word.push_back(static_cast<char>(ch));
    }
    if (rec.word.empty()) throw truncated();
    rec.values.resize(dim_);
    const auto bytes = static_cast<std::streamsize>(dim_ * sizeof(float));
    if (!in_.read(reinterpret_cast<char*>(rec.values.data()), bytes) || in_.gcount() != bytes) throw truncated();
    if (in_.peek() == '\n') in_.get();
    ++read_;
    return true;
  }

 private:
  Error truncated() const {
    return Error(ErrorKind::corrupt, "truncated record (record " + std::to_string(read_) + ")");
  }

  std::istream& in_;
  std::size_t count_ = 0;
  std::size_t dim_ = 0;
  std::size_t read_ = 0;
};

inline void write_word2vec_binary(std::ostream& out, const std::vector<VectorRecord>& records, std::size_t dim) {
  out << records.size() << ' ' << dim << '\n';
  for (const auto& r : records) {
    if (r.values.size() != dim) throw Error(ErrorKind::validation, "record '" + r.word + "' has wrong dimension");
    out << r.word << ' ';
    out.write(reinterpret_cast<const char*>(r.values.data()), static_cast<std::streamsize>(dim * sizeof(float)));
    out << '\n';
  }
}

/// Plain-text layout: `word v1 ... vk` per line. A leading `<count> <dim>`
/// line is accepted and skipped.
inline std::vector<VectorRecord> read_word2vec_text(std::istream& in, std::size_t dim) {
  std::vector<VectorRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    VectorRecord rec;
    ls >> rec.word;
    std::vector<std::string> fields;
    for (std::string f; ls >> f;) fields.push_back(f);
    if (line_no == 1 && fields.size() == 1 && dim != 1 &&
        rec.word.find_first_not_of("0123456789") == std::string::npos &&
        fields[0].find_first_not_of("0123456789") == std::string::npos) {
      if (std::stoull(fields[0]) != dim)
        throw Error(ErrorKind::validation, "vector dimension " + fields[0] + " does not match configured " +
                                               std::to_string(dim));
      continue;
    }
    if (fields.size() != dim)
      throw Error(ErrorKind::corrupt, "line " + std::to_string(line_no) + ": expected " + std::to_string(dim) +
                                          " values, got " + std::to_string(fields.size()));
    for (const auto& f : fields) {
      char* end = nullptr;
      const float v = std::strtof(f.c_str(), &end);
      if (end != f.c_str() + f.size())
        throw Error(ErrorKind::corrupt, "line " + std::to_string(line_no) + ": bad number '" + f + "'");
      rec.values.push_back(v);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

inline void write_word2vec_text(std::ostream& out, const std::vector<VectorRecord>& records) {
  char buf[32];
  for (const auto& r : records) {
    out << r.word;
    for (float v : r.values) {
      // %.9g round-trips every binary32 value.
      std::snprintf(buf, sizeof buf, " %.9g", static_cast<double>(v));
      out << buf;
    }
    out << '\n';
  }
}

/// Rows filled from a vector file for the words of a vocabulary.
struct PretrainedMatch {
  Matrix rows;                // V x k, zero where unmatched
  std::vector<char> matched;  // per vocabulary id
  std::size_t matched_count = 0;
};

namespace detail {

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

/// Exact spellings win over lowercase folds; among folds the first one seen wins.
class Matcher {
 public:
  Matcher(const corpus::Vocabulary& vocab, std::size_t dim)
      : vocab_(vocab), result_{Matrix(vocab.size(), dim), std::vector<char>(vocab.size(), 0), 0},
        exact_(vocab.size(), 0) {}

  void offer(const std::string& word, const float* values) {
    if (auto id = vocab_.find(word); id && *id != corpus::kPadId) {
      const auto i = static_cast<std::size_t>(*id);
      if (!exact_[i]) {
        exact_[i] = 1;
        fill(i, values);
      }
      return;
    }
    if (auto id = vocab_.find(ascii_lower(word)); id && *id != corpus::kPadId) {
      const auto i = static_cast<std::size_t>(*id);
      if (!result_.matched[i]) fill(i, values);
    }
  }

  PretrainedMatch finish() && { return std::move(result_); }

 private:
  void fill(std::size_t i, const float* values) {
    if (!result_.matched[i]) ++result_.matched_count;
    result_.matched[i] = 1;
    auto row = result_.rows.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = static_cast<double>(values[j]);
  }

  const corpus::Vocabulary& vocab_;
  PretrainedMatch result_;
  std::vector<char> exact_;
};

}  // namespace detail

/// Single streaming pass over a binary vector file; only vocabulary rows are kept.
inline PretrainedMatch parse_word2vec_binary(std::istream& in, const corpus::Vocabulary& vocab, std::size_t dim) {
  Word2VecBinaryReader reader(in);
  if (reader.dim() != dim)
    throw Error(ErrorKind::validation, "vector dimension " + std::to_string(reader.dim()) +
                                           " does not match configured " + std::to_string(dim));
  detail::Matcher matcher(vocab, dim);
  VectorRecord rec;
  while (reader.next(rec)) matcher.offer(rec.word, rec.values.data());
  return std::move(matcher).finish();
}

inline PretrainedMatch match_records(const std::vector<VectorRecord>& records, const corpus::Vocabulary& vocab,
                                     std::size_t dim) {
  detail::Matcher matcher(vocab, dim);
  for (const auto& r : records) matcher.offer(r.word, r.values.data());
  return std::move(matcher).finish();
}

inline constexpr double kDefaultUniformRange = 0.25;

/// Half-width a of U[-a, a].
struct InitSpec {
  double a = kDefaultUniformRange;
  std::uint64_t seed = 0;
};

/// Population variance pooled over every entry of the matched rows.
inline double pooled_variance(const PretrainedMatch& m) {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < m.rows.rows; ++i) {
    if (!m.matched[i]) continue;
    for (double x : m.rows.row(i)) {
      sum += x;
      sq += x * x;
      ++n;
    }
  }
  if (n == 0) return 0.0;
  const double mean = sum / static_cast<double>(n);
  return std::max(0.0, sq / static_cast<double>(n) - mean * mean);
}

/// a = sqrt(3 v) so that U[-a, a] has variance v; falls back to 0.25 when v = 0.
inline double variance_matched_range(const PretrainedMatch& m) {
  const double v = pooled_variance(m);
  return v > 0.0 ? std::sqrt(3.0 * v) : kDefaultUniformRange;
}

/// Draws every unmatched non-pad row from U[-a, a]. Rows are visited in id
/// order so the result depends only on the seed.
inline void fill_unknown_rows(PretrainedMatch& m, const InitSpec& init) {
  Rng rng(init.seed);
  for (std::size_t i = 1; i < m.rows.rows; ++i) {
    if (m.matched[i]) continue;
    for (double& x : m.rows.row(i)) x = rng.uniform(-init.a, init.a);
  }
}

inline void variance_matched_init(PretrainedMatch& m, std::uint64_t seed) {
  fill_unknown_rows(m, InitSpec{variance_matched_range(m), seed});
}

inline EmbeddingChannel random_channel(std::size_t vocab_size, std::size_t dim, const InitSpec& init) {
  EmbeddingChannel ch{Matrix(vocab_size, dim), true};
  Rng rng(init.seed);
  for (std::size_t i = 1; i < vocab_size; ++i)
    for (double& x : ch.matrix.row(i)) x = rng.uniform(-init.a, init.a);
  return ch;
}

/// Channels for a variant. `base` holds the pre-trained rows (unknowns already
/// filled); CNN-rand ignores it and draws every row from `rand_init`.
inline std::vector<EmbeddingChannel> assemble_channels(Variant variant, const EmbeddingChannel& base,
                                                       const InitSpec& rand_init) {
  std::vector<EmbeddingChannel> out;
  switch (variant) {
    case Variant::rand:
      out.push_back(random_channel(base.matrix.rows, base.matrix.cols, rand_init));
      break;
    case Variant::static_:
      out.push_back({base.matrix, false});
      break;
    case Variant::non_static:
      out.push_back({base.matrix, true});
      break;
    case Variant::multichannel:
      out.push_back({base.matrix, false});
      out.push_back({base.matrix, true});
      break;
  }
  for (auto& ch : out) ch.zero_pad_row();
  return out;
}

}  // namespace sentcnn::embed
