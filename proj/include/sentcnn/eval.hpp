#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "sentcnn/corpus.hpp"
#include "sentcnn/embed.hpp"
#include "sentcnn/error.hpp"
#include "sentcnn/net.hpp"

namespace sentcnn::eval {

/// Fraction of examples whose inference-mode prediction equals the label.
inline double accuracy(const net::ModelParams& p, std::span<const corpus::Example> examples) {
  if (examples.empty()) throw Error(ErrorKind::validation, "accuracy of an empty example set");
  std::size_t correct = 0;
  for (const auto& ex : examples) {
    const auto fwd = net::forward_inference(p, ex.token_ids);
    correct += net::predict_class(fwd.logits) == static_cast<std::size_t>(ex.label);
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

struct Neighbor {
  std::string word;
  double cosine = 0.0;
};

/// Cosine similarity; -1 when either vector has zero norm.
inline double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = std::sqrt(dot(a, a));
  const double nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) return -1.0;
  return dot(a, b) / (na * nb);
}

/// Top `count` words by cosine to `query`, excluding pad and the query
/// itself. Equal cosines keep vocabulary order.
inline std::vector<Neighbor> nearest_neighbors(const embed::EmbeddingChannel& channel, const corpus::Vocabulary& vocab,
                                               const std::string& query, std::size_t count) {
  const auto qid = vocab.find(query);
  if (!qid || *qid == corpus::kPadId) throw Error(ErrorKind::query, "word '" + query + "' is not in the vocabulary");
  if (channel.matrix.rows != vocab.size())
    throw Error(ErrorKind::validation, "channel rows do not match vocabulary size");
  const auto q = channel.matrix.row(static_cast<std::size_t>(*qid));
  std::vector<std::pair<double, corpus::TokenId>> scored;
  scored.reserve(vocab.size());
  for (std::size_t i = 1; i < vocab.size(); ++i) {
    const auto id = static_cast<corpus::TokenId>(i);
    if (id == *qid) continue;
    scored.emplace_back(cosine(q, channel.matrix.row(i)), id);
  }
  const std::size_t n = std::min(count, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(),
                    [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
  std::vector<Neighbor> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back({vocab.word(scored[i].second), scored[i].first});
  return out;
}

/// Neighbor lists of one query word, one list per channel.
struct NeighborReport {
  std::string query;
  std::vector<std::vector<Neighbor>> per_channel;
};

inline NeighborReport neighbor_report(const net::ModelParams& p, const corpus::Vocabulary& vocab,
                                      const std::string& query, std::size_t count) {
  NeighborReport r{query, {}};
  for (const auto& ch : p.channels) r.per_channel.push_back(nearest_neighbors(ch, vocab, query, count));
  return r;
}

/// Side-by-side rows: `rank<TAB>word<TAB>cosine` with one word/cosine pair per channel.
inline void write_neighbor_report(std::ostream& os, const NeighborReport& r, std::span<const std::string> headers) {
  os << "# query\t" << r.query << '\n';
  os << "rank";
  for (const auto& h : headers) os << '\t' << h << "\tcosine";
  os << '\n';
  std::size_t rows = 0;
  for (const auto& l : r.per_channel) rows = std::max(rows, l.size());
  char buf[32];
  for (std::size_t i = 0; i < rows; ++i) {
    os << (i + 1);
    for (const auto& l : r.per_channel) {
      if (i < l.size()) {
        std::snprintf(buf, sizeof buf, "%.6f", l[i].cosine);
        os << '\t' << l[i].word << '\t' << buf;
      } else {
        os << "\t\t";
      }
    }
    os << '\n';
  }
}

}  // namespace sentcnn::eval
