#pragma once

// Command-line front end: train, predict, neighbors, inspect-data.
//
// Exit codes: 0 success, 1 usage, 2 validation, 3 corrupt artifact,
// 4 query error.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "sentcnn/checkpoint.hpp"
#include "sentcnn/corpus.hpp"
#include "sentcnn/embed.hpp"
#include "sentcnn/error.hpp"
#include "sentcnn/eval.hpp"
#include "sentcnn/net.hpp"
#include "sentcnn/optim.hpp"
#include "sentcnn/pipeline.hpp"

namespace sentcnn::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kValidation = 2, kCorrupt = 3, kQuery = 4 };

inline int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::usage: return kUsage;
    case ErrorKind::validation: return kValidation;
    case ErrorKind::corrupt: return kCorrupt;
    case ErrorKind::query: return kQuery;
    case ErrorKind::numeric: return kValidation;
  }
  return kValidation;
}

struct Options {
  std::string config;
  std::vector<std::string> data;
  std::string vectors;
  std::string variant;
  bool cv = false;
  std::optional<std::uint64_t> seed;
  std::string checkpoint;
  std::string out;
  std::vector<std::string> text;
  std::string word;
  std::size_t count = 4;
};

namespace detail {

inline std::string fmt(double v, const char* spec = "%.17g") {
  char buf[40];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

/// Data files in order train[, test] or train, dev, test.
struct LoadedData {
  std::vector<corpus::TokenizedExample> all;
  corpus::Split split;
  bool has_test = false;
};

inline LoadedData load_data(const std::vector<std::string>& paths) {
  if (paths.empty() || paths.size() > 3) throw Error(ErrorKind::usage, "--data takes 1 to 3 files (train [[dev] test])");
  LoadedData d;
  std::vector<std::vector<std::size_t>*> roles;
  if (paths.size() == 1) roles = {&d.split.train};
  if (paths.size() == 2) roles = {&d.split.train, &d.split.test};
  if (paths.size() == 3) roles = {&d.split.train, &d.split.dev, &d.split.test};
  for (std::size_t i = 0; i < paths.size(); ++i) {
    auto part = corpus::load_labeled_file(paths[i]);
    if (part.empty()) throw Error(ErrorKind::validation, paths[i] + ": no examples");
    for (auto& ex : part) {
      roles[i]->push_back(d.all.size());
      d.all.push_back(std::move(ex));
    }
  }
  d.has_test = paths.size() >= 2;
  return d;
}

inline bool has_suffix(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

/// `.txt` / `.vec` files use the text layout, anything else the binary one.
/// When `dim` is 0 the binary header decides it.
inline embed::PretrainedMatch load_vectors(const std::string& path, const corpus::Vocabulary& vocab, std::size_t dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::validation, "cannot open vectors file " + path);
  try {
    if (has_suffix(path, ".txt") || has_suffix(path, ".vec")) {
      if (dim == 0) throw Error(ErrorKind::usage, "text vector files need a configured dim");
      return embed::match_records(embed::read_word2vec_text(in, dim), vocab, dim);
    }
    if (dim == 0) {
      const auto pos = in.tellg();
      embed::Word2VecBinaryReader probe(in);
      dim = probe.dim();
      in.seekg(pos);
    }
    return embed::parse_word2vec_binary(in, vocab, dim);
  } catch (const Error& e) {
    throw Error(e.kind(), path + ": " + e.what());
  }
}

inline optim::TrainConfig load_config(const Options& o) {
  optim::TrainConfig cfg;
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw Error(ErrorKind::validation, "cannot open config file " + o.config);
    cfg = optim::parse_config(in, o.config);
  }
  if (!o.variant.empty()) {
    auto v = embed::parse_variant(o.variant);
    if (!v) throw Error(ErrorKind::usage, "unknown variant '" + o.variant + "'");
    cfg.variant = *v;
  }
  if (o.seed) cfg.seed = *o.seed;
  cfg.validate();
  return cfg;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::validation, "cannot write " + path);
  return f;
}

}  // namespace detail

inline int cmd_train(const Options& o, std::ostream& out) {
  const auto cfg = detail::load_config(o);
  if (embed::needs_pretrained(cfg.variant) && o.vectors.empty())
    throw Error(ErrorKind::validation, std::string(embed::variant_name(cfg.variant)) + " variant requires --vectors");
  const auto data = detail::load_data(o.data);
  const int classes = corpus::count_classes(data.all);
  if (classes < 2) throw Error(ErrorKind::validation, "dataset needs at least 2 classes");
  auto vocab = corpus::build_vocabulary(data.all);
  const auto examples = corpus::encode_all(data.all, vocab, cfg.max_width());

  std::optional<embed::PretrainedMatch> match;
  if (!o.vectors.empty()) match = detail::load_vectors(o.vectors, vocab, cfg.dim);
  const auto base = base_channel(vocab, cfg, match ? &*match : nullptr);

  if (o.cv) {
    if (data.has_test) throw Error(ErrorKind::usage, "--cv takes a single --data file");
    const auto report = eval::run_cross_validation(examples, static_cast<std::size_t>(classes), base, cfg);
    out << "# seed=" << cfg.seed << " variant=" << report.variant << " config=" << eval::hex64(report.config_fingerprint)
        << " folds=" << eval::hex64(report.fold_plan_fingerprint) << '\n';
    eval::write_cv_csv(out, report);
    if (!o.out.empty()) {
      auto f = detail::open_out(o.out);
      eval::write_cv_tsv(f, report);
    }
    return kOk;
  }

  const auto result = train_holdout(examples, data.split, static_cast<std::size_t>(classes), base, cfg);
  out << "seed\t" << cfg.seed << '\n';
  out << "variant\t" << embed::variant_name(cfg.variant) << '\n';
  out << "best_epoch\t" << result.fit.best_epoch << '\n';
  out << "dev_accuracy\t" << detail::fmt(result.dev_accuracy) << '\n';
  if (result.test_accuracy) out << "test_accuracy\t" << detail::fmt(*result.test_accuracy) << '\n';
  if (!o.checkpoint.empty())
    checkpoint::save_checkpoint(o.checkpoint, {cfg, std::move(vocab), result.fit.best, result.fit.history});
  if (!o.out.empty()) {
    auto f = detail::open_out(o.out);
    optim::write_history_csv(f, result.fit.history);
  }
  return kOk;
}

/// `<class>\t<p_0>\t...\t<p_{c-1}>` for one sentence.
inline std::string predict_line(const checkpoint::Checkpoint& ck, const std::string& sentence) {
  const auto tokens = corpus::clean_and_tokenize(sentence);
  const auto ids = corpus::encode_and_pad(tokens, ck.vocab, ck.params.max_width());
  const auto fwd = net::forward_inference(ck.params, ids);
  const auto probs = net::softmax(fwd.logits);
  std::string line = std::to_string(net::predict_class(fwd.logits));
  for (double pr : probs) line += '\t' + detail::fmt(pr);
  return line;
}

inline int cmd_predict(const Options& o, std::istream& in, std::ostream& out) {
  if (o.checkpoint.empty()) throw Error(ErrorKind::usage, "predict requires --checkpoint");
  const auto ck = checkpoint::load_checkpoint(o.checkpoint);
  if (!o.text.empty()) {
    for (const auto& t : o.text) out << predict_line(ck, t) << '\n';
    return kOk;
  }
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out << predict_line(ck, line) << '\n';
  }
  return kOk;
}

inline int cmd_neighbors(const Options& o, std::ostream& out) {
  if (o.checkpoint.empty()) throw Error(ErrorKind::usage, "neighbors requires --checkpoint");
  if (o.word.empty()) throw Error(ErrorKind::usage, "neighbors requires --word");
  const auto ck = checkpoint::load_checkpoint(o.checkpoint);
  const auto report = eval::neighbor_report(ck.params, ck.vocab, o.word, o.count);
  std::vector<std::string> headers;
  for (const auto& ch : ck.params.channels) headers.emplace_back(ch.trainable ? "non-static" : "static");
  eval::write_neighbor_report(out, report, headers);
  return kOk;
}

inline int cmd_inspect(const Options& o, std::ostream& out) {
  const auto data = detail::load_data(o.data);
  const auto stats = corpus::corpus_stats(data.all);
  out << "c\t" << stats.num_classes << '\n';
  out << "l\t" << detail::fmt(stats.mean_length, "%.1f") << '\n';
  out << "N\t" << stats.size << '\n';
  out << "V\t" << stats.vocab_size << '\n';
  if (!o.vectors.empty()) {
    const auto vocab = corpus::build_vocabulary(data.all);
    std::size_t dim = 0;
    if (!o.config.empty()) dim = detail::load_config(o).dim;
    out << "V_pre\t" << detail::load_vectors(o.vectors, vocab, dim).matched_count << '\n';
  }
  out << "test\t";
  if (data.has_test)
    out << data.split.test.size() << '\n';
  else
    out << "CV\n";
  return kOk;
}

/// Entry point shared by the executable and the tests. `args` excludes the program name.
inline int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Convolutional sentence classifier"};
  app.require_subcommand(1);
  Options o;

  auto* train = app.add_subcommand("train", "Train a model, or cross-validate with --cv");
  train->add_option("--config", o.config, "Config file (key = value)");
  train->add_option("--data", o.data, "Dataset files: train [[dev] test]")->required();
  train->add_option("--vectors", o.vectors, "Pre-trained vectors (word2vec binary, or .txt)");
  train->add_option("--variant", o.variant, "rand | static | non-static | multichannel");
  train->add_flag("--cv", o.cv, "Run k-fold cross-validation");
  train->add_option("--seed", o.seed, "Random seed");
  train->add_option("--checkpoint", o.checkpoint, "Where to write the trained model");
  train->add_option("--out", o.out, "History CSV (or CV report TSV with --cv)");

  auto* predict = app.add_subcommand("predict", "Classify sentences (arguments or one per stdin line)");
  predict->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required();
  predict->add_option("text", o.text, "Sentences to classify");

  auto* neighbors = app.add_subcommand("neighbors", "Nearest words by cosine in each embedding channel");
  neighbors->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required();
  neighbors->add_option("--word,word", o.word, "Query word")->required();
  neighbors->add_option("--count", o.count, "Neighbors per channel")->capture_default_str();

  auto* inspect = app.add_subcommand("inspect-data", "Dataset summary statistics");
  inspect->add_option("--data", o.data, "Dataset files: train [[dev] test]")->required();
  inspect->add_option("--vectors", o.vectors, "Count vocabulary words present in this vector file");
  inspect->add_option("--config", o.config, "Config file (for the vector dimension of text files)");

  std::vector<const char*> argv{"sentcnn"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return cmd_train(o, out);
    if (*predict) return cmd_predict(o, in, out);
    if (*neighbors) return cmd_neighbors(o, out);
    if (*inspect) return cmd_inspect(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  }
  return kUsage;
}

}  // namespace sentcnn::cli
