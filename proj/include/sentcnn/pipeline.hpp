#pragma once

// Glue between the modules: embedding setup for a variant, model
// construction, hold-out training and k-fold cross-validation.

#include <cstdint>
#include <cstdio>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "sentcnn/corpus.hpp"
#include "sentcnn/embed.hpp"
#include "sentcnn/error.hpp"
#include "sentcnn/eval.hpp"
#include "sentcnn/net.hpp"
#include "sentcnn/optim.hpp"
#include "sentcnn/rng.hpp"

namespace sentcnn {

/// Vocabulary-sized channel with pre-trained rows where available and
/// random rows elsewhere. Without `match` every non-pad row is random.
inline embed::EmbeddingChannel base_channel(const corpus::Vocabulary& vocab, const optim::TrainConfig& cfg,
                                            const embed::PretrainedMatch* match) {
  const std::uint64_t seed = stream_seed(cfg.seed, SeedStream::unknown_words);
  if (!match) return embed::random_channel(vocab.size(), cfg.dim, {cfg.rand_init_range, seed});
  if (match->rows.rows != vocab.size() || match->rows.cols != cfg.dim)
    throw Error(ErrorKind::validation, "pre-trained rows do not match vocabulary and dim");
  embed::PretrainedMatch filled = *match;
  if (cfg.unknown_init == optim::UnknownInit::variance_matched)
    embed::variance_matched_init(filled, seed);
  else
    embed::fill_unknown_rows(filled, {cfg.rand_init_range, seed});
  embed::EmbeddingChannel ch{std::move(filled.rows), false};
  ch.zero_pad_row();
  return ch;
}

inline net::ModelParams build_model(const embed::EmbeddingChannel& base, const optim::TrainConfig& cfg,
                                    std::size_t num_classes) {
  cfg.validate();
  auto channels = embed::assemble_channels(
      cfg.variant, base, {cfg.rand_init_range, stream_seed(cfg.seed, SeedStream::rand_channel)});
  return net::init_params(std::move(channels), cfg.widths, cfg.maps_per_width, num_classes, cfg.param_init_range,
                          stream_seed(cfg.seed, SeedStream::params), cfg.activation, cfg.keep_prob);
}

inline std::vector<corpus::Example> gather(std::span<const corpus::Example> all, std::span<const std::size_t> idx) {
  std::vector<corpus::Example> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(all[i]);
  return out;
}

struct HoldoutResult {
  optim::FitResult fit;
  double dev_accuracy = 0.0;
  std::optional<double> test_accuracy;
};

/// Fits on `split.train`, early-stopping on `split.dev` (carved from train
/// when empty) and scoring `split.test` when present.
inline HoldoutResult train_holdout(std::span<const corpus::Example> examples, const corpus::Split& split,
                                   std::size_t num_classes, const embed::EmbeddingChannel& base,
                                   const optim::TrainConfig& cfg) {
  std::vector<std::size_t> train_idx = split.train, dev_idx = split.dev;
  if (dev_idx.empty())
    std::tie(train_idx, dev_idx) =
        corpus::select_dev_split(split.train, cfg.dev_fraction, stream_seed(cfg.seed, SeedStream::dev_split));
  const auto train = gather(examples, train_idx);
  const auto dev = gather(examples, dev_idx);
  HoldoutResult r;
  r.fit = optim::fit(build_model(base, cfg, num_classes), train, dev, cfg);
  r.dev_accuracy = eval::accuracy(r.fit.best, dev);
  if (!split.test.empty()) r.test_accuracy = eval::accuracy(r.fit.best, gather(examples, split.test));
  return r;
}

namespace eval {

struct CvReport {
  std::vector<double> fold_accuracy;
  double mean = 0.0;
  std::uint64_t config_fingerprint = 0;
  std::uint64_t fold_plan_fingerprint = 0;
  std::uint64_t seed = 0;
  std::string variant;
};

inline std::uint64_t config_fingerprint(const optim::TrainConfig& cfg) {
  const auto text = optim::to_config_text(cfg);
  Fnv1a h;
  h.update(text.data(), text.size());
  return h.digest();
}

/// The fold plan depends only on the dataset size, fold count and seed, so
/// every variant run with the same seed sees the same folds.
inline corpus::FoldPlan fold_plan_for(std::size_t n, const optim::TrainConfig& cfg) {
  return corpus::assign_folds(n, cfg.folds, stream_seed(cfg.seed, SeedStream::folds));
}

/// Trains on all folds but one (with an inner dev split) and scores the held-out fold, for every fold.
inline CvReport run_cross_validation(std::span<const corpus::Example> examples, std::size_t num_classes,
                                     const embed::EmbeddingChannel& base, const optim::TrainConfig& cfg) {
  cfg.validate();
  const auto plan = fold_plan_for(examples.size(), cfg);
  CvReport report;
  report.config_fingerprint = config_fingerprint(cfg);
  report.fold_plan_fingerprint = plan.fingerprint();
  report.seed = cfg.seed;
  report.variant = std::string(embed::variant_name(cfg.variant));
  for (int f = 0; f < plan.n_folds; ++f) {
    const auto rest = plan.complement(f);
    auto [train_idx, dev_idx] = corpus::select_dev_split(
        rest, cfg.dev_fraction, mix_seed(stream_seed(cfg.seed, SeedStream::dev_split), static_cast<std::uint64_t>(f)));
    const auto fit = optim::fit(build_model(base, cfg, num_classes), gather(examples, train_idx),
                                gather(examples, dev_idx), cfg);
    report.fold_accuracy.push_back(accuracy(fit.best, gather(examples, plan.members(f))));
  }
  report.mean = std::accumulate(report.fold_accuracy.begin(), report.fold_accuracy.end(), 0.0) /
                static_cast<double>(report.fold_accuracy.size());
  return report;
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// `fold,accuracy` rows followed by a `mean` row.
inline void write_cv_csv(std::ostream& os, const CvReport& r) {
  os << "fold,accuracy\n";
  for (std::size_t i = 0; i < r.fold_accuracy.size(); ++i)
    os << i << ',' << optim::detail::format_double(r.fold_accuracy[i]) << '\n';
  os << "mean," << optim::detail::format_double(r.mean) << '\n';
}

inline void write_cv_tsv(std::ostream& os, const CvReport& r) {
  os << "variant\t" << r.variant << '\n';
  os << "seed\t" << r.seed << '\n';
  os << "config\t" << hex64(r.config_fingerprint) << '\n';
  os << "folds\t" << hex64(r.fold_plan_fingerprint) << '\n';
  for (std::size_t i = 0; i < r.fold_accuracy.size(); ++i)
    os << "fold" << i << '\t' << optim::detail::format_double(r.fold_accuracy[i]) << '\n';
  os << "mean\t" << optim::detail::format_double(r.mean) << '\n';
}

}  // namespace eval
}  // namespace sentcnn
