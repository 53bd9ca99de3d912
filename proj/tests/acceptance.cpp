// Acceptance run: one PASS/FAIL/SKIP line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sentcnn/cli.hpp"
#include "sentcnn/sentcnn.hpp"

using namespace sentcnn;

namespace {

enum class Status { pass, fail, skip };

struct Outcome {
  Status status;
  std::string detail;
};

Outcome check(bool ok, std::string detail) { return {ok ? Status::pass : Status::fail, std::move(detail)}; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// 1 -------------------------------------------------------------------------

Outcome gradient_oracle() {
  Rng rng(101);
  std::vector<embed::EmbeddingChannel> chans{oracle::random_channel(10, 6, false, rng),
                                             oracle::random_channel(10, 6, true, rng)};
  auto p = oracle::random_model(std::move(chans), {2, 3}, 4, 3, rng);
  auto ids = oracle::random_sentence(7, 10, rng);
  ids[5] = corpus::kPadId;
  const net::DropoutMask mask{{1, 0, 1, 1, 1, 1, 0, 1}, 0.5};
  const std::size_t label = rng.below(3);

  const auto g = net::backward(p, net::forward_train(p, ids, mask).trace, label);
  auto loss = [&] { return net::loss_and_probs(net::forward_train(p, ids, mask).logits, label).loss; };
  std::size_t checked = 0, bad = 0;
  double worst = 0;
  auto cmp = [&](double& x, double analytic) {
    const double numeric = oracle::central_difference(x, 1e-5, loss);
    ++checked;
    if (!oracle::gradient_close(analytic, numeric)) ++bad;
    if (std::abs(analytic) >= 1e-8)
      worst = std::max(worst, std::abs(analytic - numeric) / std::max(std::abs(analytic), std::abs(numeric)));
  };
  for (std::size_t j = 0; j < p.filters.size(); ++j) {
    for (std::size_t i = 0; i < p.filters[j].weights.size(); ++i) cmp(p.filters[j].weights.data[i], g.filter_weights[j].data[i]);
    cmp(p.filters[j].bias, g.filter_bias[j]);
  }
  for (std::size_t i = 0; i < p.output.weights.size(); ++i) cmp(p.output.weights.data[i], g.output_weights.data[i]);
  for (std::size_t i = 0; i < p.output.bias.size(); ++i) cmp(p.output.bias[i], g.output_bias[i]);
  if (!g.channels[0].ids.empty()) ++bad;
  for (std::size_t row = 1; row < p.vocab_size(); ++row) {
    const auto gr = g.channels[1].find(static_cast<corpus::TokenId>(row));
    for (std::size_t d = 0; d < p.dim(); ++d) cmp(p.channels[1].matrix(row, d), gr ? (*gr)[d] : 0.0);
  }
  return check(bad == 0, std::to_string(checked) + " params, " + std::to_string(bad) + " mismatches, max rel err " +
                             fmt("%.2e", worst));
}

// 2 -------------------------------------------------------------------------

Outcome conv_oracle() {
  Rng rng(202);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 1 + rng.below(8), h = 1 + rng.below(5), n = h + rng.below(13 - h);
    const std::size_t v = 2 + rng.below(15), channels = 1 + rng.below(2);
    std::vector<embed::EmbeddingChannel> chans;
    for (std::size_t c = 0; c < channels; ++c) chans.push_back(oracle::random_channel(v, k, c == 1, rng));
    net::ConvFilter f{h, Matrix(h, k), rng.uniform(-0.5, 0.5)};
    for (double& x : f.weights.data) x = rng.uniform(-1, 1);
    std::vector<corpus::TokenId> ids(n);
    for (auto& id : ids) id = static_cast<corpus::TokenId>(rng.below(v));
    const auto act = static_cast<net::Activation>(rng.below(3));
    const auto expected = oracle::naive_feature_map(ids, chans, f, act);
    const auto got = net::conv_feature_map(ids, chans, f, act).values;
    if (got.size() != expected.size()) return check(false, "length mismatch in case " + std::to_string(trial));
    for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got[i] - expected[i]));
  }
  return check(worst <= 1e-12, "1000 cases, max abs diff " + fmt("%.2e", worst));
}

// 3 -------------------------------------------------------------------------

Outcome synthetic_end_to_end() {
  optim::TrainConfig cfg;
  cfg.dim = 32;
  cfg.seed = 3;
  const auto task = oracle::make_trigger_task(2000, 303);
  const auto vocab = corpus::build_vocabulary(task.examples);
  const auto ex = corpus::encode_all(task.examples, vocab, cfg.max_width());
  corpus::Split split;
  for (std::size_t i = 0; i < 1600; ++i) split.train.push_back(i);
  for (std::size_t i = 1600; i < 2000; ++i) split.test.push_back(i);
  const auto match = embed::match_records(oracle::make_task_vectors(task, cfg.dim, true, 304), vocab, cfg.dim);

  auto run = [&](embed::Variant v, double& seconds) -> std::pair<double, std::size_t> {
    cfg.variant = v;
    const auto t0 = std::chrono::steady_clock::now();
    const auto base = base_channel(vocab, cfg, v == embed::Variant::rand ? nullptr : &match);
    const auto r = train_holdout(ex, split, 2, base, cfg);
    seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return std::make_pair(*r.test_accuracy, r.fit.history.size());
  };
  auto correct = [](double acc) { return std::llround(acc * 400); };
  double t_rand = 0, t_static = 0, t_non = 0;
  const auto [rand, rand_epochs] = run(embed::Variant::rand, t_rand);
  const auto [stat, stat_epochs] = run(embed::Variant::static_, t_static);
  const auto [non, non_epochs] = run(embed::Variant::non_static, t_non);
  (void)stat_epochs;
  (void)non_epochs;
  // One point of 400 held-out examples is 4 examples.
  const bool ok = correct(rand) >= 380 && rand_epochs <= 25 && t_rand < 120 && correct(stat) >= correct(rand) - 4 &&
                  correct(non) >= correct(stat) - 4;
  return check(ok, "rand " + fmt("%.4f", rand) + " (" + std::to_string(rand_epochs) + " epochs, " + fmt("%.1f s", t_rand) +
                       "), static " + fmt("%.4f", stat) + ", non-static " + fmt("%.4f", non));
}

// 4 -------------------------------------------------------------------------

std::string fixture_bytes() {
  const unsigned char bytes[] = {
      '2',  ' ',  '3',  '\n', 'c',  'a',  't',  ' ',  0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0x40, 0x00, 0x00,
      0x40, 0x40, '\n', 'd',  'o',  'g',  ' ',  0x00, 0x00, 0x80, 0xbf, 0x00, 0x00, 0x00, 0x3f, 0x00, 0x00, 0x80,
      0x3e, '\n',
  };
  return std::string(reinterpret_cast<const char*>(bytes), sizeof bytes);
}

Outcome word2vec_parser() {
  corpus::Vocabulary vocab;
  vocab.add("cat");
  vocab.add("dog");
  std::istringstream in(fixture_bytes());
  const auto m = embed::parse_word2vec_binary(in, vocab, 3);
  const auto row = [&](const char* w) {
    const auto r = m.rows.row(static_cast<std::size_t>(*vocab.find(w)));
    return std::vector<double>(r.begin(), r.end());
  };
  const bool values = m.matched_count == 2 && row("cat") == std::vector<double>{1, 2, 3} &&
                      row("dog") == std::vector<double>{-1, 0.5, 0.25};

  std::istringstream again(fixture_bytes());
  embed::Word2VecBinaryReader reader(again);
  std::vector<embed::VectorRecord> recs;
  for (embed::VectorRecord r; reader.next(r);) recs.push_back(r);
  std::ostringstream out;
  embed::write_word2vec_binary(out, recs, 3);
  const bool round_trip = out.str() == fixture_bytes();

  bool truncated = false;
  const auto bytes = fixture_bytes();
  std::istringstream cut(bytes.substr(0, bytes.size() - 6));
  try {
    embed::parse_word2vec_binary(cut, vocab, 3);
  } catch (const Error& e) {
    truncated = std::string(e.what()).find("truncated record") != std::string::npos;
  }
  return check(values && round_trip && truncated, std::string("values ") + (values ? "ok" : "wrong") + ", round trip " +
                                                      (round_trip ? "identical" : "differs") + ", truncation " +
                                                      (truncated ? "reported" : "missed"));
}

// 5 -------------------------------------------------------------------------

Outcome invariant_suite() {
  std::vector<std::string> failures;
  optim::TrainConfig cfg;
  cfg.variant = embed::Variant::multichannel;
  cfg.widths = {2, 3, 4};
  cfg.maps_per_width = 40;
  cfg.dim = 12;
  cfg.batch_size = 20;
  cfg.max_epochs = 6;
  cfg.l2_limit = 3;
  cfg.param_init_range = 0.6;
  const auto task = oracle::make_trigger_task(400, 505, 40);
  const auto vocab = corpus::build_vocabulary(task.examples);
  const auto ex = corpus::encode_all(task.examples, vocab, cfg.max_width());
  const auto match = embed::match_records(oracle::make_task_vectors(task, cfg.dim, true, 506), vocab, cfg.dim);
  const auto init = build_model(base_channel(vocab, cfg, &match), cfg, 2);
  Fnv1a h0;
  h0.update_values(init.channels[0].matrix.data);
  const auto static_hash = h0.digest();

  std::size_t updates = 0;
  double max_norm = 0;
  bool pad_ok = true, static_ok = true;
  auto hook = [&](const net::ModelParams& p) {
    ++updates;
    for (std::size_t c = 0; c < p.output.weights.rows; ++c) {
      const auto r = p.output.weights.row(c);
      max_norm = std::max(max_norm, std::sqrt(dot(r, r)));
    }
    for (const auto& ch : p.channels)
      for (double x : ch.matrix.row(corpus::kPadId)) pad_ok = pad_ok && x == 0.0;
    Fnv1a h;
    h.update_values(p.channels[0].matrix.data);
    static_ok = static_ok && h.digest() == static_hash;
  };
  const std::span<const corpus::Example> all(ex);
  const auto a = optim::fit(init, all.subspan(0, 360), all.subspan(360), cfg, hook);
  if (max_norm > 3 + 1e-9) failures.push_back("norm " + fmt("%.12f", max_norm));
  if (max_norm < 3 - 1e-9) failures.push_back("constraint never bound");
  if (!pad_ok) failures.push_back("pad row");
  if (!static_ok) failures.push_back("static channel changed");

  const auto b = optim::fit(init, all.subspan(0, 360), all.subspan(360), cfg);
  if (net::fingerprint(a.best) != net::fingerprint(b.best)) failures.push_back("adadelta determinism");

  Rng rng(507);
  for (int t = 0; t < 1000; ++t) {
    net::OutputLayer out{Matrix(3, 8), {0, 0, 0}};
    const double scale = rng.uniform(0.1, 5);
    for (double& x : out.weights.data) x = rng.uniform(-scale, scale);
    optim::l2_renorm(out, 3);
    const auto once = out.weights;
    optim::l2_renorm(out, 3);
    if (!(out.weights == once)) {
      failures.push_back("projection not idempotent");
      break;
    }
  }

  std::vector<embed::EmbeddingChannel> ch{oracle::random_channel(15, 5, true, rng)};
  auto p = oracle::random_model(std::move(ch), {2, 3}, 6, 3, rng);
  const auto ids = oracle::random_sentence(9, 15, rng);
  const auto infer = net::forward_inference(p, ids).logits;
  const int draws = 10000;
  std::vector<double> sum(3, 0.0), sq(3, 0.0);
  for (int i = 0; i < draws; ++i) {
    const auto l = net::forward_train(p, ids, rng).logits;
    for (std::size_t c = 0; c < 3; ++c) {
      sum[c] += l[c];
      sq[c] += l[c] * l[c];
    }
  }
  for (std::size_t c = 0; c < 3; ++c) {
    const double mean = sum[c] / draws;
    const double se = std::sqrt((sq[c] / draws - mean * mean) / draws);
    if (std::abs(mean - infer[c]) > 4 * se) failures.push_back("dropout expectation class " + std::to_string(c));
  }

  std::string detail = std::to_string(updates) + " updates checked, max row norm " + fmt("%.6f", max_norm);
  for (const auto& f : failures) detail += "; " + f;
  return check(failures.empty(), detail);
}

// 6, 7 ----------------------------------------------------------------------

const char* env(const char* name) {
  const char* v = std::getenv(name);
  return v && *v ? v : nullptr;
}

// Polarity files hold one sentence per line; positive = 1.
std::string write_mr_tsv(const std::filesystem::path& dir) {
  const auto out_path = std::filesystem::temp_directory_path() / "sentcnn_mr.tsv";
  std::ofstream out(out_path);
  for (auto [name, label] : {std::pair{"rt-polarity.neg", 0}, std::pair{"rt-polarity.pos", 1}}) {
    std::ifstream in(dir / name, std::ios::binary);
    if (!in) throw Error(ErrorKind::validation, "cannot open " + (dir / name).string());
    for (std::string line; std::getline(in, line);)
      if (!corpus::clean_and_tokenize(line).empty()) out << label << '\t' << line << '\n';
  }
  return out_path.string();
}

Outcome mr_statistics() {
  const char* dir = env("SENTCNN_MR_DIR");
  if (!dir) return {Status::skip, "extended; set SENTCNN_MR_DIR to the rt-polaritydata directory"};
  const auto tsv = write_mr_tsv(dir);
  std::istringstream in;
  std::ostringstream out, err;
  const int code = cli::run({"inspect-data", "--data", tsv}, in, out, err);
  if (code != 0) return check(false, "inspect-data failed: " + err.str());
  std::istringstream lines(out.str());
  std::string key;
  double value = 0, n = -1, c = -1, v = -1;
  while (lines >> key >> value) {
    if (key == "N") n = value;
    if (key == "c") c = value;
    if (key == "V") v = value;
  }
  const bool ok = n == 10662 && c == 2 && std::abs(v - 18765) <= 0.05 * 18765;
  return check(ok, "N " + fmt("%.0f", n) + ", c " + fmt("%.0f", c) + ", V " + fmt("%.0f", v));
}

Outcome mr_cross_validation() {
  const char* dir = env("SENTCNN_MR_DIR");
  const char* vectors = env("SENTCNN_W2V");
  if (!dir || !vectors) return {Status::skip, "extended; set SENTCNN_MR_DIR and SENTCNN_W2V (hours of compute)"};
  const auto data = corpus::load_labeled_file(write_mr_tsv(dir));
  optim::TrainConfig cfg;
  const auto vocab = corpus::build_vocabulary(data);
  const auto ex = corpus::encode_all(data, vocab, cfg.max_width());
  std::ifstream vin(vectors, std::ios::binary);
  const auto match = embed::parse_word2vec_binary(vin, vocab, cfg.dim);
  cfg.variant = embed::Variant::rand;
  const auto rand = eval::run_cross_validation(ex, 2, base_channel(vocab, cfg, nullptr), cfg).mean;
  cfg.variant = embed::Variant::static_;
  const auto stat = eval::run_cross_validation(ex, 2, base_channel(vocab, cfg, &match), cfg).mean;
  const bool ok = std::abs(100 * rand - 76.1) <= 2.5 && std::abs(100 * stat - 81.0) <= 2.5;
  return check(ok, "rand " + fmt("%.2f", 100 * rand) + ", static " + fmt("%.2f", 100 * stat));
}

// 8 -------------------------------------------------------------------------

Outcome checkpoint_round_trip() {
  Rng rng(808);
  checkpoint::Checkpoint ck;
  ck.config.variant = embed::Variant::multichannel;
  ck.config.widths = {2, 3, 4};
  ck.config.maps_per_width = 5;
  ck.config.dim = 8;
  for (int i = 1; i < 60; ++i) ck.vocab.add("w" + std::to_string(i));
  std::vector<embed::EmbeddingChannel> chans{oracle::random_channel(60, 8, false, rng),
                                             oracle::random_channel(60, 8, true, rng)};
  ck.params = oracle::random_model(std::move(chans), {2, 3, 4}, 5, 3, rng);
  ck.history = {{1, 0.9, 0.55}, {2, 0.8, 0.6}};
  const auto path = (std::filesystem::temp_directory_path() / "sentcnn_acceptance.scnv").string();
  checkpoint::save_checkpoint(path, ck);
  const auto first = checkpoint::read_file(path);
  const auto loaded = checkpoint::load_checkpoint(path);
  checkpoint::save_checkpoint(path, loaded);
  const bool bytes_same = checkpoint::read_file(path) == first;
  std::filesystem::remove(path);
  std::size_t same = 0;
  for (int t = 0; t < 100; ++t) {
    const auto ids = oracle::random_sentence(4 + rng.below(12), 60, rng);
    same += net::forward_inference(loaded.params, ids).logits == net::forward_inference(ck.params, ids).logits;
  }
  return check(bytes_same && same == 100,
               std::to_string(same) + "/100 identical predictions, re-saved bytes " + (bytes_same ? "identical" : "differ"));
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "gradient oracle", 60, gradient_oracle},
      {2, "convolution oracle", 30, conv_oracle},
      {3, "synthetic end-to-end", 360, synthetic_end_to_end},
      {4, "word2vec parser", 1, word2vec_parser},
      {5, "invariant suite", 120, invariant_suite},
      {6, "corpus statistics", 0, mr_statistics},
      {7, "cross-validation reproduction", 0, mr_cross_validation},
      {8, "checkpoint round trip", 5, checkpoint_round_trip},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {Status::fail, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.status == Status::pass && c.budget_seconds > 0 && secs >= c.budget_seconds) {
      o.status = Status::fail;
      o.detail += "; over time budget";
    }
    const char* tag = o.status == Status::pass ? "PASS" : o.status == Status::fail ? "FAIL" : "SKIP";
    std::printf("%s criterion %d (%s) [%.2f s]: %s\n", tag, c.id, c.name, secs, o.detail.c_str());
    std::fflush(stdout);
    failed += o.status == Status::fail;
  }
  return failed == 0 ? 0 : 1;
}
