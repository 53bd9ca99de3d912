#pragma once

// Training: Adadelta, the max-norm projection, mini-batch scheduling, the
// epoch loop and early stopping on a dev set. Also the `key = value`
// configuration format.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sentcnn/corpus.hpp"
#include "sentcnn/embed.hpp"
#include "sentcnn/error.hpp"
#include "sentcnn/eval.hpp"
#include "sentcnn/matrix.hpp"
#include "sentcnn/net.hpp"
#include "sentcnn/rng.hpp"

namespace sentcnn::optim {

enum class UnknownInit { uniform, variance_matched };

struct TrainConfig {
  embed::Variant variant = embed::Variant::rand;
  std::vector<std::size_t> widths = {3, 4, 5};
  std::size_t maps_per_width = 100;
  double keep_prob = 0.5;
  double l2_limit = 3.0;  // s
  std::size_t batch_size = 50;
  double rho = 0.95;
  double eps = 1e-6;
  int max_epochs = 25;
  int patience = 8;
  std::uint64_t seed = 1;
  std::size_t dim = 300;
  net::Activation activation = net::Activation::relu;
  double param_init_range = 0.01;
  double rand_init_range = embed::kDefaultUniformRange;
  UnknownInit unknown_init = UnknownInit::variance_matched;
  bool constrain_filters = false;
  int folds = 10;
  double dev_fraction = 0.1;

  std::size_t max_width() const {
    std::size_t w = 0;
    for (auto x : widths) w = std::max(w, x);
    return w;
  }

  void validate() const {
    auto bad = [](const std::string& why) { return Error(ErrorKind::validation, "config: " + why); };
    if (widths.empty()) throw bad("widths must not be empty");
    for (auto w : widths)
      if (w == 0) throw bad("widths must be positive");
    if (maps_per_width == 0) throw bad("maps_per_width must be positive");
    if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw bad("keep_prob must be in (0, 1]");
    if (!(l2_limit > 0.0)) throw bad("l2_limit must be positive");
    if (batch_size == 0) throw bad("batch_size must be at least 1");
    if (!(rho > 0.0 && rho < 1.0)) throw bad("rho must be in (0, 1)");
    if (!(eps > 0.0)) throw bad("eps must be positive");
    if (max_epochs < 1) throw bad("max_epochs must be at least 1");
    if (patience < 1) throw bad("patience must be at least 1");
    if (dim == 0) throw bad("dim must be positive");
    if (!(param_init_range >= 0.0)) throw bad("param_init_range must be non-negative");
    if (!(rand_init_range > 0.0)) throw bad("rand_init_range must be positive");
    if (folds < 2) throw bad("folds must be at least 2");
    if (!(dev_fraction > 0.0 && dev_fraction < 1.0)) throw bad("dev_fraction must be in (0, 1)");
  }
};

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Canonical text form; parse_config(to_config_text(c)) == c.
inline std::string to_config_text(const TrainConfig& c) {
  using detail::format_double;
  std::ostringstream os;
  os << "variant = " << embed::variant_name(c.variant) << '\n';
  os << "widths = ";
  for (std::size_t i = 0; i < c.widths.size(); ++i) os << (i ? "," : "") << c.widths[i];
  os << '\n';
  os << "maps_per_width = " << c.maps_per_width << '\n';
  os << "keep_prob = " << format_double(c.keep_prob) << '\n';
  os << "l2_limit = " << format_double(c.l2_limit) << '\n';
  os << "batch_size = " << c.batch_size << '\n';
  os << "rho = " << format_double(c.rho) << '\n';
  os << "eps = " << format_double(c.eps) << '\n';
  os << "max_epochs = " << c.max_epochs << '\n';
  os << "patience = " << c.patience << '\n';
  os << "seed = " << c.seed << '\n';
  os << "dim = " << c.dim << '\n';
  os << "activation = " << net::activation_name(c.activation) << '\n';
  os << "param_init_range = " << format_double(c.param_init_range) << '\n';
  os << "rand_init_range = " << format_double(c.rand_init_range) << '\n';
  os << "unknown_init = " << (c.unknown_init == UnknownInit::uniform ? "uniform" : "variance_matched") << '\n';
  os << "constrain_filters = " << (c.constrain_filters ? "true" : "false") << '\n';
  os << "folds = " << c.folds << '\n';
  os << "dev_fraction = " << format_double(c.dev_fraction) << '\n';
  return os.str();
}

/// Parses `key = value` lines; `#` starts a comment. Unknown keys and
/// malformed values are rejected with the offending line number.
inline TrainConfig parse_config(std::istream& in, const std::string& origin = "config") {
  TrainConfig c;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    auto fail = [&](const std::string& why) {
      return Error(ErrorKind::validation, origin + ":" + std::to_string(line_no) + ": " + why);
    };
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw fail("expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (value.empty()) throw fail("missing value for '" + key + "'");

    auto as_double = [&] {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(value, &used);
      } catch (const std::exception&) {
        throw fail("bad number '" + value + "' for '" + key + "'");
      }
      if (used != value.size()) throw fail("bad number '" + value + "' for '" + key + "'");
      return v;
    };
    auto as_u64 = [&] {
      if (value.find_first_not_of("0123456789") != std::string::npos)
        throw fail("bad integer '" + value + "' for '" + key + "'");
      try {
        return static_cast<std::uint64_t>(std::stoull(value));
      } catch (const std::exception&) {
        throw fail("bad integer '" + value + "' for '" + key + "'");
      }
    };
    auto as_int = [&] {
      const auto v = as_u64();
      if (v > static_cast<std::uint64_t>(std::numeric_limits<int>::max())) throw fail("value too large for '" + key + "'");
      return static_cast<int>(v);
    };
    auto as_bool = [&] {
      if (value == "true" || value == "1") return true;
      if (value == "false" || value == "0") return false;
      throw fail("bad boolean '" + value + "' for '" + key + "'");
    };

    if (key == "variant") {
      auto v = embed::parse_variant(value);
      if (!v) throw fail("unknown variant '" + value + "'");
      c.variant = *v;
    } else if (key == "widths") {
      c.widths.clear();
      std::stringstream ss(value);
      for (std::string item; std::getline(ss, item, ',');) {
        item = detail::trim(item);
        if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos)
          throw fail("bad width list '" + value + "'");
        c.widths.push_back(std::stoull(item));
      }
    } else if (key == "maps_per_width") {
      c.maps_per_width = as_u64();
    } else if (key == "keep_prob") {
      c.keep_prob = as_double();
    } else if (key == "l2_limit") {
      c.l2_limit = as_double();
    } else if (key == "batch_size") {
      c.batch_size = as_u64();
    } else if (key == "rho") {
      c.rho = as_double();
    } else if (key == "eps") {
      c.eps = as_double();
    } else if (key == "max_epochs") {
      c.max_epochs = as_int();
    } else if (key == "patience") {
      c.patience = as_int();
    } else if (key == "seed") {
      c.seed = as_u64();
    } else if (key == "dim") {
      c.dim = as_u64();
    } else if (key == "activation") {
      auto a = net::parse_activation(value);
      if (!a) throw fail("unknown activation '" + value + "'");
      c.activation = *a;
    } else if (key == "param_init_range") {
      c.param_init_range = as_double();
    } else if (key == "rand_init_range") {
      c.rand_init_range = as_double();
    } else if (key == "unknown_init") {
      if (value == "uniform")
        c.unknown_init = UnknownInit::uniform;
      else if (value == "variance_matched")
        c.unknown_init = UnknownInit::variance_matched;
      else
        throw fail("unknown_init must be uniform or variance_matched");
    } else if (key == "constrain_filters") {
      c.constrain_filters = as_bool();
    } else if (key == "folds") {
      c.folds = as_int();
    } else if (key == "dev_fraction") {
      c.dev_fraction = as_double();
    } else {
      throw fail("unknown key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

inline TrainConfig parse_config_text(const std::string& text, const std::string& origin = "config") {
  std::istringstream in(text);
  return parse_config(in, origin);
}

/// Running averages of squared gradients and squared updates.
struct AdadeltaState {
  std::vector<double> sq_grad;
  std::vector<double> sq_delta;
  double rho = 0.95;
  double eps = 1e-6;

  AdadeltaState() = default;
  AdadeltaState(std::size_t n, double rho_, double eps_) : sq_grad(n, 0.0), sq_delta(n, 0.0), rho(rho_), eps(eps_) {}
};

inline void adadelta_step(std::span<double> param, std::span<const double> grad, AdadeltaState& st) {
  if (param.size() != grad.size() || param.size() != st.sq_grad.size())
    throw Error(ErrorKind::validation, "adadelta: shape mismatch");
  const double rho = st.rho, eps = st.eps;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    if (!std::isfinite(g)) throw Error(ErrorKind::numeric, "diverged");
    if (g == 0.0) {
      // Same arithmetic as the general branch with g = 0 and a zero update.
      st.sq_grad[i] = rho * st.sq_grad[i] + (1.0 - rho) * 0.0;
      st.sq_delta[i] = rho * st.sq_delta[i] + (1.0 - rho) * 0.0;
      continue;
    }
    st.sq_grad[i] = rho * st.sq_grad[i] + (1.0 - rho) * g * g;
    const double delta = -(std::sqrt(st.sq_delta[i] + eps) / std::sqrt(st.sq_grad[i] + eps)) * g;
    st.sq_delta[i] = rho * st.sq_delta[i] + (1.0 - rho) * delta * delta;
    param[i] += delta;
  }
}

/// Rescales `v` onto the sphere of radius s if it lies outside it. The result
/// is nudged until its computed norm is <= s, so a second call is a no-op.
inline void project_to_ball(std::span<double> v, double s) {
  auto norm = [&] { return std::sqrt(dot(v, v)); };
  const double n = norm();
  if (!(n > s)) return;
  const double scale = s / n;
  for (double& x : v) x *= scale;
  while (norm() > s)
    for (double& x : v) x *= 1.0 - 0x1.0p-52;
}

inline void l2_renorm(net::OutputLayer& out, double s) {
  for (std::size_t i = 0; i < out.weights.rows; ++i) project_to_ball(out.weights.row(i), s);
}

/// Fresh permutation per (seed, epoch), cut into consecutive chunks; the
/// last chunk may be short.
inline std::vector<std::vector<std::size_t>> make_minibatches(std::size_t n, std::size_t batch_size,
                                                              std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size == 0) throw Error(ErrorKind::validation, "batch_size must be at least 1");
  Rng rng(mix_seed(seed, epoch));
  const auto perm = random_permutation(n, rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += batch_size)
    batches.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(i),
                         perm.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  return batches;
}

/// Adadelta accumulators for every trainable tensor of a model.
struct OptimizerState {
  std::vector<AdadeltaState> filter_weights;
  AdadeltaState filter_bias;
  AdadeltaState output_weights;
  AdadeltaState output_bias;
  std::vector<AdadeltaState> channels;  // empty state for static channels

  OptimizerState() = default;
  OptimizerState(const net::ModelParams& p, double rho, double eps)
      : filter_bias(p.num_features(), rho, eps),
        output_weights(p.output.weights.size(), rho, eps),
        output_bias(p.output.bias.size(), rho, eps) {
    for (const auto& f : p.filters) filter_weights.emplace_back(f.weights.size(), rho, eps);
    for (const auto& ch : p.channels) channels.emplace_back(ch.trainable ? ch.matrix.size() : 0, rho, eps);
  }
};

namespace detail {

/// Sum of per-example gradients over one mini-batch.
struct BatchGradient {
  std::vector<Matrix> filter_weights;
  std::vector<double> filter_bias;
  Matrix output_weights;
  std::vector<double> output_bias;
  std::vector<Matrix> channels;            // dense V x k for trainable channels
  std::vector<std::vector<char>> touched;  // rows with a nonzero contribution

  explicit BatchGradient(const net::ModelParams& p)
      : filter_bias(p.num_features(), 0.0),
        output_weights(p.output.weights.rows, p.output.weights.cols),
        output_bias(p.output.bias.size(), 0.0) {
    for (const auto& f : p.filters) filter_weights.emplace_back(f.weights.rows, f.weights.cols);
    for (const auto& ch : p.channels) {
      channels.push_back(ch.trainable ? Matrix(ch.matrix.rows, ch.matrix.cols) : Matrix());
      touched.emplace_back(ch.trainable ? ch.matrix.rows : 0, 0);
    }
  }

  void add(const net::Gradients& g) {
    for (std::size_t j = 0; j < filter_weights.size(); ++j) {
      auto& dst = filter_weights[j].data;
      const auto& src = g.filter_weights[j].data;
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      filter_bias[j] += g.filter_bias[j];
    }
    for (std::size_t i = 0; i < output_weights.data.size(); ++i) output_weights.data[i] += g.output_weights.data[i];
    for (std::size_t i = 0; i < output_bias.size(); ++i) output_bias[i] += g.output_bias[i];
    for (std::size_t ch = 0; ch < channels.size(); ++ch) {
      if (channels[ch].rows == 0) continue;
      const auto& eg = g.channels[ch];
      for (std::size_t r = 0; r < eg.ids.size(); ++r) {
        const auto id = static_cast<std::size_t>(eg.ids[r]);
        auto dst = channels[ch].row(id);
        const auto src = eg.rows.row(r);
        for (std::size_t d = 0; d < dst.size(); ++d) dst[d] += src[d];
        touched[ch][id] = 1;
      }
    }
  }

  void scale(double f) {
    for (auto& m : filter_weights)
      for (double& x : m.data) x *= f;
    for (double& x : filter_bias) x *= f;
    for (double& x : output_weights.data) x *= f;
    for (double& x : output_bias) x *= f;
    for (std::size_t ch = 0; ch < channels.size(); ++ch)
      for (std::size_t r = 0; r < touched[ch].size(); ++r)
        if (touched[ch][r])
          for (double& x : channels[ch].row(r)) x *= f;
  }
};

}  // namespace detail

/// Applies one optimizer step from a summed batch gradient, then the
/// max-norm projection and the pad-row reset.
inline void apply_batch(net::ModelParams& p, detail::BatchGradient& g, std::size_t batch_size,
                        OptimizerState& st, const TrainConfig& cfg) {
  g.scale(1.0 / static_cast<double>(batch_size));
  for (std::size_t j = 0; j < p.filters.size(); ++j)
    adadelta_step(p.filters[j].weights.data, g.filter_weights[j].data, st.filter_weights[j]);
  std::vector<double> biases(p.filters.size());
  for (std::size_t j = 0; j < p.filters.size(); ++j) biases[j] = p.filters[j].bias;
  adadelta_step(biases, g.filter_bias, st.filter_bias);
  for (std::size_t j = 0; j < p.filters.size(); ++j) p.filters[j].bias = biases[j];
  adadelta_step(p.output.weights.data, g.output_weights.data, st.output_weights);
  adadelta_step(p.output.bias, g.output_bias, st.output_bias);
  for (std::size_t ch = 0; ch < p.channels.size(); ++ch) {
    if (!p.channels[ch].trainable) continue;
    adadelta_step(p.channels[ch].matrix.data, g.channels[ch].data, st.channels[ch]);
    p.channels[ch].zero_pad_row();
  }

  l2_renorm(p.output, cfg.l2_limit);
  if (cfg.constrain_filters)
    for (auto& f : p.filters) project_to_ball(f.weights.data, cfg.l2_limit);
}

/// Observer called after every mini-batch update (used by invariant checks).
using BatchHook = std::function<void(const net::ModelParams&)>;

/// One pass over `train` in shuffled mini-batches. Returns the mean
/// train-mode loss over the presented examples.
inline double train_epoch(net::ModelParams& p, std::span<const corpus::Example> train, const TrainConfig& cfg,
                          OptimizerState& st, std::uint64_t epoch, const BatchHook& hook = {}) {
  if (train.empty()) throw Error(ErrorKind::validation, "empty training set");
  const auto batches = make_minibatches(train.size(), cfg.batch_size, stream_seed(cfg.seed, SeedStream::minibatch), epoch);
  Rng dropout_rng(mix_seed(stream_seed(cfg.seed, SeedStream::dropout), epoch));
  double total_loss = 0.0;
  for (const auto& batch : batches) {
    detail::BatchGradient acc(p);
    for (std::size_t idx : batch) {
      const auto& ex = train[idx];
      const auto fwd = net::forward_train(p, ex.token_ids, dropout_rng);
      const auto g = net::backward(p, fwd.trace, static_cast<std::size_t>(ex.label));
      total_loss += g.loss;
      acc.add(g);
    }
    apply_batch(p, acc, batch.size(), st, cfg);
    if (hook) hook(p);
  }
  return total_loss / static_cast<double>(train.size());
}

/// Tracks the best dev score; ties keep the earlier epoch.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  /// Records the score of the next epoch; true when it is a new best.
  bool observe(double score) {
    ++epoch_;
    if (epoch_ == 1 || score > best_) {
      best_ = score;
      best_epoch_ = epoch_;
      stale_ = 0;
      return true;
    }
    ++stale_;
    return false;
  }

  bool should_stop() const { return stale_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  double best_score() const { return best_; }

 private:
  int patience_;
  int epoch_ = 0;
  int best_epoch_ = 0;
  int stale_ = 0;
  double best_ = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_accuracy = 0.0;
};

struct FitResult {
  net::ModelParams best;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
};

inline void write_history_csv(std::ostream& os, std::span<const EpochRecord> history) {
  os << "epoch,train_loss,dev_acc\n";
  for (const auto& r : history)
    os << r.epoch << ',' << detail::format_double(r.train_loss) << ',' << detail::format_double(r.dev_accuracy) << '\n';
}

/// Trains from `init` and returns the parameters of the best dev epoch.
inline FitResult fit(net::ModelParams init, std::span<const corpus::Example> train,
                     std::span<const corpus::Example> dev, const TrainConfig& cfg, const BatchHook& hook = {}) {
  if (dev.empty()) throw Error(ErrorKind::validation, "empty dev set");
  cfg.validate();
  OptimizerState st(init, cfg.rho, cfg.eps);
  EarlyStopping stopper(cfg.patience);
  FitResult result;
  net::ModelParams& current = init;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const double loss = train_epoch(current, train, cfg, st, static_cast<std::uint64_t>(epoch), hook);
    const double dev_acc = eval::accuracy(current, dev);
    result.history.push_back({epoch, loss, dev_acc});
    if (stopper.observe(dev_acc)) {
      result.best = current;
      result.best_epoch = epoch;
    }
    if (stopper.should_stop()) break;
  }
  return result;
}

}  // namespace sentcnn::optim
