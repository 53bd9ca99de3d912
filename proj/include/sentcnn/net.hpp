#pragma once

// One-layer convolutional sentence classifier: shared filters over one or two
// embedding channels, ReLU, max-over-time pooling, dropout on the pooled
// vector and a softmax output layer. Forward and hand-written backward pass.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sentcnn/corpus.hpp"
#include "sentcnn/embed.hpp"
#include "sentcnn/error.hpp"
#include "sentcnn/matrix.hpp"
#include "sentcnn/rng.hpp"

namespace sentcnn::net {

using corpus::TokenId;
using embed::EmbeddingChannel;

enum class Activation { relu, tanh, identity };

inline std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "?";
}

inline std::optional<Activation> parse_activation(std::string_view s) {
  for (auto a : {Activation::relu, Activation::tanh, Activation::identity})
    if (activation_name(a) == s) return a;
  return std::nullopt;
}

inline double activate(Activation a, double x) {
  switch (a) {
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::tanh: return std::tanh(x);
    case Activation::identity: return x;
  }
  return x;
}

/// f'(x) given the pre-activation x. ReLU uses 0 at the kink.
inline double activate_grad(Activation a, double x) {
  switch (a) {
    case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

/// Filter spanning `width` consecutive words; weights is width x k.
struct ConvFilter {
  std::size_t width = 0;
  Matrix weights;
  double bias = 0.0;
};

/// Softmax layer, one weight row per class.
struct OutputLayer {
  Matrix weights;  // c x m
  std::vector<double> bias;
};

struct ModelParams {
  std::vector<EmbeddingChannel> channels;
  std::vector<ConvFilter> filters;
  OutputLayer output;
  Activation activation = Activation::relu;
  double keep_prob = 0.5;

  std::size_t num_classes() const { return output.weights.rows; }
  std::size_t num_features() const { return filters.size(); }
  std::size_t dim() const { return channels.empty() ? 0 : channels.front().dim(); }
  std::size_t vocab_size() const { return channels.empty() ? 0 : channels.front().matrix.rows; }
  std::size_t max_width() const {
    std::size_t w = 0;
    for (const auto& f : filters) w = std::max(w, f.width);
    return w;
  }
};

struct DropoutMask {
  std::vector<std::uint8_t> keep;  // r_j in {0, 1}
  double keep_prob = 1.0;
};

inline DropoutMask sample_mask(std::size_t m, double keep_prob, Rng& rng) {
  DropoutMask mask{std::vector<std::uint8_t>(m, 1), keep_prob};
  if (keep_prob < 1.0)
    for (auto& r : mask.keep) r = rng.bernoulli(keep_prob) ? 1 : 0;
  return mask;
}

inline DropoutMask full_mask(std::size_t m) { return {std::vector<std::uint8_t>(m, 1), 1.0}; }

struct FeatureMap {
  std::vector<double> values;
  std::size_t argmax = 0;
};

/// Maximum and the smallest index attaining it.
inline std::pair<double, std::size_t> max_over_time(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorKind::validation, "max over an empty feature map");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return {values[best], best};
}

/// Row t is the sum over channels of the vector for token t. Since every
/// filter is shared across channels, convolving this sum equals adding the
/// per-channel responses.
inline Matrix summed_input(std::span<const TokenId> ids, std::span<const EmbeddingChannel> channels) {
  if (channels.empty()) throw Error(ErrorKind::validation, "model has no embedding channel");
  const std::size_t k = channels.front().dim();
  Matrix x(ids.size(), k);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    auto out = x.row(t);
    for (const auto& ch : channels) {
      const auto src = ch.matrix.row(static_cast<std::size_t>(ids[t]));
      for (std::size_t d = 0; d < k; ++d) out[d] += src[d];
    }
  }
  return x;
}

/// Pre-activation of the window starting at `pos`.
inline double window_response(const Matrix& input, const ConvFilter& filter, std::size_t pos) {
  double s = filter.bias;
  for (std::size_t j = 0; j < filter.width; ++j) s += dot(filter.weights.row(j), input.row(pos + j));
  return s;
}

inline std::size_t window_count(std::size_t length, std::size_t width) {
  if (width == 0 || length < width)
    throw Error(ErrorKind::validation, "sentence of length " + std::to_string(length) +
                                           " is shorter than filter width " + std::to_string(width));
  return length - width + 1;
}

inline FeatureMap feature_map(const Matrix& input, const ConvFilter& filter, Activation act) {
  FeatureMap fm;
  fm.values.resize(window_count(input.rows, filter.width));
  for (std::size_t i = 0; i < fm.values.size(); ++i) fm.values[i] = activate(act, window_response(input, filter, i));
  fm.argmax = max_over_time(fm.values).second;
  return fm;
}

inline FeatureMap conv_feature_map(std::span<const TokenId> ids, std::span<const EmbeddingChannel> channels,
                                   const ConvFilter& filter, Activation act) {
  window_count(ids.size(), filter.width);
  return feature_map(summed_input(ids, channels), filter, act);
}

/// Everything the backward pass needs from a forward call.
struct ForwardTrace {
  std::vector<TokenId> token_ids;
  Matrix input;                        // summed_input(token_ids)
  std::vector<std::size_t> argmax;     // per filter
  std::vector<double> pre_activation;  // per filter, at argmax
  std::vector<double> z;               // pooled features, before masking
  std::optional<DropoutMask> mask;     // present in train mode
};

struct ForwardResult {
  std::vector<double> logits;
  ForwardTrace trace;
};

namespace detail {

inline ForwardResult forward_impl(const ModelParams& p, std::span<const TokenId> ids, std::optional<DropoutMask> mask) {
  const std::size_t m = p.num_features();
  if (mask && mask->keep.size() != m) throw Error(ErrorKind::validation, "dropout mask size mismatch");
  ForwardResult r;
  r.trace.token_ids.assign(ids.begin(), ids.end());
  r.trace.input = summed_input(ids, p.channels);
  r.trace.argmax.resize(m);
  r.trace.pre_activation.resize(m);
  r.trace.z.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    const auto& f = p.filters[j];
    const auto fm = feature_map(r.trace.input, f, p.activation);
    r.trace.argmax[j] = fm.argmax;
    r.trace.pre_activation[j] = window_response(r.trace.input, f, fm.argmax);
    r.trace.z[j] = fm.values[fm.argmax];
  }

  const std::size_t c = p.num_classes();
  r.logits.assign(p.output.bias.begin(), p.output.bias.end());
  for (std::size_t k = 0; k < c; ++k) {
    const auto w = p.output.weights.row(k);
    double s = 0.0;
    if (mask) {
      for (std::size_t j = 0; j < m; ++j) s += w[j] * (r.trace.z[j] * mask->keep[j]);
    } else {
      // Test-time rule: score with keep_prob * w, stored weights untouched.
      for (std::size_t j = 0; j < m; ++j) s += (p.keep_prob * w[j]) * r.trace.z[j];
    }
    r.logits[k] += s;
  }
  r.trace.mask = std::move(mask);
  return r;
}

}  // namespace detail

inline ForwardResult forward_train(const ModelParams& p, std::span<const TokenId> ids, const DropoutMask& mask) {
  return detail::forward_impl(p, ids, mask);
}

inline ForwardResult forward_train(const ModelParams& p, std::span<const TokenId> ids, Rng& rng) {
  return detail::forward_impl(p, ids, sample_mask(p.num_features(), p.keep_prob, rng));
}

inline ForwardResult forward_inference(const ModelParams& p, std::span<const TokenId> ids) {
  return detail::forward_impl(p, ids, std::nullopt);
}

struct LossAndProbs {
  std::vector<double> probs;
  double loss = 0.0;
};

/// Softmax with max subtraction; loss is the cross-entropy of `label`.
inline LossAndProbs loss_and_probs(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) throw Error(ErrorKind::validation, "label out of range");
  const double mx = *std::max_element(logits.begin(), logits.end());
  LossAndProbs out;
  out.probs.resize(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += (out.probs[i] = std::exp(logits[i] - mx));
  for (double& pr : out.probs) pr /= z;
  out.loss = std::log(z) - (logits[label] - mx);
  return out;
}

inline std::vector<double> softmax(std::span<const double> logits) { return loss_and_probs(logits, 0).probs; }

/// Smallest index among the maxima.
inline std::size_t predict_class(std::span<const double> logits) { return max_over_time(logits).second; }

/// Sparse embedding gradient: rows listed by token id, pad excluded.
struct EmbeddingGrad {
  std::vector<TokenId> ids;
  Matrix rows;

  std::optional<std::span<const double>> find(TokenId id) const {
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (ids[i] == id) return rows.row(i);
    return std::nullopt;
  }
};

struct Gradients {
  std::vector<Matrix> filter_weights;
  std::vector<double> filter_bias;
  Matrix output_weights;
  std::vector<double> output_bias;
  // One entry per channel; empty for static channels.
  std::vector<EmbeddingGrad> channels;
  double loss = 0.0;
};

/// Gradient of the cross-entropy loss for one example, given the train-mode
/// trace of the same parameters.
inline Gradients backward(const ModelParams& p, const ForwardTrace& trace, std::size_t label) {
  const std::size_t m = p.num_features();
  const std::size_t c = p.num_classes();
  const std::size_t k = p.dim();
  if (!trace.mask) throw Error(ErrorKind::validation, "backward needs a train-mode trace");
  if (trace.z.size() != m || trace.argmax.size() != m || trace.mask->keep.size() != m ||
      trace.input.cols != k || trace.input.rows != trace.token_ids.size() || p.output.weights.cols != m)
    throw Error(ErrorKind::validation, "trace does not match model parameters");
  const auto& keep = trace.mask->keep;

  // Recompute logits from the trace (train-mode rule).
  std::vector<double> logits(p.output.bias);
  for (std::size_t i = 0; i < c; ++i) {
    const auto w = p.output.weights.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += w[j] * (trace.z[j] * keep[j]);
    logits[i] += s;
  }
  auto lp = loss_and_probs(logits, label);

  Gradients g;
  g.loss = lp.loss;
  std::vector<double>& dlogits = lp.probs;
  dlogits[label] -= 1.0;

  g.output_bias = dlogits;
  g.output_weights = Matrix(c, m);
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < m; ++j) g.output_weights(i, j) = dlogits[i] * (trace.z[j] * keep[j]);

  Matrix dinput(trace.input.rows, k);
  g.filter_weights.reserve(m);
  g.filter_bias.assign(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    const auto& f = p.filters[j];
    g.filter_weights.emplace_back(f.width, k);
    if (!keep[j]) continue;
    double dz = 0.0;
    for (std::size_t i = 0; i < c; ++i) dz += dlogits[i] * p.output.weights(i, j);
    const double da = dz * activate_grad(p.activation, trace.pre_activation[j]);
    if (da == 0.0) continue;
    g.filter_bias[j] = da;
    const std::size_t pos = trace.argmax[j];
    for (std::size_t t = 0; t < f.width; ++t) {
      const auto x = trace.input.row(pos + t);
      const auto w = f.weights.row(t);
      auto gw = g.filter_weights[j].row(t);
      auto gx = dinput.row(pos + t);
      for (std::size_t d = 0; d < k; ++d) {
        gw[d] = da * x[d];
        gx[d] += da * w[d];
      }
    }
  }

  // Scatter per-position input gradient onto vocabulary rows.
  std::vector<TokenId> ids;
  for (std::size_t t = 0; t < trace.token_ids.size(); ++t) {
    const TokenId id = trace.token_ids[t];
    if (id == corpus::kPadId) continue;
    bool nonzero = false;
    for (double v : dinput.row(t)) nonzero |= (v != 0.0);
    if (nonzero && std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());
  EmbeddingGrad rows{ids, Matrix(ids.size(), k)};
  for (std::size_t t = 0; t < trace.token_ids.size(); ++t) {
    const auto it = std::lower_bound(ids.begin(), ids.end(), trace.token_ids[t]);
    if (it == ids.end() || *it != trace.token_ids[t]) continue;
    auto dst = rows.rows.row(static_cast<std::size_t>(it - ids.begin()));
    const auto src = dinput.row(t);
    for (std::size_t d = 0; d < k; ++d) dst[d] += src[d];
  }
  g.channels.resize(p.channels.size());
  for (std::size_t ch = 0; ch < p.channels.size(); ++ch)
    if (p.channels[ch].trainable) g.channels[ch] = rows;
  return g;
}

/// Filters grouped by width in the given order, `maps_per_width` each; filter
/// and output weights from U[-init_range, init_range], biases zero.
inline ModelParams init_params(std::vector<EmbeddingChannel> channels, std::span<const std::size_t> widths,
                               std::size_t maps_per_width, std::size_t num_classes, double init_range,
                               std::uint64_t seed, Activation act, double keep_prob) {
  if (channels.empty()) throw Error(ErrorKind::validation, "model has no embedding channel");
  if (num_classes < 2) throw Error(ErrorKind::validation, "need at least 2 classes");
  ModelParams p;
  p.channels = std::move(channels);
  p.activation = act;
  p.keep_prob = keep_prob;
  const std::size_t k = p.dim();
  Rng rng(seed);
  for (std::size_t w : widths) {
    if (w == 0) throw Error(ErrorKind::validation, "filter width must be positive");
    for (std::size_t i = 0; i < maps_per_width; ++i) {
      ConvFilter f{w, Matrix(w, k), 0.0};
      for (double& x : f.weights.data) x = rng.uniform(-init_range, init_range);
      p.filters.push_back(std::move(f));
    }
  }
  p.output.weights = Matrix(num_classes, p.filters.size());
  for (double& x : p.output.weights.data) x = rng.uniform(-init_range, init_range);
  p.output.bias.assign(num_classes, 0.0);
  return p;
}

/// Hash over every tensor's bits, for "did anything change" checks.
inline std::uint64_t fingerprint(const ModelParams& p) {
  Fnv1a h;
  for (const auto& ch : p.channels) h.update_values(ch.matrix.data);
  for (const auto& f : p.filters) {
    h.update_values(f.weights.data);
    h.update(&f.bias, sizeof f.bias);
  }
  h.update_values(p.output.weights.data);
  h.update_values(p.output.bias);
  return h.digest();
}

}  // namespace sentcnn::net
