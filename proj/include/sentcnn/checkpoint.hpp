#pragma once

// Binary model checkpoint.
//
//   "SCNV"  u32 version
//   str     config text (canonical key = value form)
//   u64     vocabulary size, then one str per word in id order
//   str     variant name
//   u64     history length, then (u64 epoch, f64 train_loss, f64 dev_acc) each
//   u64     tensor count, then per tensor:
//           str name, u32 rank, u64 dims[rank], f64 values[prod(dims)]
//
// str is a u64 byte length followed by UTF-8 bytes. All integers and floats
// are little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sentcnn/corpus.hpp"
#include "sentcnn/embed.hpp"
#include "sentcnn/error.hpp"
#include "sentcnn/net.hpp"
#include "sentcnn/optim.hpp"

namespace sentcnn::checkpoint {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr char kMagic[4] = {'S', 'C', 'N', 'V'};
inline constexpr std::uint32_t kVersion = 1;

enum class LoadError { bad_magic, unsupported_version, truncated, trailing_data, malformed, io };

class CheckpointError : public Error {
 public:
  CheckpointError(LoadError code, const std::string& what) : Error(ErrorKind::corrupt, what), code_(code) {}
  LoadError code() const noexcept { return code_; }

 private:
  LoadError code_;
};

struct Checkpoint {
  optim::TrainConfig config;
  corpus::Vocabulary vocab;
  net::ModelParams params;
  std::vector<optim::EpochRecord> history;
};

namespace detail {

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void str(std::string_view s) {
    pod<std::uint64_t>(s.size());
    out_.append(s);
  }
  void tensor(std::string_view name, std::initializer_list<std::uint64_t> dims, const std::vector<double>& values) {
    str(name);
    pod<std::uint32_t>(static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) pod<std::uint64_t>(d);
    out_.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(double));
  }
  void raw(std::string_view s) { out_.append(s); }
  std::string take() && { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  struct Tensor {
    std::string name;
    std::vector<std::uint64_t> dims;
    std::vector<double> values;
  };

  Tensor tensor() {
    Tensor t;
    t.name = str();
    const auto rank = pod<std::uint32_t>();
    if (rank > 8) throw CheckpointError(LoadError::malformed, "tensor '" + t.name + "' has implausible rank");
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      t.dims.push_back(pod<std::uint64_t>());
      if (t.dims.back() != 0 && count > remaining() / t.dims.back()) throw truncated();
      count *= t.dims.back();
    }
    need(count * sizeof(double));
    t.values.resize(count);
    std::memcpy(t.values.data(), data_.data() + pos_, count * sizeof(double));
    pos_ += count * sizeof(double);
    return t;
  }

  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t offset() const { return pos_; }

 private:
  CheckpointError truncated() const {
    return CheckpointError(LoadError::truncated, "truncated checkpoint at byte " + std::to_string(pos_));
  }
  void need(std::uint64_t n) const {
    if (n > remaining()) throw truncated();
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize(const Checkpoint& ck) {
  const auto& p = ck.params;
  detail::Writer w;
  w.raw({kMagic, sizeof kMagic});
  w.pod<std::uint32_t>(kVersion);
  w.str(optim::to_config_text(ck.config));
  w.pod<std::uint64_t>(ck.vocab.size());
  for (const auto& word : ck.vocab.words()) w.str(word);
  w.str(embed::variant_name(ck.config.variant));
  w.pod<std::uint64_t>(ck.history.size());
  for (const auto& h : ck.history) {
    w.pod<std::uint64_t>(static_cast<std::uint64_t>(h.epoch));
    w.pod<double>(h.train_loss);
    w.pod<double>(h.dev_accuracy);
  }

  const std::size_t tensors = p.channels.size() + p.filters.size() + 3;
  w.pod<std::uint64_t>(tensors);
  for (std::size_t i = 0; i < p.channels.size(); ++i) {
    const auto& m = p.channels[i].matrix;
    w.tensor("channel." + std::to_string(i), {m.rows, m.cols}, m.data);
  }
  std::vector<double> biases;
  for (std::size_t j = 0; j < p.filters.size(); ++j) {
    const auto& f = p.filters[j];
    w.tensor("filter." + std::to_string(j) + ".weight", {f.weights.rows, f.weights.cols}, f.weights.data);
    biases.push_back(f.bias);
  }
  w.tensor("filter.bias", {biases.size()}, biases);
  w.tensor("output.weight", {p.output.weights.rows, p.output.weights.cols}, p.output.weights.data);
  w.tensor("output.bias", {p.output.bias.size()}, p.output.bias);
  return std::move(w).take();
}

inline std::size_t channel_count(embed::Variant v) { return v == embed::Variant::multichannel ? 2 : 1; }

inline Checkpoint deserialize(std::string_view data) {
  using detail::Reader;
  auto malformed = [](const std::string& why) { return CheckpointError(LoadError::malformed, "malformed checkpoint: " + why); };

  if (data.size() < sizeof kMagic) throw CheckpointError(LoadError::truncated, "truncated checkpoint at byte 0");
  if (std::memcmp(data.data(), kMagic, sizeof kMagic) != 0)
    throw CheckpointError(LoadError::bad_magic, "not a checkpoint (bad magic)");
  Reader r(data.substr(sizeof kMagic));
  const auto version = r.pod<std::uint32_t>();
  if (version != kVersion)
    throw CheckpointError(LoadError::unsupported_version, "unsupported checkpoint version " + std::to_string(version));

  Checkpoint ck;
  try {
    ck.config = optim::parse_config_text(r.str(), "checkpoint config");
  } catch (const CheckpointError&) {
    throw;
  } catch (const Error& e) {
    throw malformed(e.what());
  }

  const auto vocab_n = r.pod<std::uint64_t>();
  if (vocab_n == 0 || vocab_n > r.remaining() / sizeof(std::uint64_t)) {
    if (vocab_n == 0) throw malformed("empty vocabulary");
    throw CheckpointError(LoadError::truncated, "truncated checkpoint in vocabulary");
  }
  for (std::uint64_t i = 0; i < vocab_n; ++i) {
    const auto word = r.str();
    if (i == 0 && word != corpus::kPadToken) throw malformed("vocabulary does not start with the pad token");
    if (i > 0 && static_cast<std::uint64_t>(ck.vocab.add(word)) != i) throw malformed("duplicate vocabulary word '" + word + "'");
  }

  if (r.str() != embed::variant_name(ck.config.variant)) throw malformed("variant tag disagrees with config");

  const auto hist_n = r.pod<std::uint64_t>();
  if (hist_n > r.remaining() / 24) throw CheckpointError(LoadError::truncated, "truncated checkpoint in history");
  for (std::uint64_t i = 0; i < hist_n; ++i) {
    optim::EpochRecord h;
    h.epoch = static_cast<int>(r.pod<std::uint64_t>());
    h.train_loss = r.pod<double>();
    h.dev_accuracy = r.pod<double>();
    ck.history.push_back(h);
  }

  const auto& cfg = ck.config;
  const std::size_t n_channels = channel_count(cfg.variant);
  const std::size_t m = cfg.widths.size() * cfg.maps_per_width;
  const auto tensor_n = r.pod<std::uint64_t>();
  if (tensor_n != n_channels + m + 3) throw malformed("unexpected tensor count");

  auto expect = [&](const Reader::Tensor& t, const std::string& name, std::vector<std::uint64_t> dims) {
    if (t.name != name) throw malformed("expected tensor '" + name + "', found '" + t.name + "'");
    if (t.dims != dims) throw malformed("tensor '" + name + "' has unexpected shape");
  };

  auto& p = ck.params;
  p.activation = cfg.activation;
  p.keep_prob = cfg.keep_prob;
  for (std::size_t i = 0; i < n_channels; ++i) {
    auto t = r.tensor();
    expect(t, "channel." + std::to_string(i), {vocab_n, cfg.dim});
    embed::EmbeddingChannel ch;
    ch.matrix.rows = vocab_n;
    ch.matrix.cols = cfg.dim;
    ch.matrix.data = std::move(t.values);
    ch.trainable = cfg.variant != embed::Variant::static_ && !(cfg.variant == embed::Variant::multichannel && i == 0);
    p.channels.push_back(std::move(ch));
  }
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t width = cfg.widths[j / cfg.maps_per_width];
    auto t = r.tensor();
    expect(t, "filter." + std::to_string(j) + ".weight", {width, cfg.dim});
    net::ConvFilter f;
    f.width = width;
    f.weights.rows = width;
    f.weights.cols = cfg.dim;
    f.weights.data = std::move(t.values);
    p.filters.push_back(std::move(f));
  }
  auto bias = r.tensor();
  expect(bias, "filter.bias", {m});
  for (std::size_t j = 0; j < m; ++j) p.filters[j].bias = bias.values[j];

  auto ow = r.tensor();
  if (ow.dims.size() != 2 || ow.dims[1] != m || ow.dims[0] < 2) throw malformed("tensor 'output.weight' has unexpected shape");
  expect(ow, "output.weight", {ow.dims[0], m});
  p.output.weights.rows = ow.dims[0];
  p.output.weights.cols = m;
  p.output.weights.data = std::move(ow.values);
  auto ob = r.tensor();
  expect(ob, "output.bias", {ow.dims[0]});
  p.output.bias = std::move(ob.values);

  if (r.remaining() != 0)
    throw CheckpointError(LoadError::trailing_data, "trailing data after checkpoint at byte " +
                                                        std::to_string(r.offset() + sizeof kMagic));
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const auto bytes = serialize(ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::validation, "cannot write checkpoint " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::validation, "failed writing checkpoint " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(LoadError::io, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Checkpoint load_checkpoint(const std::string& path) { return deserialize(read_file(path)); }

}  // namespace sentcnn::checkpoint
