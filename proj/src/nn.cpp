#include "ohda/nn.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>

#include "ohda/rng.hpp"

namespace ohda::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

std::uint64_t next_net_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}

std::string layer_name(std::size_t i, const Layer& l) {
  static const char* names[] = {"dense", "relu", "dropout", "grad_reverse"};
  return "layer " + std::to_string(i) + " (" + names[l.index()] + ")";
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
  const std::size_t n =
      std::accumulate(shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>());
  data_.assign(shape_.empty() ? 0 : n, fill);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  const std::size_t n =
      std::accumulate(shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>());
  if (n != data_.size()) throw ShapeError("tensor buffer length does not match shape");
}

// --- Net ----------------------------------------------------------------------

Net::Net() : id_(next_net_id()) {}
Net::Net(const Net& other) : mode(other.mode), layers_(other.layers_), id_(next_net_id()) {}
Net& Net::operator=(const Net& other) {
  if (this != &other) {
    layers_ = other.layers_;
    mode = other.mode;
    ++version_;
  }
  return *this;
}

Net& Net::dense(std::size_t in, std::size_t out) {
  Dense d{in, out, std::vector<double>(in * out, 0.0), std::vector<double>(out, 0.0),
          std::vector<double>(in * out, 0.0), std::vector<double>(out, 0.0)};
  layers_.emplace_back(std::move(d));
  return *this;
}
Net& Net::relu() {
  layers_.emplace_back(ReLU{});
  return *this;
}
Net& Net::dropout(double rate) {
  if (rate < 0 || rate >= 1) throw std::invalid_argument("dropout rate must be in [0, 1)");
  layers_.emplace_back(Dropout{rate});
  return *this;
}
Net& Net::grad_reverse(double coefficient) {
  layers_.emplace_back(GradReverse{coefficient});
  return *this;
}

void Net::set_grad_reverse_coefficient(double coefficient) {
  for (auto& l : layers_) {
    if (auto* g = std::get_if<GradReverse>(&l)) g->coefficient = coefficient;
  }
}

void Net::init(std::uint64_t seed) {
  Rng rng(seed);
  for (auto& l : layers_) {
    if (auto* d = std::get_if<Dense>(&l)) {
      const double limit = std::sqrt(6.0 / static_cast<double>(d->in + d->out));
      for (double& w : d->weight) w = rng.uniform(-limit, limit);
      std::fill(d->bias.begin(), d->bias.end(), 0.0);
    }
  }
  ++version_;
}

std::size_t Net::input_dim() const {
  for (const auto& l : layers_) {
    if (const auto* d = std::get_if<Dense>(&l)) return d->in;
  }
  return 0;
}

std::size_t Net::output_dim(std::size_t in) const {
  std::size_t dim = in;
  for (const auto& l : layers_) {
    if (const auto* d = std::get_if<Dense>(&l)) dim = d->out;
  }
  return dim;
}

Tape Net::forward(const Tensor& input, const ForwardOptions& opts) const {
  if (opts.frozen_masks && opts.frozen_masks->masks.size() != layers_.size()) {
    throw ShapeError("frozen dropout masks were recorded on a different net");
  }
  Tape tape;
  tape.net_id = id_;
  tape.version = version_;
  tape.inputs.reserve(layers_.size());
  tape.masks.resize(layers_.size());
  Tensor x = input;
  Rng rng(opts.dropout_seed);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& layer = layers_[i];
    tape.inputs.push_back(x);
    if (const auto* d = std::get_if<Dense>(&layer)) {
      if (x.shape().size() != 2 || x.cols() != d->in) {
        throw ShapeError(layer_name(i, layer) + ": expected " + std::to_string(d->in) +
                         " input columns, got " + std::to_string(x.cols()));
      }
      Tensor y = Tensor::matrix(x.rows(), d->out);
      MapMat Y(y.data().data(), static_cast<Eigen::Index>(x.rows()), static_cast<Eigen::Index>(d->out));
      ConstMapMat X(x.data().data(), static_cast<Eigen::Index>(x.rows()), static_cast<Eigen::Index>(d->in));
      ConstMapMat W(d->weight.data(), static_cast<Eigen::Index>(d->in), static_cast<Eigen::Index>(d->out));
      Eigen::Map<const Eigen::RowVectorXd> b(d->bias.data(), static_cast<Eigen::Index>(d->out));
      Y.noalias() = X * W;
      Y.rowwise() += b;
      x = std::move(y);
    } else if (std::holds_alternative<ReLU>(layer)) {
      for (double& v : x.data()) v = v > 0.0 ? v : 0.0;
    } else if (const auto* dr = std::get_if<Dropout>(&layer)) {
      if (opts.frozen_masks) {
        const Tensor& mask = opts.frozen_masks->masks[i];
        if (mask.size() != 0) {
          if (mask.size() != x.size()) throw ShapeError(layer_name(i, layer) + ": frozen mask shape mismatch");
          for (std::size_t k = 0; k < x.size(); ++k) x[k] *= mask[k];
          tape.masks[i] = mask;
        }
        continue;
      }
      double rate = 0.0;
      if (opts.force_dropout_rate) {
        rate = *opts.force_dropout_rate;
      } else if (opts.mode.value_or(mode) == Mode::train) {
        rate = dr->rate;
      }
      if (rate <= 0.0) continue;
      if (rate >= 1.0) throw std::invalid_argument("dropout rate must be < 1");
      Tensor mask(x.shape());
      const double keep_scale = 1.0 / (1.0 - rate);
      for (std::size_t k = 0; k < x.size(); ++k) {
        mask[k] = rng.uniform() < rate ? 0.0 : keep_scale;
        x[k] *= mask[k];
      }
      tape.masks[i] = std::move(mask);
    }
    // GradReverse is the identity going forward.
  }
  tape.output = std::move(x);
  return tape;
}

Tensor Net::backward(Tape& tape, const Tensor& upstream) {
  if (tape.net_id != id_) throw std::logic_error("tape was recorded on a different net");
  if (tape.consumed) throw std::logic_error("stale tape: already used by a backward pass");
  if (tape.version != version_) throw std::logic_error("stale tape: parameters changed since forward");
  if (upstream.size() != tape.output.size()) throw ShapeError("upstream gradient shape mismatch");
  tape.consumed = true;
  Tensor g = upstream;
  for (std::size_t idx = layers_.size(); idx-- > 0;) {
    Layer& layer = layers_[idx];
    const Tensor& x = tape.inputs[idx];
    if (auto* d = std::get_if<Dense>(&layer)) {
      const auto n = static_cast<Eigen::Index>(x.rows());
      const auto in = static_cast<Eigen::Index>(d->in), out = static_cast<Eigen::Index>(d->out);
      ConstMapMat X(x.data().data(), n, in);
      ConstMapMat G(g.data().data(), n, out);
      MapMat GW(d->grad_weight.data(), in, out);
      Eigen::Map<Eigen::RowVectorXd> GB(d->grad_bias.data(), out);
      GW.noalias() += X.transpose() * G;
      GB += G.colwise().sum();
      ConstMapMat W(d->weight.data(), in, out);
      Tensor dx = Tensor::matrix(x.rows(), d->in);
      MapMat DX(dx.data().data(), n, in);
      DX.noalias() = G * W.transpose();
      g = std::move(dx);
    } else if (std::holds_alternative<ReLU>(layer)) {
      for (std::size_t k = 0; k < g.size(); ++k) {
        if (!(x[k] > 0.0)) g[k] = 0.0;
      }
    } else if (std::holds_alternative<Dropout>(layer)) {
      const Tensor& mask = tape.masks[idx];
      if (mask.size() != 0) {
        for (std::size_t k = 0; k < g.size(); ++k) g[k] *= mask[k];
      }
    } else if (const auto* r = std::get_if<GradReverse>(&layer)) {
      for (double& v : g.data()) v *= -r->coefficient;
    }
  }
  return g;
}

void Net::zero_grad() {
  for (auto& l : layers_) {
    if (auto* d = std::get_if<Dense>(&l)) {
      std::fill(d->grad_weight.begin(), d->grad_weight.end(), 0.0);
      std::fill(d->grad_bias.begin(), d->grad_bias.end(), 0.0);
    }
  }
}

std::vector<ParamRef> Net::parameters() {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (auto* d = std::get_if<Dense>(&layers_[i])) {
      out.push_back({"layer" + std::to_string(i) + ".weight", d->weight, d->grad_weight, &version_});
      out.push_back({"layer" + std::to_string(i) + ".bias", d->bias, d->grad_bias, &version_});
    }
  }
  return out;
}

std::size_t Net::num_parameters() const {
  std::size_t n = 0;
  for (const auto& l : layers_) {
    if (const auto* d = std::get_if<Dense>(&l)) n += d->weight.size() + d->bias.size();
  }
  return n;
}

json Net::spec() const {
  json layers = json::array();
  for (const auto& l : layers_) {
    if (const auto* d = std::get_if<Dense>(&l)) {
      layers.push_back({{"type", "dense"}, {"in", d->in}, {"out", d->out}});
    } else if (std::holds_alternative<ReLU>(l)) {
      layers.push_back({{"type", "relu"}});
    } else if (const auto* dr = std::get_if<Dropout>(&l)) {
      layers.push_back({{"type", "dropout"}, {"rate", dr->rate}});
    } else if (const auto* g = std::get_if<GradReverse>(&l)) {
      layers.push_back({{"type", "grad_reverse"}, {"coefficient", g->coefficient}});
    }
  }
  return layers;
}

Net Net::from_spec(const json& spec) {
  Net net;
  for (const auto& l : spec) {
    const auto type = l.at("type").get<std::string>();
    if (type == "dense") {
      net.dense(l.at("in").get<std::size_t>(), l.at("out").get<std::size_t>());
    } else if (type == "relu") {
      net.relu();
    } else if (type == "dropout") {
      net.dropout(l.at("rate").get<double>());
    } else if (type == "grad_reverse") {
      net.grad_reverse(l.at("coefficient").get<double>());
    } else {
      throw CheckpointError("unknown layer type '" + type + "'");
    }
  }
  return net;
}

// --- Losses -------------------------------------------------------------------

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double mx = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (double& v : p) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : p) v /= sum;
  return p;
}

LossGrad softmax_ce(const Tensor& logits, std::span<const int> targets, std::span<const double> weights) {
  const std::size_t n = logits.rows(), c = logits.cols();
  if (targets.size() != n || weights.size() != n) throw ShapeError("softmax_ce: row count mismatch");
  LossGrad out{0.0, Tensor::matrix(n, c)};
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (wsum <= 0.0) return out;
  for (std::size_t i = 0; i < n; ++i) {
    if (weights[i] == 0.0) continue;
    const auto t = static_cast<std::size_t>(targets[i]);
    if (targets[i] < 0 || t >= c) throw std::out_of_range("softmax_ce: target class out of range");
    const auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double v : row) sum += std::exp(v - mx);
    const double log_z = mx + std::log(sum);
    out.loss += weights[i] * (log_z - row[t]) / wsum;
    for (std::size_t k = 0; k < c; ++k) {
      const double p = std::exp(row[k] - log_z);
      out.grad(i, k) = weights[i] * (p - (k == t ? 1.0 : 0.0)) / wsum;
    }
  }
  return out;
}

double huber(double d) {
  const double a = std::abs(d);
  return a <= 1.0 ? 0.5 * d * d : a - 0.5;
}

double huber_grad(double d) { return std::abs(d) <= 1.0 ? d : (d > 0 ? 1.0 : -1.0); }

LossGrad smooth_l1(const Tensor& pred, const Tensor& target, std::span<const double> weights) {
  if (pred.shape() != target.shape()) throw ShapeError("smooth_l1: shape mismatch");
  const std::size_t n = pred.rows(), c = pred.cols();
  if (weights.size() != n) throw ShapeError("smooth_l1: weight count mismatch");
  LossGrad out{0.0, Tensor(pred.shape())};
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (wsum <= 0.0) return out;
  for (std::size_t i = 0; i < n; ++i) {
    if (weights[i] == 0.0) continue;
    for (std::size_t k = 0; k < c; ++k) {
      const double d = pred(i, k) - target(i, k);
      out.loss += weights[i] * huber(d) / wsum;
      out.grad(i, k) = weights[i] * huber_grad(d) / wsum;
    }
  }
  return out;
}

ScalarLossGrad binary_ce(double prob, int label) {
  const double p = std::clamp(prob, 1e-15, 1.0 - 1e-15);
  const double y = label ? 1.0 : 0.0;
  return {-y * std::log(p) - (1.0 - y) * std::log(1.0 - p), prob - y};
}

// --- Optimization -------------------------------------------------------------

void Adam::step(std::span<const ParamRef> params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.value.size(), 0.0);
      v_.emplace_back(p.value.size(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw ShapeError("adam: parameter list changed between steps");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (m_[i].size() != p.value.size()) throw ShapeError("adam: moment buffer shape mismatch for " + p.name);
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g;
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[k] / bc1, vhat = v[k] / bc2;
      p.value[k] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    if (p.version) ++*p.version;
  }
}

void ema_update(std::span<const ParamRef> shadow, std::span<const ParamRef> current, double momentum) {
  if (shadow.size() != current.size()) throw ShapeError("ema: parameter count mismatch");
  for (std::size_t i = 0; i < shadow.size(); ++i) {
    if (shadow[i].value.size() != current[i].value.size()) {
      throw ShapeError("ema: shape mismatch for " + shadow[i].name);
    }
    for (std::size_t k = 0; k < shadow[i].value.size(); ++k) {
      shadow[i].value[k] = momentum * shadow[i].value[k] + (1.0 - momentum) * current[i].value[k];
    }
    if (shadow[i].version) ++*shadow[i].version;
  }
}

EmaTracker::EmaTracker(double momentum, std::span<const ParamRef> params) : momentum_(momentum) {
  if (momentum < 0 || momentum > 1) throw std::invalid_argument("ema momentum must be in [0, 1]");
  for (const auto& p : params) shadow_.emplace_back(p.value.begin(), p.value.end());
}

void EmaTracker::update(std::span<const ParamRef> params) {
  if (params.size() != shadow_.size()) throw ShapeError("ema: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].value.size() != shadow_[i].size()) throw ShapeError("ema: shape mismatch");
    for (std::size_t k = 0; k < shadow_[i].size(); ++k) {
      shadow_[i][k] = momentum_ * shadow_[i][k] + (1.0 - momentum_) * params[i].value[k];
    }
  }
}

void round_to_f32(std::span<const ParamRef> params) {
  for (const auto& p : params) {
    for (double& v : p.value) v = static_cast<double>(static_cast<float>(v));
    if (p.version) ++*p.version;
  }
}

// --- Verification -------------------------------------------------------------

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult grad_check(Net& net, const Tensor& input, double step, std::uint64_t seed) {
  ForwardOptions record;
  record.dropout_seed = seed;
  Tape reference = net.forward(input, record);
  Rng rng(derive_seed({seed, 99}));
  Tensor proj(reference.output.shape());
  for (double& v : proj.data()) v = rng.uniform(-1.0, 1.0);

  auto loss_of = [&](const Tensor& x) {
    ForwardOptions replay;
    replay.frozen_masks = &reference;
    const Tape t = net.forward(x, replay);
    double l = 0.0;
    for (std::size_t k = 0; k < proj.size(); ++k) l += t.output[k] * proj[k];
    return l;
  };

  net.zero_grad();
  ForwardOptions replay;
  replay.frozen_masks = &reference;
  Tape tape = net.forward(input, replay);
  const Tensor input_grad = net.backward(tape, proj);

  GradCheckResult res;
  auto consider = [&](double analytic, double numeric, const std::string& where) {
    const double e = relative_error(analytic, numeric);
    ++res.checked;
    if (e > res.max_rel_error || res.worst.empty()) {
      res.max_rel_error = e;
      res.worst = where;
    }
  };
  for (auto& p : net.parameters()) {
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double orig = p.value[k];
      p.value[k] = orig + step;
      const double up = loss_of(input);
      p.value[k] = orig - step;
      const double down = loss_of(input);
      p.value[k] = orig;
      consider(p.grad[k], (up - down) / (2.0 * step), p.name + "[" + std::to_string(k) + "]");
    }
  }
  Tensor x = input;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double orig = x[k];
    x[k] = orig + step;
    const double up = loss_of(x);
    x[k] = orig - step;
    const double down = loss_of(x);
    x[k] = orig;
    consider(input_grad[k], (up - down) / (2.0 * step), "input[" + std::to_string(k) + "]");
  }
  return res;
}

// --- Checkpoints --------------------------------------------------------------

namespace {

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
  return std::filesystem::path(stem.string() + suffix);
}

}  // namespace

std::uint64_t fnv1a(std::span<const unsigned char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void save_checkpoint(const std::filesystem::path& stem, json manifest, std::span<const ParamRef> params) {
  std::vector<unsigned char> blob;
  json shapes = json::array();
  std::size_t count = 0;
  for (const auto& p : params) {
    shapes.push_back({{"name", p.name}, {"size", p.value.size()}});
    for (double v : p.value) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int b = 0; b < 4; ++b) blob.push_back(static_cast<unsigned char>((bits >> (8 * b)) & 0xFFu));
    }
    count += p.value.size();
  }
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  const auto bin_path = with_suffix(stem, ".bin");
  manifest["format"] = "float32-le";
  manifest["blob"] = bin_path.filename().string();
  manifest["num_params"] = count;
  manifest["tensors"] = shapes;
  manifest["checksum_fnv1a"] = fnv1a(blob);
  {
    std::ofstream out(bin_path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
    if (!out) throw CheckpointError("failed to write " + bin_path.string());
  }
  std::ofstream out(with_suffix(stem, ".json"), std::ios::trunc);
  out << manifest.dump(2) << '\n';
  if (!out) throw CheckpointError("failed to write manifest for " + stem.string());
}

json read_manifest(const std::filesystem::path& stem) {
  std::ifstream in(with_suffix(stem, ".json"));
  if (!in) throw CheckpointError("cannot open " + with_suffix(stem, ".json").string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw CheckpointError("malformed checkpoint manifest: " + std::string(e.what()));
  }
}

json load_checkpoint(const std::filesystem::path& stem, std::span<const ParamRef> params) {
  const json manifest = read_manifest(stem);
  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != params.size()) throw CheckpointError("checkpoint tensor count does not match model");
  std::size_t count = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (tensors[i].at("size").get<std::size_t>() != params[i].value.size()) {
      throw CheckpointError("checkpoint shape mismatch for " + params[i].name);
    }
    count += params[i].value.size();
  }
  const auto bin_path = stem.parent_path() / manifest.at("blob").get<std::string>();
  std::ifstream in(bin_path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + bin_path.string());
  std::vector<unsigned char> blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (blob.size() != 4 * count) throw CheckpointError("checkpoint blob has wrong length (corrupted?)");
  if (fnv1a(blob) != manifest.at("checksum_fnv1a").get<std::uint64_t>()) {
    throw CheckpointError("checkpoint blob checksum mismatch (corrupted?)");
  }
  std::size_t off = 0;
  for (const auto& p : params) {
    for (double& v : p.value) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(blob[off + b]) << (8 * b);
      v = static_cast<double>(std::bit_cast<float>(bits));
      off += 4;
    }
    if (p.version) ++*p.version;
  }
  return manifest;
}

}  // namespace ohda::nn
