#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "ohda/json_util.hpp"

namespace ohda::nn {

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major buffer. Most tensors here are matrices [rows, cols].
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);
  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor({rows, cols}, fill);
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const {
    std::size_t c = 1;
    for (std::size_t i = 1; i < shape_.size(); ++i) c *= shape_[i];
    return c;
  }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r) { return std::span(data_).subspan(r * cols(), cols()); }
  std::span<const double> row(std::size_t r) const {
    return std::span(data_).subspan(r * cols(), cols());
  }

  bool operator==(const Tensor&) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// Mutable view of one parameter tensor and its gradient accumulator.
struct ParamRef {
  std::string name;
  std::span<double> value;
  std::span<double> grad;
  std::uint64_t* version = nullptr;  // bumped by anything that rewrites `value`
};

struct Dense {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weight;  // [in, out] row-major
  std::vector<double> bias;    // [out]
  std::vector<double> grad_weight;
  std::vector<double> grad_bias;
};
struct ReLU {};
struct Dropout {
  double rate = 0.0;
};
struct GradReverse {
  double coefficient = 1.0;
};
using Layer = std::variant<Dense, ReLU, Dropout, GradReverse>;

enum class Mode { train, eval };

struct Tape;

struct ForwardOptions {
  std::uint64_t dropout_seed = 0;
  /// Activates every Dropout layer at this rate, in either mode.
  std::optional<double> force_dropout_rate;
  std::optional<Mode> mode;  // overrides Net::mode for this pass
  /// Replays dropout masks recorded in an earlier tape of the same net.
  const Tape* frozen_masks = nullptr;
};

/// Record of one forward pass; consumed by exactly one backward.
struct Tape {
  std::vector<Tensor> inputs;  // input of each layer
  std::vector<Tensor> masks;   // per layer; empty tensor where no mask applies
  Tensor output;
  std::uint64_t net_id = 0;
  std::uint64_t version = 0;
  bool consumed = false;
};

class Net {
 public:
  Net();
  Net(const Net& other);
  Net& operator=(const Net& other);
  Net(Net&&) noexcept = default;
  Net& operator=(Net&&) noexcept = default;

  Net& dense(std::size_t in, std::size_t out);
  Net& relu();
  Net& dropout(double rate);
  Net& grad_reverse(double coefficient);

  /// Uniform(+-sqrt(6 / (fan_in + fan_out))) weights, zero biases.
  void init(std::uint64_t seed);

  Tape forward(const Tensor& input, const ForwardOptions& opts = {}) const;
  /// Accumulates parameter gradients and returns the input gradient.
  Tensor backward(Tape& tape, const Tensor& upstream);

  void zero_grad();
  std::vector<ParamRef> parameters();
  std::size_t num_parameters() const;
  std::size_t input_dim() const;
  std::size_t output_dim(std::size_t input_dim) const;

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  void set_grad_reverse_coefficient(double coefficient);

  Mode mode = Mode::train;

  json spec() const;
  static Net from_spec(const json& spec);

 private:
  std::vector<Layer> layers_;
  std::uint64_t id_;
  std::uint64_t version_ = 0;
};

// --- Losses -----------------------------------------------------------------

struct LossGrad {
  double loss = 0.0;
  Tensor grad;
};

/// Weighted mean of per-row softmax cross-entropy. Zero total weight gives
/// zero loss and zero gradient.
LossGrad softmax_ce(const Tensor& logits, std::span<const int> targets, std::span<const double> weights);

/// Huber loss with delta 1, summed over columns, weighted mean over rows.
LossGrad smooth_l1(const Tensor& pred, const Tensor& target, std::span<const double> weights);
double huber(double d);
double huber_grad(double d);

struct ScalarLossGrad {
  double loss = 0.0;
  double grad = 0.0;  // with respect to the logit
};
ScalarLossGrad binary_ce(double prob, int label);
double sigmoid(double x);
std::vector<double> softmax(std::span<const double> logits);

// --- Optimization -------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(AdamConfig, lr, beta1, beta2, eps)

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
  void step(std::span<const ParamRef> params);

  const AdamConfig& config() const { return cfg_; }
  std::uint64_t steps() const { return t_; }
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void set_steps(std::uint64_t t) { t_ = t; }

 private:
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::uint64_t t_ = 0;
};

/// shadow <- m * shadow + (1 - m) * current, elementwise.
void ema_update(std::span<const ParamRef> shadow, std::span<const ParamRef> current, double momentum);

/// Standalone EMA shadow of a parameter set.
class EmaTracker {
 public:
  EmaTracker(double momentum, std::span<const ParamRef> params);
  void update(std::span<const ParamRef> params);
  const std::vector<std::vector<double>>& shadow() const { return shadow_; }
  double momentum() const { return momentum_; }

 private:
  double momentum_;
  std::vector<std::vector<double>> shadow_;
};

/// Rounds every value to the nearest float32.
void round_to_f32(std::span<const ParamRef> params);

// --- Verification -------------------------------------------------------------

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "<param>[index]" or "input[index]"
  std::size_t checked = 0;
};

/// Relative error used by every finite-difference check in the project.
double relative_error(double analytic, double numeric);

/// Central differences of L = sum(output * R) (R fixed, from `seed`) for every
/// parameter and input element. Dropout masks are recorded once and frozen.
GradCheckResult grad_check(Net& net, const Tensor& input, double step, std::uint64_t seed = 7);

// --- Checkpoints --------------------------------------------------------------

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a(std::span<const unsigned char> bytes);

/// Writes `<stem>.json` (manifest) and `<stem>.bin` (little-endian float32 of
/// every parameter in order).
void save_checkpoint(const std::filesystem::path& stem, json manifest, std::span<const ParamRef> params);
/// Reads a checkpoint into `params` (counts and shapes must match); returns the manifest.
json load_checkpoint(const std::filesystem::path& stem, std::span<const ParamRef> params);
json read_manifest(const std::filesystem::path& stem);

}  // namespace ohda::nn
