#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "oodbatch/data.hpp"
#include "oodbatch/linalg.hpp"

namespace oodbatch {

enum class ModelKind : std::uint8_t { logistic = 0, mlp1 = 1 };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

struct ModelSpec {
  ModelKind kind = ModelKind::mlp1;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 64;  // mlp1 only
  std::size_t output_dim = 0;

  void validate() const;
  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Offsets into the flat parameter vector. Weight matrices are row-major
/// (out x in). logistic: W, b. mlp1: W1, b1, W2, b2.
struct ParamLayout {
  std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0;
  std::size_t total = 0;
};

ParamLayout param_layout(const ModelSpec& spec);

struct ModelState {
  ModelSpec spec;
  Vector params;
  Vector adam_m;
  Vector adam_v;
  Vector adam_vhat_max;
  std::int64_t step_count = 0;
};

struct OptimConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool amsgrad = true;

  void validate() const;
};

struct LossWeights {
  std::vector<double> pos_weight;
};

/// Glorot-uniform weights, zero biases, zero optimizer state.
ModelState init_model(const ModelSpec& spec, std::uint64_t seed);

/// rows x output_dim logits. mlp1 uses a ReLU hidden layer.
Matrix forward(const ModelState& state, const Matrix& features);

/// Reverse-mode gradient of sum(dloss_dlogits .* logits) w.r.t. the flat
/// parameters. ReLU'(0) is taken as 0.
Vector backward(const ModelState& state, const Matrix& features, const Matrix& dloss_dlogits);

/// n_neg / n_pos per task; 1 when either count is zero.
LossWeights pos_weights_from_counts(std::span<const ClassCount> counts);

struct LossResult {
  double loss = 0.0;
  Matrix grad;  // d loss / d logits
  double n_present = 0.0;
  bool all_masked() const noexcept { return n_present == 0.0; }
};

/// Masked, positive-weighted BCE with logits:
///   l = mask * (w_t * y * softplus(-z) + (1 - y) * softplus(z))
/// summed and divided by max(1, sum(mask)).
LossResult wbce_loss(const Matrix& logits, const Matrix& labels, const Matrix& mask, const LossWeights& weights);

struct LossGrad {
  double loss = 0.0;
  Vector grads;
};

/// Elementwise sum over environments. Throws ConfigError on length mismatch
/// or an empty input.
LossGrad env_sum_loss(std::span<const LossGrad> per_env);

/// One Adam step in place, coupled L2 (weight decay added to the gradient).
/// With amsgrad the running max of the bias-corrected second moment is the
/// denominator.
void adam_step(ModelState& state, const Vector& grads, const OptimConfig& cfg);

// ---- checkpoint (OODC) ------------------------------------------------------
// Little-endian layout:
//   "OODC"            4 bytes
//   version           u16 (= 1)
//   kind              u8  (0 logistic, 1 mlp1)
//   reserved          u8  (= 0)
//   input_dim         u32
//   hidden_dim        u32
//   output_dim        u32
//   param_count       u64
//   step_count        i64
//   params, adam_m, adam_v, adam_vhat_max   param_count x f64 each

void write_checkpoint(std::ostream& out, const ModelState& state);
ModelState read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const ModelState& state);
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace oodbatch
