#include "oodbatch/nn.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "binary_io.hpp"
#include "oodbatch/errors.hpp"
#include "oodbatch/rng.hpp"

namespace oodbatch {

namespace {

using ConstMatrixMap = Eigen::Map<const Matrix>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstRowVectorMap = Eigen::Map<const Eigen::RowVectorXd>;

Eigen::Index idx(std::size_t n) { return static_cast<Eigen::Index>(n); }

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_features(const ModelState& state, const Matrix& features) {
  if (static_cast<std::size_t>(features.cols()) != state.spec.input_dim)
    throw ConfigError("dimension mismatch: features have " + std::to_string(features.cols()) +
                      " columns, model expects " + std::to_string(state.spec.input_dim));
  if (static_cast<std::size_t>(state.params.size()) != param_layout(state.spec).total)
    throw ConfigError("dimension mismatch: parameter vector does not match model spec");
}

}  // namespace

std::string_view to_string(ModelKind kind) { return kind == ModelKind::logistic ? "logistic" : "mlp1"; }

ModelKind parse_model_kind(std::string_view text) {
  if (text == "logistic") return ModelKind::logistic;
  if (text == "mlp1") return ModelKind::mlp1;
  throw ConfigError("unknown model kind '" + std::string(text) + "' (expected logistic|mlp1)");
}

void ModelSpec::validate() const {
  if (input_dim < 1 || output_dim < 1) throw ConfigError("model dimensions must be >= 1");
  if (kind == ModelKind::mlp1 && hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
}

ParamLayout param_layout(const ModelSpec& spec) {
  ParamLayout l;
  if (spec.kind == ModelKind::logistic) {
    l.w1 = 0;
    l.b1 = spec.input_dim * spec.output_dim;
    l.total = l.b1 + spec.output_dim;
    l.w2 = l.b2 = l.total;
  } else {
    l.w1 = 0;
    l.b1 = spec.input_dim * spec.hidden_dim;
    l.w2 = l.b1 + spec.hidden_dim;
    l.b2 = l.w2 + spec.hidden_dim * spec.output_dim;
    l.total = l.b2 + spec.output_dim;
  }
  return l;
}

void OptimConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("beta1 and beta2 must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
}

ModelState init_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto layout = param_layout(spec);
  ModelState s;
  s.spec = spec;
  s.params = Vector::Zero(idx(layout.total));
  s.adam_m = Vector::Zero(idx(layout.total));
  s.adam_v = Vector::Zero(idx(layout.total));
  s.adam_vhat_max = Vector::Zero(idx(layout.total));

  Rng rng(seed);
  auto fill = [&](std::size_t offset, std::size_t fan_out, std::size_t fan_in) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < fan_out * fan_in; ++i) s.params[idx(offset + i)] = rng.uniform(-limit, limit);
  };
  if (spec.kind == ModelKind::logistic) {
    fill(layout.w1, spec.output_dim, spec.input_dim);
  } else {
    fill(layout.w1, spec.hidden_dim, spec.input_dim);
    fill(layout.w2, spec.output_dim, spec.hidden_dim);
  }
  return s;
}

Matrix forward(const ModelState& state, const Matrix& features) {
  check_features(state, features);
  const auto& spec = state.spec;
  const auto l = param_layout(spec);
  const double* p = state.params.data();

  if (spec.kind == ModelKind::logistic) {
    ConstMatrixMap W(p + l.w1, idx(spec.output_dim), idx(spec.input_dim));
    ConstRowVectorMap b(p + l.b1, idx(spec.output_dim));
    Matrix logits = features * W.transpose();
    logits.rowwise() += b;
    return logits;
  }
  ConstMatrixMap W1(p + l.w1, idx(spec.hidden_dim), idx(spec.input_dim));
  ConstRowVectorMap b1(p + l.b1, idx(spec.hidden_dim));
  ConstMatrixMap W2(p + l.w2, idx(spec.output_dim), idx(spec.hidden_dim));
  ConstRowVectorMap b2(p + l.b2, idx(spec.output_dim));
  Matrix hidden = features * W1.transpose();
  hidden.rowwise() += b1;
  hidden = hidden.cwiseMax(0.0);
  Matrix logits = hidden * W2.transpose();
  logits.rowwise() += b2;
  return logits;
}

Vector backward(const ModelState& state, const Matrix& features, const Matrix& dloss_dlogits) {
  check_features(state, features);
  const auto& spec = state.spec;
  if (dloss_dlogits.rows() != features.rows() || static_cast<std::size_t>(dloss_dlogits.cols()) != spec.output_dim)
    throw ConfigError("dimension mismatch: upstream gradient shape");
  const auto l = param_layout(spec);
  const double* p = state.params.data();
  Vector grads = Vector::Zero(idx(l.total));
  double* g = grads.data();

  if (spec.kind == ModelKind::logistic) {
    MatrixMap(g + l.w1, idx(spec.output_dim), idx(spec.input_dim)).noalias() = dloss_dlogits.transpose() * features;
    Eigen::Map<Eigen::RowVectorXd>(g + l.b1, idx(spec.output_dim)) = dloss_dlogits.colwise().sum();
    return grads;
  }

  ConstMatrixMap W1(p + l.w1, idx(spec.hidden_dim), idx(spec.input_dim));
  ConstRowVectorMap b1(p + l.b1, idx(spec.hidden_dim));
  ConstMatrixMap W2(p + l.w2, idx(spec.output_dim), idx(spec.hidden_dim));
  Matrix pre = features * W1.transpose();
  pre.rowwise() += b1;
  const Matrix hidden = pre.cwiseMax(0.0);

  MatrixMap(g + l.w2, idx(spec.output_dim), idx(spec.hidden_dim)).noalias() = dloss_dlogits.transpose() * hidden;
  Eigen::Map<Eigen::RowVectorXd>(g + l.b2, idx(spec.output_dim)) = dloss_dlogits.colwise().sum();
  Matrix dpre = dloss_dlogits * W2;
  dpre = (pre.array() > 0.0).select(dpre, 0.0);
  MatrixMap(g + l.w1, idx(spec.hidden_dim), idx(spec.input_dim)).noalias() = dpre.transpose() * features;
  Eigen::Map<Eigen::RowVectorXd>(g + l.b1, idx(spec.hidden_dim)) = dpre.colwise().sum();
  return grads;
}

LossWeights pos_weights_from_counts(std::span<const ClassCount> counts) {
  LossWeights w;
  w.pos_weight.reserve(counts.size());
  for (const auto& c : counts) {
    if (c.n_positive == 0 || c.n_negative == 0)
      w.pos_weight.push_back(1.0);
    else
      w.pos_weight.push_back(static_cast<double>(c.n_negative) / static_cast<double>(c.n_positive));
  }
  return w;
}

LossResult wbce_loss(const Matrix& logits, const Matrix& labels, const Matrix& mask, const LossWeights& weights) {
  if (labels.rows() != logits.rows() || labels.cols() != logits.cols() || mask.rows() != logits.rows() ||
      mask.cols() != logits.cols())
    throw ConfigError("wbce_loss: logits, labels and mask shapes disagree");
  if (weights.pos_weight.size() != static_cast<std::size_t>(logits.cols()))
    throw ConfigError("wbce_loss: pos_weight length differs from task count");

  LossResult r;
  r.grad = Matrix::Zero(logits.rows(), logits.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    for (Eigen::Index t = 0; t < logits.cols(); ++t) {
      if (mask(i, t) == 0.0) continue;
      const double z = logits(i, t);
      const double y = labels(i, t);
      const double w = weights.pos_weight[static_cast<std::size_t>(t)];
      const double m = mask(i, t);
      total += m * (w * y * softplus(-z) + (1.0 - y) * softplus(z));
      r.grad(i, t) = m * (-w * y * sigmoid(-z) + (1.0 - y) * sigmoid(z));
      r.n_present += m;
    }
  }
  const double denom = std::max(1.0, r.n_present);
  r.loss = total / denom;
  r.grad /= denom;
  return r;
}

LossGrad env_sum_loss(std::span<const LossGrad> per_env) {
  if (per_env.empty()) throw ConfigError("env_sum_loss: no environments");
  LossGrad total{0.0, Vector::Zero(per_env.front().grads.size())};
  for (const auto& e : per_env) {
    if (e.grads.size() != total.grads.size()) throw ConfigError("env_sum_loss: gradient length mismatch");
    total.loss += e.loss;
    total.grads += e.grads;
  }
  return total;
}

void adam_step(ModelState& s, const Vector& grads, const OptimConfig& cfg) {
  if (grads.size() != s.params.size()) throw ConfigError("adam_step: gradient length differs from parameter count");
  const double t = static_cast<double>(s.step_count + 1);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (Eigen::Index i = 0; i < s.params.size(); ++i) {
    const double g = grads[i] + cfg.weight_decay * s.params[i];
    s.adam_m[i] = cfg.beta1 * s.adam_m[i] + (1.0 - cfg.beta1) * g;
    s.adam_v[i] = cfg.beta2 * s.adam_v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = s.adam_m[i] / bc1;
    double v_hat = s.adam_v[i] / bc2;
    if (cfg.amsgrad) {
      s.adam_vhat_max[i] = std::max(s.adam_vhat_max[i], v_hat);
      v_hat = s.adam_vhat_max[i];
    }
    s.params[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
  ++s.step_count;
}

void write_checkpoint(std::ostream& out, const ModelState& s) {
  const auto n = static_cast<std::size_t>(s.params.size());
  if (n != param_layout(s.spec).total || static_cast<std::size_t>(s.adam_m.size()) != n ||
      static_cast<std::size_t>(s.adam_v.size()) != n || static_cast<std::size_t>(s.adam_vhat_max.size()) != n)
    throw ConfigError("write_checkpoint: inconsistent model state");
  out.write("OODC", 4);
  detail::put_le<std::uint16_t>(out, 1);
  detail::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(s.spec.kind));
  detail::put_le<std::uint8_t>(out, 0);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.spec.input_dim));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.spec.hidden_dim));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.spec.output_dim));
  detail::put_le<std::uint64_t>(out, n);
  detail::put_le<std::int64_t>(out, s.step_count);
  for (const Vector* v : {&s.params, &s.adam_m, &s.adam_v, &s.adam_vhat_max})
    for (Eigen::Index i = 0; i < v->size(); ++i) detail::put_le<double>(out, (*v)[i]);
}

ModelState read_checkpoint(std::istream& in) {
  detail::expect_magic(in, "OODC");
  const auto version = detail::get_le<std::uint16_t>(in, "version");
  if (version != 1) throw FormatError("unsupported OODC version " + std::to_string(version));
  ModelState s;
  const auto kind = detail::get_le<std::uint8_t>(in, "kind");
  if (kind > 1) throw FormatError("unknown model kind in checkpoint");
  s.spec.kind = static_cast<ModelKind>(kind);
  detail::get_le<std::uint8_t>(in, "reserved");
  s.spec.input_dim = detail::get_le<std::uint32_t>(in, "input_dim");
  s.spec.hidden_dim = detail::get_le<std::uint32_t>(in, "hidden_dim");
  s.spec.output_dim = detail::get_le<std::uint32_t>(in, "output_dim");
  const auto n = detail::get_le<std::uint64_t>(in, "param_count");
  s.step_count = detail::get_le<std::int64_t>(in, "step_count");
  try {
    s.spec.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid model spec in checkpoint: ") + e.what());
  }
  if (n != param_layout(s.spec).total) throw FormatError("checkpoint param_count does not match model spec");
  for (Vector* v : {&s.params, &s.adam_m, &s.adam_v, &s.adam_vhat_max}) {
    v->resize(idx(n));
    for (std::size_t i = 0; i < n; ++i) (*v)[idx(i)] = detail::get_le<double>(in, "parameters");
  }
  detail::expect_eof(in);
  return s;
}

void save_checkpoint(const std::filesystem::path& path, const ModelState& state) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  write_checkpoint(out, state);
  if (!out.flush()) throw std::runtime_error("write failed for " + path.string());
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace oodbatch
