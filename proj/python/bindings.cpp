#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "oodbatch/augment.hpp"
#include "oodbatch/cli.hpp"
#include "oodbatch/data.hpp"
#include "oodbatch/errors.hpp"
#include "oodbatch/experiment.hpp"
#include "oodbatch/metrics.hpp"
#include "oodbatch/nn.hpp"

namespace py = pybind11;
using namespace oodbatch;

namespace {

/// Pixels are returned as one bytes object, images back to back, row-major.
py::dict environment_to_dict(const Environment& env) {
  py::dict d;
  d["name"] = env.name();
  d["tasks"] = env.manifest.tasks.names();
  std::vector<std::vector<int>> labels;
  std::vector<std::string> ids;
  for (const auto& r : env.manifest.records) {
    ids.push_back(r.id);
    std::vector<int> row;
    for (Label l : r.labels) row.push_back(static_cast<int>(l));
    labels.push_back(std::move(row));
  }
  d["ids"] = ids;
  d["labels"] = labels;
  d["height"] = env.pack.height;
  d["width"] = env.pack.width;
  d["pixels"] = py::bytes(reinterpret_cast<const char*>(env.pack.pixels.data()), env.pack.pixels.size());
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Balanced per-environment batching: core operations";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_RuntimeError);

  m.def(
      "generate_synthetic",
      [](std::size_t n_envs, std::size_t n_per_env, std::size_t image_size, double core,
         std::vector<double> spurious, double noise, double missing, std::uint64_t seed) {
        SynthConfig cfg;
        cfg.n_envs = n_envs;
        cfg.n_per_env = n_per_env;
        cfg.image_size = image_size;
        cfg.core_strength = core;
        if (!spurious.empty()) cfg.spurious_strength = std::move(spurious);
        cfg.noise_std = noise;
        cfg.missing_rate = missing;
        cfg.seed = seed;
        py::list out;
        for (const auto& env : generate_synthetic(cfg)) out.append(environment_to_dict(env));
        return out;
      },
      py::arg("n_envs") = 4, py::arg("n_per_env") = 1000, py::arg("image_size") = 16, py::arg("core") = 0.6,
      py::arg("spurious") = std::vector<double>{}, py::arg("noise") = 0.05, py::arg("missing") = 0.1,
      py::arg("seed") = 0,
      "Synthetic environments as dicts (name, tasks, ids, labels with -1 for missing, height, width, pixels).");

  m.def(
      "roc_auc",
      [](const std::vector<double>& scores, const std::vector<int>& labels) { return roc_auc(scores, labels); },
      py::arg("scores"), py::arg("labels"), "Rank-based ROC-AUC; None when a class is absent.");

  m.def(
      "wbce_loss",
      [](const Matrix& logits, const Matrix& labels, const Matrix& mask, std::vector<double> pos_weight) {
        const auto r = wbce_loss(logits, labels, mask, {std::move(pos_weight)});
        return py::make_tuple(r.loss, r.grad);
      },
      py::arg("logits"), py::arg("labels"), py::arg("mask"), py::arg("pos_weight"),
      "Masked positive-weighted BCE with logits; returns (loss, dloss_dlogits).");

  m.def(
      "enumerate_plans",
      [](const std::vector<std::string>& names, const std::string& preset) {
        std::vector<std::string> labels;
        for (const auto& p : enumerate_plans(names, parse_plan_preset(preset))) labels.push_back(p.label());
        return labels;
      },
      py::arg("names"), py::arg("preset") = "paper6", "Split labels TRAIN1_TRAIN2/VALID/TEST.");

  m.def(
      "sample_affine",
      [](std::uint64_t seed, double max_rotation, double max_translate, double scale_low, double scale_high) {
        AugmentConfig cfg;
        cfg.max_rotation = max_rotation;
        cfg.max_translate = max_translate;
        cfg.scale_low = scale_low;
        cfg.scale_high = scale_high;
        cfg.validate();
        Rng rng(seed);
        const auto p = sample_affine(cfg, rng);
        return py::make_tuple(p.rotation, p.translate_x, p.translate_y, p.scale);
      },
      py::arg("seed"), py::arg("max_rotation") = 45.0, py::arg("max_translate") = 0.15, py::arg("scale_low") = 0.85,
      py::arg("scale_high") = 1.15, "(rotation, translate_x, translate_y, scale) from a seeded stream.");

  m.def(
      "apply_affine",
      [](const std::vector<std::uint8_t>& image, std::size_t height, std::size_t width, double rotation,
         double translate_x, double translate_y, double scale, std::size_t out_size) {
        return apply_affine(image, height, width, {rotation, translate_x, translate_y, scale}, out_size);
      },
      py::arg("image"), py::arg("height"), py::arg("width"), py::arg("rotation") = 0.0, py::arg("translate_x") = 0.0,
      py::arg("translate_y") = 0.0, py::arg("scale") = 1.0, py::arg("out_size") = 112,
      "Resample an 8-bit image onto an out_size grid; values normalized to [-1, 1].");

  m.def(
      "init_model",
      [](const std::string& kind, std::size_t input_dim, std::size_t hidden_dim, std::size_t output_dim,
         std::uint64_t seed) {
        return Vector(init_model({parse_model_kind(kind), input_dim, hidden_dim, output_dim}, seed).params);
      },
      py::arg("kind"), py::arg("input_dim"), py::arg("hidden_dim") = 64, py::arg("output_dim") = 4,
      py::arg("seed") = 0, "Flat initial parameter vector.");

  m.def(
      "forward",
      [](const std::string& kind, std::size_t input_dim, std::size_t hidden_dim, std::size_t output_dim,
         const Vector& params, const Matrix& features) {
        ModelState s = init_model({parse_model_kind(kind), input_dim, hidden_dim, output_dim}, 0);
        if (params.size() != s.params.size()) throw ConfigError("parameter vector does not match model spec");
        s.params = params;
        return Matrix(forward(s, features));
      },
      py::arg("kind"), py::arg("input_dim"), py::arg("hidden_dim"), py::arg("output_dim"), py::arg("params"),
      py::arg("features"), "Logits for a batch of flattened features.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run the oodbatch command line in-process; returns (exit_code, stdout, stderr).");
}
