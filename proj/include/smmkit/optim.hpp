#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "smmkit/layers.hpp"
#include "smmkit/tensor.hpp"

namespace smm {

struct NamedTensor {
    std::string name;
    Tensor value;
};

/// Ordered list of every trainable parameter of a model. Names are unique
/// and the order is stable across save/load, which makes the set the unit
/// of parameter transfer between models.
using ParamSet = std::vector<NamedTensor>;

enum class OptimKind { sgd_momentum, rmsprop };

struct OptimizerState {
    OptimKind kind = OptimKind::sgd_momentum;
    double learning_rate = 0.01;
    double momentum = 0.9; // sgd_momentum
    double decay = 0.9;    // rmsprop
    double epsilon = 1e-8; // rmsprop
    std::map<std::string, Tensor> accum;
};

OptimizerState make_sgd_momentum(double learning_rate, double momentum = 0.9);
OptimizerState make_rmsprop(double learning_rate = 1e-3, double decay = 0.9,
                            double epsilon = 1e-8);

/// v <- mu*v - eta*g; p <- p + v. Grads must align with params by name and
/// shape, in order.
ParamSet sgd_momentum_step(OptimizerState& state, const ParamSet& params, const ParamSet& grads);

/// s <- rho*s + (1-rho)*g^2; p <- p - eta*g/(sqrt(s) + eps).
ParamSet rmsprop_step(OptimizerState& state, const ParamSet& params, const ParamSet& grads);

/// Dispatch on state.kind.
ParamSet optimizer_step(OptimizerState& state, const ParamSet& params, const ParamSet& grads);

/// Update live model bindings in place: accumulated gradients are scaled by
/// `grad_scale` (typically 1/batch) before the step.
void apply_step(OptimizerState& state, const std::vector<ParamBinding>& bindings,
                double grad_scale);

ParamSet snapshot(const std::vector<ParamBinding>& bindings);

/// Binary parameter file: 8-byte magic "SMMPARAM", u32 version, then one
/// record per tensor (u32 name length, UTF-8 name, u64 rank, u64 dims,
/// raw little-endian f64 values). Round-trip is bitwise lossless.
void save_params(const ParamSet& params, const std::string& path);
ParamSet load_params(const std::string& path);

} // namespace smm
