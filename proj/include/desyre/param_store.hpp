#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "desyre/tensor.hpp"

namespace desyre {

enum class ParamRole { kEncoder, kDecoder };

/// Named trainable tensors for one network. Names are unique by
/// construction (std::map) and iteration order is deterministic, which
/// fixes serialization order and gradient reduction order.
struct ParamStore {
    ParamRole role = ParamRole::kDecoder;
    std::map<std::string, Tensor> params;

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    void insert(const std::string& name, Tensor t);
    bool contains(const std::string& name) const { return params.count(name) > 0; }

    std::int64_t total_parameters() const;

    /// Throws naming the first non-finite parameter.
    void check_finite() const;

    void save(const std::filesystem::path& path) const;
    static ParamStore load(const std::filesystem::path& path, ParamRole role);
};

using GradMap = std::map<std::string, Tensor>;

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
};

/// Bias-corrected Adam update, elementwise, applied in parameter-name
/// order. t is the 1-based step index. Rejects non-finite gradients,
/// reporting the offending parameter.
void adam_step(ParamStore& params, const GradMap& grads, AdamState& state, const AdamConfig& cfg,
               long t);

}  // namespace desyre
