#include "desyre/param_store.hpp"

#include <cmath>

#include "desyre/io.hpp"

namespace desyre {

Tensor& ParamStore::at(const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw std::out_of_range("ParamStore: no parameter named " + name);
    return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw std::out_of_range("ParamStore: no parameter named " + name);
    return it->second;
}

void ParamStore::insert(const std::string& name, Tensor t) {
    if (!params.emplace(name, std::move(t)).second)
        throw std::invalid_argument("ParamStore: duplicate parameter name " + name);
}

std::int64_t ParamStore::total_parameters() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : params) n += t.numel();
    return n;
}

void ParamStore::check_finite() const {
    for (const auto& [name, t] : params)
        if (!all_finite(t))
            throw std::runtime_error("ParamStore: non-finite values in parameter " + name);
}

void ParamStore::save(const std::filesystem::path& path) const {
    std::vector<std::pair<std::string, Tensor>> tensors(params.begin(), params.end());
    io::write_dsr(path, tensors);
}

ParamStore ParamStore::load(const std::filesystem::path& path, ParamRole role) {
    ParamStore store;
    store.role = role;
    for (auto& [name, t] : io::read_dsr(path)) store.insert(name, std::move(t));
    return store;
}

void adam_step(ParamStore& params, const GradMap& grads, AdamState& state, const AdamConfig& cfg,
               long t) {
    if (t < 1) throw std::invalid_argument("adam_step: step index must be >= 1");
    if (!(cfg.lr > 0.0)) throw std::invalid_argument("adam_step: learning rate must be positive");
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (auto& [name, p] : params.params) {
        auto git = grads.find(name);
        if (git == grads.end()) continue;  // parameters without gradients stay put
        const Tensor& g = git->second;
        if (!g.same_shape(p))
            throw std::invalid_argument("adam_step: gradient shape " + shape_str(g.shape) +
                                        " does not match parameter " + name + " " +
                                        shape_str(p.shape));
        if (!all_finite(g))
            throw std::runtime_error("adam_step: non-finite gradient for parameter " + name);
        Tensor& m = state.m.try_emplace(name, Tensor::zeros(p.shape)).first->second;
        Tensor& v = state.v.try_emplace(name, Tensor::zeros(p.shape)).first->second;
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * g.data[i];
            v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * g.data[i] * g.data[i];
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            p.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

}  // namespace desyre
