#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "lowdiff/tensor.hpp"

namespace lowdiff {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Named parameters plus per-parameter Adam state. The per-parameter step
// counter matters: masked updates advance different parameters at different
// rates, and bias correction has to follow each one individually.
template <class T>
class ParamStore {
public:
    struct Slot {
        Tensor<T> value;
        Tensor<T> m;
        Tensor<T> v;
        std::int64_t step = 0;
    };

    void add(const std::string& name, Tensor<T> value) {
        if (slots_.count(name)) throw std::invalid_argument("param store: duplicate name " + name);
        Slot s;
        s.m = Tensor<T>(value.shape());
        s.v = Tensor<T>(value.shape());
        s.value = std::move(value);
        slots_.emplace(name, std::move(s));
    }

    bool has(const std::string& name) const { return slots_.count(name) != 0; }

    Tensor<T>& get(const std::string& name) { return slot(name).value; }
    const Tensor<T>& get(const std::string& name) const { return slot(name).value; }

    Slot& slot(const std::string& name) {
        auto it = slots_.find(name);
        if (it == slots_.end()) throw std::invalid_argument("param store: unknown name " + name);
        return it->second;
    }
    const Slot& slot(const std::string& name) const {
        auto it = slots_.find(name);
        if (it == slots_.end()) throw std::invalid_argument("param store: unknown name " + name);
        return it->second;
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(slots_.size());
        for (const auto& kv : slots_) out.push_back(kv.first);
        return out;
    }

    std::size_t size() const { return slots_.size(); }

    std::int64_t scalar_count() const {
        std::int64_t n = 0;
        for (const auto& kv : slots_) n += kv.second.value.numel();
        return n;
    }

    auto begin() { return slots_.begin(); }
    auto end() { return slots_.end(); }
    auto begin() const { return slots_.begin(); }
    auto end() const { return slots_.end(); }

private:
    std::map<std::string, Slot> slots_;
};

// Bias-corrected Adam applied only to the keys present in grads; every other
// parameter (and its optimizer state) stays bit-identical.
template <class T>
void adam_step(ParamStore<T>& params, const std::map<std::string, Tensor<T>>& grads, const AdamConfig& cfg) {
    for (const auto& [name, g] : grads) {
        auto& slot = params.slot(name);
        if (!slot.value.same_shape(g))
            throw std::invalid_argument("adam_step: gradient shape " + shape_str(g.shape()) + " for " + name +
                                        " does not match parameter " + shape_str(slot.value.shape()));
        for (std::int64_t i = 0; i < g.numel(); ++i)
            if (!std::isfinite(static_cast<double>(g[i])))
                throw std::runtime_error("adam_step: non-finite gradient for parameter " + name);
        slot.step += 1;
        const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
        const T bc1 = T(1) - static_cast<T>(std::pow(cfg.beta1, static_cast<double>(slot.step)));
        const T bc2 = T(1) - static_cast<T>(std::pow(cfg.beta2, static_cast<double>(slot.step)));
        const T lr = static_cast<T>(cfg.lr), eps = static_cast<T>(cfg.eps);
        for (std::int64_t i = 0; i < g.numel(); ++i) {
            slot.m[i] = b1 * slot.m[i] + (T(1) - b1) * g[i];
            slot.v[i] = b2 * slot.v[i] + (T(1) - b2) * g[i] * g[i];
            const T mhat = slot.m[i] / bc1;
            const T vhat = slot.v[i] / bc2;
            slot.value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

}  // namespace lowdiff
