#pragma once

#include <algorithm>
#include <functional>

#include "lowdiff/autodiff.hpp"
#include "lowdiff/optimizer.hpp"
#include "lowdiff/tensor.hpp"

namespace lowdiff {

// Max over coordinates of |autodiff - central difference| / max(1, |central difference|)
// for a scalar function built on a tape from a single input tensor.
template <class T>
T grad_check(const std::function<typename Tape<T>::Id(Tape<T>&, typename Tape<T>::Id)>& build, const Tensor<T>& x,
             T h = static_cast<T>(1e-4)) {
    Tape<T> tape;
    auto xid = tape.param("x", x);
    auto loss = build(tape, xid);
    auto grads = tape.backward(loss);
    const Tensor<T>& ad = grads.at("x");

    auto eval = [&](const Tensor<T>& at) {
        Tape<T> t;
        auto id = t.param("x", at);
        return t.value(build(t, id))[0];
    };

    T worst = 0;
    Tensor<T> probe = x;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const T orig = probe[i];
        probe[i] = orig + h;
        const T fp = eval(probe);
        probe[i] = orig - h;
        const T fm = eval(probe);
        probe[i] = orig;
        const T fd = (fp - fm) / (2 * h);
        const T err = std::abs(ad[i] - fd) / std::max(T(1), std::abs(fd));
        worst = std::max(worst, err);
    }
    return worst;
}

// Same check for a scalar loss over a parameter store: central differences on
// every coordinate of every parameter that received a gradient entry.
template <class T>
T grad_check_params(const std::function<T()>& loss_fn, ParamStore<T>& params,
                    const std::map<std::string, Tensor<T>>& grads, T h = static_cast<T>(1e-4)) {
    T worst = 0;
    for (const auto& [name, g] : grads) {
        Tensor<T>& value = params.get(name);
        for (std::int64_t i = 0; i < value.numel(); ++i) {
            const T orig = value[i];
            value[i] = orig + h;
            const T fp = loss_fn();
            value[i] = orig - h;
            const T fm = loss_fn();
            value[i] = orig;
            const T fd = (fp - fm) / (2 * h);
            const T err = std::abs(g[i] - fd) / std::max(T(1), std::abs(fd));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace lowdiff
