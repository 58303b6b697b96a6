#pragma once

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lowdiff/ops.hpp"
#include "lowdiff/tensor.hpp"

namespace lowdiff {

// Reverse-mode tape over the kernel set in ops.hpp. Nodes are appended in
// evaluation order, so inputs of node k always have id < k and one backward
// sweep visits each node exactly once.
template <class T>
class Tape {
public:
    using Id = int;

    enum class Op {
        input,
        param,
        conv2d,
        avg_pool2,
        upsample,
        dense,
        silu,
        group_norm,
        concat_c,
        add,
        sub,
        mul,
        scale,
        channel_bias,
        sum,
    };

    Id input(Tensor<T> v) { return push(Op::input, {-1, -1, -1}, std::move(v)); }

    Id param(const std::string& name, Tensor<T> v) {
        Id id = push(Op::param, {-1, -1, -1}, std::move(v));
        nodes_[id].name = name;
        return id;
    }

    Id conv2d(Id x, Id w, Id b, int pad) {
        Id id = push(Op::conv2d, {x, w, b}, conv2d_fwd(val(x), val(w), val(b), pad));
        nodes_[id].iattr = pad;
        return id;
    }

    Id avg_pool2(Id x) { return push(Op::avg_pool2, {x, -1, -1}, avg_pool2_fwd(val(x))); }

    Id upsample2(Id x, UpsampleMode mode) {
        Id id = push(Op::upsample, {x, -1, -1}, upsample2_fwd(val(x), mode));
        nodes_[id].iattr = static_cast<int>(mode);
        return id;
    }

    // bias node id may be -1 for no bias
    Id dense(Id x, Id w, Id b) {
        static const Tensor<T> no_bias;
        Id id = push(Op::dense, {x, w, b}, dense_fwd(val(x), val(w), b < 0 ? no_bias : val(b)));
        return id;
    }

    Id silu(Id x) { return push(Op::silu, {x, -1, -1}, silu_fwd(val(x))); }

    Id group_norm(Id x, Id gamma, Id beta, int groups) {
        Tensor<T> mean, inv;
        Tensor<T> y = group_norm_fwd(val(x), val(gamma), val(beta), groups, &mean, &inv);
        Id id = push(Op::group_norm, {x, gamma, beta}, std::move(y));
        nodes_[id].iattr = groups;
        nodes_[id].aux.push_back(std::move(mean));
        nodes_[id].aux.push_back(std::move(inv));
        return id;
    }

    Id concat_channels(Id a, Id b) { return push(Op::concat_c, {a, b, -1}, concat_channels_fwd(val(a), val(b))); }

    Id add(Id a, Id b) { return push(Op::add, {a, b, -1}, ew_add(val(a), val(b))); }
    Id sub(Id a, Id b) { return push(Op::sub, {a, b, -1}, ew_sub(val(a), val(b))); }
    Id mul(Id a, Id b) { return push(Op::mul, {a, b, -1}, ew_mul(val(a), val(b))); }

    Id scale(Id a, T c) {
        Id id = push(Op::scale, {a, -1, -1}, ew_scale(val(a), c));
        nodes_[id].sattr = c;
        return id;
    }

    Id channel_bias(Id x, Id e) { return push(Op::channel_bias, {x, e, -1}, channel_bias_fwd(val(x), val(e))); }

    Id sum(Id a) {
        Tensor<T> s({1});
        s[0] = reduce_sum(val(a));
        return push(Op::sum, {a, -1, -1}, std::move(s));
    }

    const Tensor<T>& value(Id id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    std::size_t size() const { return nodes_.size(); }

    // Gradients of a scalar loss with respect to every parameter node that is
    // an ancestor of it; parameters the loss does not depend on get no entry.
    std::map<std::string, Tensor<T>> backward(Id loss) {
        if (loss < 0 || loss >= static_cast<Id>(nodes_.size())) throw std::invalid_argument("backward: bad node id");
        if (nodes_[loss].value.numel() != 1)
            throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                        shape_str(nodes_[loss].value.shape()));
        std::vector<char> reach(nodes_.size(), 0);
        std::vector<Id> stack{loss};
        reach[loss] = 1;
        while (!stack.empty()) {
            Id id = stack.back();
            stack.pop_back();
            for (Id in : nodes_[id].in)
                if (in >= 0 && !reach[in]) {
                    reach[in] = 1;
                    stack.push_back(in);
                }
        }
        std::vector<Tensor<T>> grad(nodes_.size());
        grad[loss] = Tensor<T>::full({1}, T(1));
        for (Id id = loss; id >= 0; --id) {
            if (!reach[id] || grad[id].empty()) continue;
            propagate(id, grad);
        }
        std::map<std::string, Tensor<T>> out;
        for (Id id = 0; id < static_cast<Id>(nodes_.size()); ++id) {
            if (nodes_[id].op == Op::param && reach[id]) {
                if (grad[id].empty()) grad[id] = Tensor<T>(nodes_[id].value.shape());
                out.emplace(nodes_[id].name, std::move(grad[id]));
            }
        }
        return out;
    }

private:
    struct Node {
        Op op;
        std::array<Id, 3> in;
        Tensor<T> value;
        std::string name;            // param nodes only
        int iattr = 0;               // pad / groups / upsample mode
        T sattr = T(0);              // scale factor
        std::vector<Tensor<T>> aux;  // group_norm saved statistics
    };

    Id push(Op op, std::array<Id, 3> in, Tensor<T> v) {
        nodes_.push_back(Node{op, in, std::move(v), {}, 0, T(0), {}});
        return static_cast<Id>(nodes_.size() - 1);
    }

    const Tensor<T>& val(Id id) const { return nodes_[static_cast<std::size_t>(id)].value; }

    static void accumulate(std::vector<Tensor<T>>& grad, Id id, Tensor<T> g) {
        if (grad[id].empty())
            grad[id] = std::move(g);
        else
            for (std::int64_t i = 0; i < g.numel(); ++i) grad[id][i] += g[i];
    }

    void propagate(Id id, std::vector<Tensor<T>>& grad) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        const Tensor<T>& dy = grad[id];
        switch (n.op) {
            case Op::input:
            case Op::param:
                break;
            case Op::conv2d: {
                Tensor<T> dx, dw, db;
                conv2d_bwd(val(n.in[0]), val(n.in[1]), n.iattr, dy, dx, dw, db);
                accumulate(grad, n.in[0], std::move(dx));
                accumulate(grad, n.in[1], std::move(dw));
                accumulate(grad, n.in[2], std::move(db));
                break;
            }
            case Op::avg_pool2:
                accumulate(grad, n.in[0], avg_pool2_bwd(val(n.in[0]), dy));
                break;
            case Op::upsample:
                accumulate(grad, n.in[0], upsample2_bwd(val(n.in[0]), dy, static_cast<UpsampleMode>(n.iattr)));
                break;
            case Op::dense: {
                Tensor<T> dx, dw, db;
                dense_bwd(val(n.in[0]), val(n.in[1]), n.in[2] >= 0, dy, dx, dw, db);
                accumulate(grad, n.in[0], std::move(dx));
                accumulate(grad, n.in[1], std::move(dw));
                if (n.in[2] >= 0) accumulate(grad, n.in[2], std::move(db));
                break;
            }
            case Op::silu:
                accumulate(grad, n.in[0], silu_bwd(val(n.in[0]), dy));
                break;
            case Op::group_norm: {
                Tensor<T> dx, dgamma, dbeta;
                group_norm_bwd(val(n.in[0]), val(n.in[1]), n.iattr, n.aux[0], n.aux[1], dy, dx, dgamma, dbeta);
                accumulate(grad, n.in[0], std::move(dx));
                accumulate(grad, n.in[1], std::move(dgamma));
                accumulate(grad, n.in[2], std::move(dbeta));
                break;
            }
            case Op::concat_c: {
                const Tensor<T>& a = val(n.in[0]);
                const Tensor<T>& b = val(n.in[1]);
                const std::int64_t B = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), HW = a.dim(2) * a.dim(3);
                Tensor<T> da(a.shape()), db(b.shape());
                for (std::int64_t bi = 0; bi < B; ++bi) {
                    std::copy_n(&dy.at4(bi, 0, 0, 0), Ca * HW, &da.at4(bi, 0, 0, 0));
                    std::copy_n(&dy.at4(bi, Ca, 0, 0), Cb * HW, &db.at4(bi, 0, 0, 0));
                }
                accumulate(grad, n.in[0], std::move(da));
                accumulate(grad, n.in[1], std::move(db));
                break;
            }
            case Op::add:
                accumulate(grad, n.in[0], dy);
                accumulate(grad, n.in[1], dy);
                break;
            case Op::sub:
                accumulate(grad, n.in[0], dy);
                accumulate(grad, n.in[1], ew_scale(dy, T(-1)));
                break;
            case Op::mul:
                accumulate(grad, n.in[0], ew_mul(dy, val(n.in[1])));
                accumulate(grad, n.in[1], ew_mul(dy, val(n.in[0])));
                break;
            case Op::scale:
                accumulate(grad, n.in[0], ew_scale(dy, n.sattr));
                break;
            case Op::channel_bias:
                accumulate(grad, n.in[0], dy);
                accumulate(grad, n.in[1], channel_bias_bwd_e(dy));
                break;
            case Op::sum:
                accumulate(grad, n.in[0], Tensor<T>::full(val(n.in[0]).shape(), dy[0]));
                break;
        }
    }

    std::vector<Node> nodes_;
};

// Evaluation contexts: the network forward is written once against this
// interface and runs either eagerly (sampling) or recorded (training).

template <class T>
struct EagerCtx {
    using Ref = std::shared_ptr<const Tensor<T>>;

    std::function<const Tensor<T>&(const std::string&)> lookup;

    static Ref alias(const Tensor<T>& t) {
        return Ref(&t, [](const Tensor<T>*) {});
    }
    static Ref own(Tensor<T> t) { return std::make_shared<const Tensor<T>>(std::move(t)); }

    Ref param(const std::string& n) { return alias(lookup(n)); }
    Ref input(Tensor<T> v) { return own(std::move(v)); }
    Ref conv2d(Ref x, Ref w, Ref b, int pad) { return own(conv2d_fwd(*x, *w, *b, pad)); }
    Ref avg_pool2(Ref x) { return own(avg_pool2_fwd(*x)); }
    Ref upsample2(Ref x, UpsampleMode m) { return own(upsample2_fwd(*x, m)); }
    Ref dense(Ref x, Ref w, Ref b) {
        static const Tensor<T> no_bias;
        return own(dense_fwd(*x, *w, b ? *b : no_bias));
    }
    Ref silu(Ref x) { return own(silu_fwd(*x)); }
    Ref group_norm(Ref x, Ref gamma, Ref beta, int groups) { return own(group_norm_fwd(*x, *gamma, *beta, groups)); }
    Ref concat_channels(Ref a, Ref b) { return own(concat_channels_fwd(*a, *b)); }
    Ref add(Ref a, Ref b) { return own(ew_add(*a, *b)); }
    Ref scale(Ref a, T c) { return own(ew_scale(*a, c)); }
    Ref channel_bias(Ref x, Ref e) { return own(channel_bias_fwd(*x, *e)); }
    static Ref none() { return nullptr; }
    static bool is_none(const Ref& r) { return r == nullptr; }
    const Tensor<T>& value(const Ref& r) const { return *r; }
};

template <class T>
struct TapeCtx {
    using Ref = typename Tape<T>::Id;

    Tape<T>* tape;
    std::function<const Tensor<T>&(const std::string&)> lookup;
    std::map<std::string, Ref> cache;

    Ref param(const std::string& n) {
        auto it = cache.find(n);
        if (it != cache.end()) return it->second;
        Ref id = tape->param(n, lookup(n));
        cache.emplace(n, id);
        return id;
    }
    Ref input(Tensor<T> v) { return tape->input(std::move(v)); }
    Ref conv2d(Ref x, Ref w, Ref b, int pad) { return tape->conv2d(x, w, b, pad); }
    Ref avg_pool2(Ref x) { return tape->avg_pool2(x); }
    Ref upsample2(Ref x, UpsampleMode m) { return tape->upsample2(x, m); }
    Ref dense(Ref x, Ref w, Ref b) { return tape->dense(x, w, b); }
    Ref silu(Ref x) { return tape->silu(x); }
    Ref group_norm(Ref x, Ref gamma, Ref beta, int groups) { return tape->group_norm(x, gamma, beta, groups); }
    Ref concat_channels(Ref a, Ref b) { return tape->concat_channels(a, b); }
    Ref add(Ref a, Ref b) { return tape->add(a, b); }
    Ref scale(Ref a, T c) { return tape->scale(a, c); }
    Ref channel_bias(Ref x, Ref e) { return tape->channel_bias(x, e); }
    static Ref none() { return -1; }
    static bool is_none(Ref r) { return r < 0; }
    const Tensor<T>& value(Ref r) const { return tape->value(r); }
};

}  // namespace lowdiff
