#pragma once

// Dense tensor with tape-free reverse-mode autodiff.
//
// A Tensor is a shared handle: copies alias the same storage and graph node,
// like torch::Tensor. Use clone() for an independent copy. Every op records
// its parents and a backward closure when any input requires a gradient and
// gradient recording is enabled (see no_grad_guard).

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "diffuseraw/error.hpp"

namespace diffuseraw::nn {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
}

inline std::string shape_string(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

namespace detail {

inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until the first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this->grad and accumulates into parents' grads.
    std::function<void(Node&)> backward;

    std::vector<T>& ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
        return grad;
    }
};

} // namespace detail

// Disables graph recording for the enclosing scope (inference, EMA updates).
class no_grad_guard {
public:
    no_grad_guard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
    ~no_grad_guard() { detail::grad_mode() = prev_; }
    no_grad_guard(const no_grad_guard&) = delete;
    no_grad_guard& operator=(const no_grad_guard&) = delete;

private:
    bool prev_;
};

inline bool grad_enabled() { return detail::grad_mode(); }

template <typename T>
class Tensor {
public:
    using value_type = T;
    using node_type = detail::Node<T>;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false)
        : node_(std::make_shared<node_type>()) {
        check_shape(shape);
        node_->data.assign(shape_numel(shape), fill);
        node_->shape = std::move(shape);
        node_->requires_grad = requires_grad;
    }

    Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
        : node_(std::make_shared<node_type>()) {
        check_shape(shape);
        if (values.size() != shape_numel(shape)) {
            throw dimension_error("Tensor: " + std::to_string(values.size()) +
                                  " values do not fill shape " + shape_string(shape));
        }
        node_->data = std::move(values);
        node_->shape = std::move(shape);
        node_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return Tensor(std::move(shape), T(0), requires_grad);
    }

    template <typename Rng>
    static Tensor randn(Shape shape, Rng& rng, T stddev = T(1), bool requires_grad = false) {
        Tensor t(std::move(shape), T(0), requires_grad);
        std::normal_distribution<double> nd(0.0, 1.0);
        for (auto& v : t.node_->data) v = static_cast<T>(stddev * nd(rng));
        return t;
    }

    template <typename Rng>
    static Tensor uniform(Shape shape, Rng& rng, T lo, T hi, bool requires_grad = false) {
        Tensor t(std::move(shape), T(0), requires_grad);
        std::uniform_real_distribution<double> ud(lo, hi);
        for (auto& v : t.node_->data) v = static_cast<T>(ud(rng));
        return t;
    }

    bool defined() const { return static_cast<bool>(node_); }

    const Shape& shape() const { return node().shape; }
    int rank() const { return static_cast<int>(node().shape.size()); }
    int dim(int i) const { return node().shape.at(static_cast<std::size_t>(i)); }
    std::size_t numel() const { return node().data.size(); }

    std::span<T> data() { return node().data; }
    std::span<const T> data() const { return node().data; }
    std::vector<T>& values() { return node().data; }
    const std::vector<T>& values() const { return node().data; }

    bool has_grad() const { return node().grad.size() == node().data.size(); }
    std::span<T> grad() { return node().ensure_grad(); }
    std::span<const T> grad() const { return node_->grad; }
    void zero_grad() {
        if (!node().grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
    }

    bool requires_grad() const { return node().requires_grad; }
    Tensor& set_requires_grad(bool on) {
        node().requires_grad = on;
        return *this;
    }

    T item() const {
        if (numel() != 1) throw dimension_error("item(): tensor has shape " + shape_string(shape()));
        return node().data[0];
    }

    // Independent leaf with a copy of the data; gradient flag is not copied.
    Tensor clone() const { return Tensor(shape(), node().data); }
    // Leaf sharing nothing with the graph.
    Tensor detach() const { return clone(); }

    // Same storage, new shape. The result participates in the graph.
    Tensor reshape(Shape new_shape) const;

    // Backpropagates from a scalar tensor, seeding d(self)/d(self) = 1.
    void backward() {
        if (numel() != 1) {
            throw dimension_error("backward(): expected a scalar, got shape " + shape_string(shape()));
        }
        node().ensure_grad()[0] = T(1);
        run_backward();
    }

    // Backpropagates with an explicit upstream gradient.
    void backward(std::span<const T> upstream) {
        if (upstream.size() != numel()) throw dimension_error("backward(): upstream size mismatch");
        auto& g = node().ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += upstream[i];
        run_backward();
    }

    node_type& node() {
        if (!node_) throw dimension_error("use of an undefined tensor");
        return *node_;
    }
    const node_type& node() const {
        if (!node_) throw dimension_error("use of an undefined tensor");
        return *node_;
    }
    const std::shared_ptr<node_type>& node_ptr() const { return node_; }

    // Builds an op result. Parents and backward are kept only when a gradient
    // is needed.
    static Tensor make_result(Shape shape, std::vector<T> values,
                              std::vector<std::shared_ptr<node_type>> parents,
                              std::function<void(node_type&)> backward) {
        Tensor out(std::move(shape), std::move(values));
        bool needs = grad_enabled() &&
                     std::any_of(parents.begin(), parents.end(),
                                 [](const auto& p) { return p && p->requires_grad; });
        if (needs) {
            out.node_->requires_grad = true;
            out.node_->parents = std::move(parents);
            out.node_->backward = std::move(backward);
        }
        return out;
    }

private:
    static void check_shape(const Shape& s) {
        for (int d : s) {
            if (d < 0) throw dimension_error("Tensor: negative dimension in " + shape_string(s));
        }
    }

    void run_backward() {
        // Iterative post-order DFS for a topological order.
        std::vector<node_type*> order;
        std::unordered_set<node_type*> seen;
        std::vector<std::pair<node_type*, std::size_t>> stack{{node_.get(), 0}};
        seen.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, next] = stack.back();
            if (next < n->parents.size()) {
                node_type* p = n->parents[next++].get();
                if (p && p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            node_type* n = *it;
            if (n->backward && n->grad.size() == n->data.size()) n->backward(*n);
        }
    }

    std::shared_ptr<node_type> node_;
};

template <typename T>
Tensor<T> Tensor<T>::reshape(Shape new_shape) const {
    if (shape_numel(new_shape) != numel()) {
        throw dimension_error("reshape: cannot view " + shape_string(shape()) + " as " +
                              shape_string(new_shape));
    }
    auto src = node_;
    return make_result(std::move(new_shape), src->data, {src}, [](node_type& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

} // namespace diffuseraw::nn
