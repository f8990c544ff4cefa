#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <vector>

#include "odgen/core/error.hpp"

namespace odgen::nn {

template <typename S>
struct TensorData {
    std::vector<int> shape;
    std::vector<S> val;
    std::vector<S> grad;  // allocated on first backward touch
    bool requires_grad = false;

    int64_t numel() const {
        int64_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }
    void ensure_grad() {
        if (grad.empty()) grad.assign(val.size(), S(0));
    }
};

// Value-semantics handle to a node in the computation graph.
template <typename S>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        auto d = std::make_shared<TensorData<S>>();
        d->shape = std::move(shape);
        d->val.assign(static_cast<size_t>(d->numel()), S(0));
        d->requires_grad = requires_grad;
        return Tensor(std::move(d));
    }

    static Tensor from_values(std::vector<int> shape, std::vector<S> values,
                              bool requires_grad = false) {
        auto t = zeros(std::move(shape), requires_grad);
        if (static_cast<int64_t>(values.size()) != t.numel()) {
            throw ShapeMismatchError("from_values: element count does not match shape");
        }
        t.data()->val = std::move(values);
        return t;
    }

    bool defined() const { return static_cast<bool>(d_); }
    const std::vector<int>& shape() const { return d_->shape; }
    int dim(int i) const { return d_->shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(d_->shape.size()); }
    int64_t numel() const { return d_->numel(); }
    bool requires_grad() const { return d_->requires_grad; }

    S* val() { return d_->val.data(); }
    const S* val() const { return d_->val.data(); }
    S* grad() { return d_->grad.data(); }
    const S* grad() const { return d_->grad.data(); }

    std::shared_ptr<TensorData<S>>& data() { return d_; }
    const std::shared_ptr<TensorData<S>>& data() const { return d_; }

    S item() const { return d_->val.at(0); }

    bool same_shape(const Tensor& other) const { return d_->shape == other.d_->shape; }

private:
    explicit Tensor(std::shared_ptr<TensorData<S>> d) : d_(std::move(d)) {}
    std::shared_ptr<TensorData<S>> d_;

    template <typename T>
    friend class Graph;
};

// Records backward closures in creation order; backward() replays them in
// reverse, which is a valid reverse-topological order of the graph.
template <typename S>
class Graph {
public:
    explicit Graph(bool grad_enabled = true) : grad_(grad_enabled) {}

    bool grad_enabled() const { return grad_; }

    void record(std::function<void()> fn) {
        if (grad_) tape_.push_back(std::move(fn));
    }

    void backward(Tensor<S> root) {
        if (!grad_) {
            throw Error("backward() on a no-grad graph");
        }
        if (root.numel() != 1) {
            throw ShapeMismatchError("backward() expects a scalar root");
        }
        root.data()->ensure_grad();
        root.data()->grad[0] = S(1);
        for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
            (*it)();
        }
    }

    size_t size() const { return tape_.size(); }
    void clear() { tape_.clear(); }

private:
    std::vector<std::function<void()>> tape_;
    bool grad_;
};

}  // namespace odgen::nn
