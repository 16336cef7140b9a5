#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace vburst {

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

inline std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ")";
    return os.str();
}

namespace detail {

struct TensorNode {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until backward() or zero_grad() touches it
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    // Accumulates into the per-call gradient buffers of the parents.
    // parent_grads[i] is null when parents[i] does not require grad.
    std::function<void(const std::vector<double>& self_grad,
                       const std::vector<std::vector<double>*>& parent_grads)>
        backward_fn;
};

inline int shape_size(const std::vector<int>& shape) {
    int n = 1;
    for (int d : shape) n *= d;
    return n;
}

}  // namespace detail

/// Dense n-d array of doubles participating in a dynamically built
/// reverse-mode graph. Value-semantic handle; copies share the node.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        return filled(std::move(shape), 0.0, requires_grad);
    }

    static Tensor filled(std::vector<int> shape, double value, bool requires_grad = false) {
        validate_shape(shape);
        auto node = std::make_shared<detail::TensorNode>();
        node->data.assign(detail::shape_size(shape), value);
        node->shape = std::move(shape);
        node->requires_grad = requires_grad;
        Tensor t;
        t.node_ = std::move(node);
        return t;
    }

    static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                            bool requires_grad = false) {
        validate_shape(shape);
        check(detail::shape_size(shape) == static_cast<int>(data.size()),
              "tensor data size " + std::to_string(data.size()) +
                  " does not match shape " + shape_str(shape));
        auto node = std::make_shared<detail::TensorNode>();
        node->shape = std::move(shape);
        node->data = std::move(data);
        node->requires_grad = requires_grad;
        Tensor t;
        t.node_ = std::move(node);
        return t;
    }

    static Tensor scalar(double value, bool requires_grad = false) {
        return from_data({1}, {value}, requires_grad);
    }

    bool defined() const { return node_ != nullptr; }

    const std::vector<int>& shape() const { return node()->shape; }
    int size() const { return static_cast<int>(node()->data.size()); }
    int rank() const { return static_cast<int>(node()->shape.size()); }
    int rows() const { return shape().at(0); }
    int cols() const {
        check(rank() == 2, "cols() requires a rank-2 tensor, got " + shape_str(shape()));
        return shape()[1];
    }

    std::vector<double>& data() { return node()->data; }
    const std::vector<double>& data() const { return node()->data; }

    double item() const {
        check(size() == 1, "item() requires a scalar tensor, got " + shape_str(shape()));
        return node()->data[0];
    }
    double at(int i) const { return node()->data.at(i); }
    double at(int r, int c) const {
        check(rank() == 2, "at(r,c) requires a rank-2 tensor");
        return node()->data.at(static_cast<size_t>(r) * shape()[1] + c);
    }

    bool requires_grad() const { return node()->requires_grad; }

    bool has_grad() const { return !node()->grad.empty(); }
    const std::vector<double>& grad() const {
        check(has_grad(), "tensor has no gradient; run backward() first");
        return node()->grad;
    }
    void zero_grad() { node()->grad.assign(node()->data.size(), 0.0); }

    /// Accumulates d(root)/d(leaf) into every reachable requires_grad tensor.
    /// Repeated calls without zero_grad() add up.
    void backward() const {
        auto* root = node().get();
        check(root->data.size() == 1,
              "backward() requires a scalar root, got " + shape_str(root->shape));

        // Iterative post-order topological sort.
        std::vector<detail::TensorNode*> order;
        std::unordered_set<detail::TensorNode*> visited;
        std::vector<std::pair<detail::TensorNode*, size_t>> stack;
        stack.emplace_back(root, 0);
        visited.insert(root);
        while (!stack.empty()) {
            auto& [n, child] = stack.back();
            if (child < n->parents.size()) {
                detail::TensorNode* p = n->parents[child++].get();
                if (visited.insert(p).second) stack.emplace_back(p, 0);
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }

        // Per-call gradient buffers keep repeated backward passes independent.
        std::unordered_map<detail::TensorNode*, std::vector<double>> buf;
        buf[root] = {1.0};
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            detail::TensorNode* n = *it;
            auto found = buf.find(n);
            if (found == buf.end() || !n->backward_fn) continue;
            std::vector<std::vector<double>*> parent_bufs;
            parent_bufs.reserve(n->parents.size());
            for (auto& p : n->parents) {
                if (!p->requires_grad) {
                    parent_bufs.push_back(nullptr);
                    continue;
                }
                auto& slot = buf[p.get()];
                if (slot.size() != p->data.size()) slot.assign(p->data.size(), 0.0);
                parent_bufs.push_back(&slot);
            }
            n->backward_fn(found->second, parent_bufs);
        }

        for (auto& [n, g] : buf) {
            if (!n->requires_grad) continue;
            if (n->grad.size() != n->data.size()) n->grad.assign(n->data.size(), 0.0);
            for (size_t i = 0; i < g.size(); ++i) n->grad[i] += g[i];
        }
    }

    std::shared_ptr<detail::TensorNode> node() const {
        if (!node_) throw std::logic_error("use of an undefined tensor");
        return node_;
    }

  private:
    static void validate_shape(const std::vector<int>& shape) {
        check(!shape.empty(), "tensor shape must have at least one extent");
        for (int d : shape)
            check(d > 0, "tensor extents must be positive, got " + shape_str(shape));
    }

    std::shared_ptr<detail::TensorNode> node_;
};

namespace detail {

/// Builds an op result wired to its operands.
inline Tensor make_op(std::vector<int> shape, std::vector<double> data,
                      std::vector<Tensor> inputs,
                      std::function<void(const std::vector<double>&,
                                         const std::vector<std::vector<double>*>&)>
                          backward_fn) {
    bool any_grad = false;
    for (const auto& in : inputs) any_grad = any_grad || in.requires_grad();
    Tensor out = Tensor::from_data(std::move(shape), std::move(data), any_grad);
    if (any_grad) {
        auto node = out.node();
        node->parents.reserve(inputs.size());
        for (const auto& in : inputs) node->parents.push_back(in.node());
        node->backward_fn = std::move(backward_fn);
    }
    return out;
}

}  // namespace detail

}  // namespace vburst
