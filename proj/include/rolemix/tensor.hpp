#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace rolemix {

// Dense row-major matrix templated on scalar. The whole numeric stack is
// instantiated at float (default) or double (verification mode); the template
// parameter is the precision switch.
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Eigen::Index;

inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}

// Disables graph construction in scope; forwards run value-only.
struct NoGradGuard {
    NoGradGuard() : previous_(grad_mode_flag()) { grad_mode_flag() = false; }
    ~NoGradGuard() { grad_mode_flag() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

template <typename Scalar>
std::string shape_str(const Mat<Scalar>& m) {
    std::ostringstream os;
    os << "[" << m.rows() << "x" << m.cols() << "]";
    return os.str();
}

// Reverse-mode autodiff handle. A Tensor is a shared reference to a graph
// node holding the value, the gradient accumulator, and the closure that
// scatters the node's gradient into its parents. Copying a Tensor shares the
// node; graphs are DAGs built eagerly by the free functions in ops.hpp.
template <typename Scalar>
class Tensor {
public:
    struct Node {
        Mat<Scalar> value;
        Mat<Scalar> grad;  // empty until first accumulation
        bool requires_grad = false;
        const char* op = "leaf";
        std::vector<std::shared_ptr<Node>> parents;
        std::function<void(Node&)> backward_fn;

        void ensure_grad() {
            if (grad.size() == 0) grad = Mat<Scalar>::Zero(value.rows(), value.cols());
        }
    };
    using NodePtr = std::shared_ptr<Node>;

    Tensor() = default;
    explicit Tensor(Mat<Scalar> value, bool requires_grad = false) {
        node_ = std::make_shared<Node>();
        node_->value = std::move(value);
        node_->requires_grad = requires_grad && grad_mode_flag();
    }

    static Tensor zeros(Index rows, Index cols, bool requires_grad = false) {
        return Tensor(Mat<Scalar>::Zero(rows, cols), requires_grad);
    }
    static Tensor constant(Mat<Scalar> value) { return Tensor(std::move(value), false); }
    static Tensor param(Mat<Scalar> value) { return Tensor(std::move(value), true); }

    bool defined() const { return node_ != nullptr; }
    Index rows() const { return node_->value.rows(); }
    Index cols() const { return node_->value.cols(); }
    Index size() const { return node_->value.size(); }

    const Mat<Scalar>& value() const { return node_->value; }
    Mat<Scalar>& value() { return node_->value; }

    bool requires_grad() const { return node_ && node_->requires_grad; }

    const Mat<Scalar>& grad() const {
        node_->ensure_grad();
        return node_->grad;
    }
    Mat<Scalar>& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() {
        if (node_) node_->grad = Mat<Scalar>::Zero(node_->value.rows(), node_->value.cols());
    }

    NodePtr node() const { return node_; }

    // Scalar convenience for 1x1 tensors (losses).
    Scalar item() const {
        if (size() != 1) throw std::logic_error("Tensor::item: tensor is not 1x1, got " + shape_str(node_->value));
        return node_->value(0, 0);
    }

    // Reverse pass from a 1x1 root. Each reachable node is visited exactly
    // once, in reverse topological order; gradients accumulate additively.
    void backward() const {
        if (!node_) throw std::logic_error("backward: undefined tensor");
        if (size() != 1) throw std::logic_error("backward: root must be 1x1, got " + shape_str(node_->value));
        if (!node_->requires_grad) return;

        std::vector<Node*> order;
        topo_order(node_.get(), order);

        node_->ensure_grad();
        node_->grad(0, 0) += Scalar(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node* n = *it;
            if (n->backward_fn) {
                n->ensure_grad();
                n->backward_fn(*n);
            }
        }
    }

    // Op construction helper used by ops.hpp: output node wiring is uniform.
    static Tensor make_op(Mat<Scalar> value, const char* op, std::vector<NodePtr> parents,
                          std::function<void(Node&)> backward_fn) {
        Tensor out;
        out.node_ = std::make_shared<Node>();
        out.node_->value = std::move(value);
        out.node_->op = op;
        bool needs = false;
        if (grad_mode_flag()) {
            for (const auto& p : parents) needs = needs || (p && p->requires_grad);
        }
        if (needs) {
            out.node_->requires_grad = true;
            out.node_->parents = std::move(parents);
            out.node_->backward_fn = std::move(backward_fn);
        }
        return out;
    }

    // Accumulate into a parent only when it participates in the backward pass.
    static void accum(const NodePtr& parent, const Mat<Scalar>& g) {
        if (!parent->requires_grad) return;
        parent->ensure_grad();
        parent->grad += g;
    }

private:
    static void topo_order(Node* root, std::vector<Node*>& order) {
        // Iterative post-order DFS; recursion would overflow on long chains.
        std::unordered_set<Node*> visited;
        std::vector<std::pair<Node*, size_t>> stack;
        stack.emplace_back(root, 0);
        visited.insert(root);
        while (!stack.empty()) {
            auto& [node, next_child] = stack.back();
            bool descended = false;
            while (next_child < node->parents.size()) {
                Node* p = node->parents[next_child++].get();
                if (p && p->requires_grad && !visited.count(p)) {
                    visited.insert(p);
                    stack.emplace_back(p, 0);
                    descended = true;
                    break;
                }
            }
            if (!descended && next_child >= node->parents.size()) {
                order.push_back(node);
                stack.pop_back();
            }
        }
    }

    NodePtr node_;
};

}  // namespace rolemix
