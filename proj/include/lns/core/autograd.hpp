#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "lns/core/tensor.hpp"

namespace lns::ag {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// One vertex of the reverse-mode tape. `backward_fn` reads this node's grad
/// and accumulates into the parents' grads.
struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward_fn;

    void ensure_grad() {
        if (!grad.defined()) grad = Tensor::zeros(value.shape());
    }
};

/// Differentiable tensor handle. Copying shares the node.
class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    Tensor& value() { return node_->value; }
    Tensor& grad() { return node_->grad; }
    const Tensor& grad() const { return node_->grad; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    NodePtr node() const { return node_; }

    static Var from_node(NodePtr n) {
        Var v;
        v.node_ = std::move(n);
        return v;
    }

private:
    NodePtr node_;
};

/// Wrap a tensor with no gradient tracking.
inline Var constant(Tensor t) { return Var(std::move(t), false); }
/// Wrap a tensor as a trainable leaf.
inline Var leaf(Tensor t) { return Var(std::move(t), true); }

bool grad_enabled();

/// RAII switch disabling tape recording on this thread (inference mode).
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    bool prev;
};

/// Build an op node. `backward_fn` may be empty for non-differentiable ops.
Var make_op(Tensor value, std::vector<NodePtr> parents,
            std::function<void(Node&)> backward_fn);

/// Reverse-mode sweep from a scalar root.
void backward(const Var& root);

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
Var neg(const Var& a);
Var gelu(const Var& a);
Var square(const Var& a);
Var sqrt_elem(const Var& a);
Var div_scalarvar(const Var& a, const Var& b); // both scalars

// ---- linear algebra ----
/// (M,K) x (K,N) -> (M,N)
Var matmul(const Var& a, const Var& b);
/// (B,M,K) x (B,K,N) -> (B,M,N); transpose flags apply to the trailing 2 dims.
Var bmm(const Var& a, const Var& b, bool trans_a = false, bool trans_b = false);
/// x(...,K) * W(N,K)^T + b(N) -> (...,N). Bias optional (pass undefined Var).
Var linear(const Var& x, const Var& W, const Var& b);
/// x(B,C,H,W) with W(Cout,Cin), b(Cout) applied per position (1x1 conv).
Var pointwise_linear(const Var& x, const Var& W, const Var& b);

// ---- shape ----
Var reshape(const Var& x, std::vector<int64_t> shape);
Var permute(const Var& x, std::vector<int> perm);
Var concat_channel(const Var& a, const Var& b);          // (B,C,H,W) along C
Var slice_channel(const Var& x, int64_t c0, int64_t c1); // [c0, c1)

// ---- reductions / misc ----
Var sum_all(const Var& x);
Var mean_all(const Var& x);
Var softmax_lastdim(const Var& x);
/// gate (C) or (B,C): multiply each channel of x(B,C,H,W).
Var scale_channels(const Var& x, const Var& gate);
/// bias (C) or (B,C): add to each channel of x(B,C,H,W).
Var add_channel_bias(const Var& x, const Var& bias);

// ---- losses (ref/target is non-differentiable) ----
/// mean over all elements of (pred-target)^2
Var mse_loss(const Var& pred, const Tensor& target);
/// sqrt(sum((p-r)^2)/sum(r^2)) computed per batch row of (B,...), averaged.
Var rel_l2_loss(const Var& pred, const Tensor& ref);

} // namespace lns::ag
