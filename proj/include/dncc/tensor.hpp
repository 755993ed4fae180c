#pragma once

// Dense float64 tensors with define-by-run reverse-mode differentiation.
//
// Every op returns a new Tensor whose node keeps references to its inputs and
// a backward rule. Calling backward() on a scalar builds a Tape (topological
// order of the reachable graph) and runs the rules in reverse. Gradients of
// leaf tensors accumulate across calls until zero_grad().

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dncc {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this node's grad and accumulates into inputs' grads.
    std::function<void(Node&)> backward;

    bool is_leaf() const { return !backward; }
    void ensure_grad();
};

}  // namespace detail

class Tensor {
public:
    Tensor();

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    // 2-D convenience: rows of equal length.
    static Tensor matrix(const std::vector<std::vector<double>>& rows, bool requires_grad = false);

    const Shape& shape() const;
    std::size_t ndim() const { return shape().size(); }
    std::size_t numel() const;
    std::size_t rows() const;  // shape[0] of a 2-D tensor
    std::size_t cols() const;  // shape[1] of a 2-D tensor

    std::span<const double> data() const;
    // Writable view for leaves (parameters, inputs). Mutating a non-leaf
    // invalidates its recorded backward rule.
    std::span<double> mutable_data();
    double item() const;
    double at(std::size_t r, std::size_t c) const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on);
    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    // Same values, cut off from the graph.
    Tensor detach() const;
    // Deep copy of values into a new leaf.
    Tensor clone() const;

    // Requires a scalar (numel 1) tensor; accumulates d(this)/d(leaf) into
    // every reachable leaf with requires_grad.
    void backward() const;

    bool defined() const { return static_cast<bool>(node_); }
    const std::shared_ptr<detail::Node>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

// Topologically ordered record of the graph reachable from a root. Inputs
// always precede the nodes that consume them; each node appears once.
class Tape {
public:
    static Tape record(const Tensor& root);

    std::size_t size() const { return order_.size(); }
    const std::vector<detail::Node*>& order() const { return order_; }
    // Runs the backward rules in reverse order seeding d(root)/d(root) = 1.
    void run_backward();

private:
    std::vector<detail::Node*> order_;
    std::shared_ptr<detail::Node> root_;
};

// While alive on a thread, ops on that thread record no backward rules.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_mode_enabled();

// ---- ops ------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);

// Binary ops accept equal shapes, a scalar on either side, or a row vector
// ({c} or {1,c}) against an {r,c} matrix on either side.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor clamp_min(const Tensor& a, double floor);

enum class UnaryOp { relu, exp, log };
enum class BinaryOp { add, sub, mul };
Tensor elementwise(UnaryOp op, const Tensor& a);
Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b);

// Row-wise log-softmax of an {n,K} matrix, K >= 2.
Tensor log_softmax_rows(const Tensor& logits);
// Row-wise logsumexp of an {n,K} matrix; result shape {n}.
Tensor logsumexp_rows(const Tensor& x);

enum class ReduceOp { sum, mean };
// Full reduction to a scalar.
Tensor reduce(ReduceOp op, const Tensor& a);
// Reduction over one axis; that axis is removed from the shape.
Tensor reduce(ReduceOp op, const Tensor& a, std::size_t axis);
inline Tensor sum(const Tensor& a) { return reduce(ReduceOp::sum, a); }
inline Tensor mean(const Tensor& a) { return reduce(ReduceOp::mean, a); }

// Columns [start, start+width) of an {n,c} matrix.
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t width);
// Horizontal concatenation of {n,c_i} matrices or {n} vectors (as columns).
Tensor concat_cols(std::span<const Tensor> parts);
// out[i] = a[i, index[i]] for an {n,K} matrix; result shape {n}.
Tensor pick(const Tensor& a, std::span<const int> index);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// ---- finite-difference checking --------------------------------------------

struct GradCheckReport {
    std::vector<double> max_rel_error;  // one entry per parameter tensor
    double worst = 0.0;
    std::size_t worst_param = 0;
    std::size_t worst_index = 0;
    double step = 0.0;  // base step h
    double tolerance = 0.0;
    bool pass = false;
    std::string failure;  // non-empty when a NaN was encountered
};

// Compares the autodiff gradient of `f` with central differences
// (f(t+s) - f(t-s)) / 2s per coordinate, s = h * max(1, |t|). Relative error
// uses max(|analytic|, |numeric|, 1e-12) as denominator. `f` must rebuild
// its graph from the current parameter values on every call.
GradCheckReport gradient_check(const std::function<Tensor()>& f, std::span<Tensor> params,
                               double h, double tol);

}  // namespace dncc
