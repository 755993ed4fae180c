#include "dncc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "dncc/error.hpp"

namespace dncc {

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

void Node::ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
}

}  // namespace detail

namespace {

thread_local bool g_grad_enabled = true;

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

void check_shape(const Shape& shape) {
    for (std::size_t d : shape) {
        if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
    }
}

// Builds the output node; records inputs and the backward rule only when
// some input needs a gradient and grad mode is on.
Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<Tensor> inputs,
                   std::function<void(Node&)> backward) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    bool needs = false;
    if (g_grad_enabled) {
        for (const Tensor& t : inputs) needs = needs || t.requires_grad();
    }
    if (needs) {
        node->requires_grad = true;
        for (const Tensor& t : inputs) node->inputs.push_back(t.node());
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}

Tensor make_result_v(Shape shape, std::vector<double> data, std::span<const Tensor> inputs,
                     std::function<void(Node&)> backward) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    bool needs = false;
    if (g_grad_enabled) {
        for (const Tensor& t : inputs) needs = needs || t.requires_grad();
    }
    if (needs) {
        node->requires_grad = true;
        for (const Tensor& t : inputs) node->inputs.push_back(t.node());
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}

bool wants_grad(const NodePtr& n) { return n->requires_grad; }

void require_2d(const Tensor& t, const char* op) {
    if (t.ndim() != 2) {
        throw DimensionError(std::string(op) + " expects a 2-D tensor, got " + shape_str(t.shape()));
    }
}

// ---- broadcasting ----------------------------------------------------------

enum class Bcast { same, scalar, row };

bool is_scalar_shape(const Tensor& t) { return t.numel() == 1; }

bool is_row_of(const Tensor& row, const Tensor& mat) {
    if (mat.ndim() != 2) return false;
    const Shape& r = row.shape();
    const std::size_t c = mat.shape()[1];
    return (r.size() == 1 && r[0] == c) || (r.size() == 2 && r[0] == 1 && r[1] == c);
}

struct BroadcastPlan {
    Shape out;
    Bcast a_mode;
    Bcast b_mode;
    std::size_t cols = 1;
};

BroadcastPlan plan_broadcast(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape()) return {a.shape(), Bcast::same, Bcast::same};
    if (is_scalar_shape(b)) return {a.shape(), Bcast::same, Bcast::scalar};
    if (is_scalar_shape(a)) return {b.shape(), Bcast::scalar, Bcast::same};
    if (is_row_of(b, a)) return {a.shape(), Bcast::same, Bcast::row, a.shape()[1]};
    if (is_row_of(a, b)) return {b.shape(), Bcast::row, Bcast::same, b.shape()[1]};
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(a.shape()) + " with " +
                         shape_str(b.shape()));
}

inline std::size_t map_index(Bcast mode, std::size_t i, std::size_t cols) {
    switch (mode) {
        case Bcast::same: return i;
        case Bcast::scalar: return 0;
        case Bcast::row: return i % cols;
    }
    return i;
}

// Generic broadcasting binary op. dfa/dfb return the local partials
// d(out)/d(a), d(out)/d(b) at (x, y).
template <class Fwd, class Da, class Db>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Da dfa, Db dfb) {
    const BroadcastPlan plan = plan_broadcast(a, b, name);
    const std::size_t n = shape_numel(plan.out);
    std::vector<double> out(n);
    const auto ad = a.data();
    const auto bd = b.data();
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = fwd(ad[map_index(plan.a_mode, i, plan.cols)], bd[map_index(plan.b_mode, i, plan.cols)]);
    }
    return make_result(plan.out, std::move(out), {a, b}, [plan, dfa, dfb](Node& self) {
        Node& na = *self.inputs[0];
        Node& nb = *self.inputs[1];
        const std::size_t n = self.data.size();
        if (na.requires_grad) na.ensure_grad();
        if (nb.requires_grad) nb.ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t ia = map_index(plan.a_mode, i, plan.cols);
            const std::size_t ib = map_index(plan.b_mode, i, plan.cols);
            const double x = na.data[ia];
            const double y = nb.data[ib];
            if (na.requires_grad) na.grad[ia] += self.grad[i] * dfa(x, y);
            if (nb.requires_grad) nb.grad[ib] += self.grad[i] * dfb(x, y);
        }
    });
}

// Elementwise unary op; `dlocal(x, out)` is d(out)/d(x).
template <class Fwd, class D>
Tensor unary(const Tensor& a, Fwd fwd, D dlocal) {
    const auto ad = a.data();
    std::vector<double> out(ad.size());
    for (std::size_t i = 0; i < ad.size(); ++i) out[i] = fwd(ad[i]);
    return make_result(a.shape(), std::move(out), {a}, [dlocal](Node& self) {
        Node& in = *self.inputs[0];
        in.ensure_grad();
        for (std::size_t i = 0; i < self.data.size(); ++i) {
            in.grad[i] += self.grad[i] * dlocal(in.data[i], self.data[i]);
        }
    });
}

void check_finite_rows(const Tensor& x, const char* op) {
    const auto d = x.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (!std::isfinite(d[i])) {
            throw NumericError(std::string(op) + ": non-finite input at flat index " + std::to_string(i));
        }
    }
}

}  // namespace

// ---- Tensor ----------------------------------------------------------------

Tensor::Tensor() = default;

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    check_shape(shape);
    auto node = std::make_shared<Node>();
    node->data.assign(shape_numel(shape), value);
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    check_shape(shape);
    if (values.size() != shape_numel(shape)) {
        throw DimensionError("data length " + std::to_string(values.size()) + " does not match shape " +
                             shape_str(shape));
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

Tensor Tensor::matrix(const std::vector<std::vector<double>>& rows, bool requires_grad) {
    if (rows.empty()) throw DimensionError("matrix needs at least one row");
    const std::size_t c = rows.front().size();
    std::vector<double> values;
    values.reserve(rows.size() * c);
    for (const auto& r : rows) {
        if (r.size() != c) throw DimensionError("ragged matrix rows");
        values.insert(values.end(), r.begin(), r.end());
    }
    return from({rows.size(), c}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->data.size(); }

std::size_t Tensor::rows() const {
    if (ndim() != 2) throw DimensionError("rows() on non-matrix " + shape_str(shape()));
    return shape()[0];
}

std::size_t Tensor::cols() const {
    if (ndim() != 2) throw DimensionError("cols() on non-matrix " + shape_str(shape()));
    return shape()[1];
}

std::span<const double> Tensor::data() const { return node_->data; }
std::span<double> Tensor::mutable_data() { return node_->data; }

double Tensor::item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
    if (!node_->is_leaf()) throw ContractError("requires_grad can only be set on leaf tensors");
    node_->requires_grad = on;
    return *this;
}

bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }

std::span<double> Tensor::mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
}

void Tensor::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return from(shape(), node_->data, false); }

Tensor Tensor::clone() const { return from(shape(), node_->data, node_->requires_grad); }

void Tensor::backward() const {
    if (numel() != 1) {
        throw ContractError("backward() requires a scalar loss, got shape " + shape_str(shape()));
    }
    if (!requires_grad()) throw ContractError("backward() on a tensor that does not require grad");
    Tape tape = Tape::record(*this);
    tape.run_backward();
}

// ---- Tape ------------------------------------------------------------------

Tape Tape::record(const Tensor& root) {
    Tape tape;
    tape.root_ = root.node();
    std::unordered_set<Node*> visited;
    // Iterative post-order DFS: a node is emitted after all of its inputs.
    std::vector<std::pair<Node*, std::size_t>> stack;
    if (root.requires_grad()) stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            tape.order_.push_back(node);
            stack.pop_back();
        }
    }
    return tape;
}

void Tape::run_backward() {
    if (order_.empty()) return;
    for (Node* n : order_) {
        if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
    }
    Node* root = order_.back();
    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        Node* n = *it;
        if (!n->is_leaf()) n->backward(*n);
    }
}

// ---- grad mode -------------------------------------------------------------

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_mode_enabled() { return g_grad_enabled; }

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0]) {
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    }
    const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
    const auto ad = a.data();
    const auto bd = b.data();
    std::vector<double> out(n * m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ad[i * k + p];
            const double* brow = &bd[p * m];
            double* orow = &out[i * m];
            for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    }
    return make_result({n, m}, std::move(out), {a, b}, [n, k, m](Node& self) {
        Node& na = *self.inputs[0];
        Node& nb = *self.inputs[1];
        const std::vector<double>& g = self.grad;
        if (na.requires_grad) {
            na.ensure_grad();
            // dA = G * B^T
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < m; ++j) acc += g[i * m + j] * nb.data[p * m + j];
                    na.grad[i * k + p] += acc;
                }
            }
        }
        if (nb.requires_grad) {
            nb.ensure_grad();
            // dB = A^T * G
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const double av = na.data[i * k + p];
                    for (std::size_t j = 0; j < m; ++j) nb.grad[p * m + j] += av * g[i * m + j];
                }
            }
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Tensor relu(const Tensor& a) {
    return unary(
        a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double, double out) { return out; });
}

Tensor log(const Tensor& a) {
    const auto d = a.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (!(d[i] > 0.0)) {
            throw DomainError("log of non-positive value " + std::to_string(d[i]) + " at index " +
                                  std::to_string(i),
                              i);
        }
    }
    return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double factor) {
    return unary(
        a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
    return unary(a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor clamp_min(const Tensor& a, double floor) {
    return unary(
        a, [floor](double x) { return x > floor ? x : floor; },
        [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

Tensor elementwise(UnaryOp op, const Tensor& a) {
    switch (op) {
        case UnaryOp::relu: return relu(a);
        case UnaryOp::exp: return exp(a);
        case UnaryOp::log: return log(a);
    }
    throw ContractError("unknown unary op");
}

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b) {
    switch (op) {
        case BinaryOp::add: return add(a, b);
        case BinaryOp::sub: return sub(a, b);
        case BinaryOp::mul: return mul(a, b);
    }
    throw ContractError("unknown binary op");
}

Tensor log_softmax_rows(const Tensor& logits) {
    require_2d(logits, "log_softmax_rows");
    const std::size_t n = logits.rows(), k = logits.cols();
    if (k < 2) throw DimensionError("log_softmax_rows needs at least 2 classes, got " + std::to_string(k));
    check_finite_rows(logits, "log_softmax_rows");
    const auto x = logits.data();
    std::vector<double> out(n * k);
    for (std::size_t r = 0; r < n; ++r) {
        const double* row = &x[r * k];
        const double mx = *std::max_element(row, row + k);
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += std::exp(row[j] - mx);
        const double lse = mx + std::log(s);
        for (std::size_t j = 0; j < k; ++j) out[r * k + j] = row[j] - lse;
    }
    return make_result({n, k}, std::move(out), {logits}, [n, k](Node& self) {
        Node& in = *self.inputs[0];
        in.ensure_grad();
        for (std::size_t r = 0; r < n; ++r) {
            double gsum = 0.0;
            for (std::size_t j = 0; j < k; ++j) gsum += self.grad[r * k + j];
            for (std::size_t j = 0; j < k; ++j) {
                in.grad[r * k + j] += self.grad[r * k + j] - std::exp(self.data[r * k + j]) * gsum;
            }
        }
    });
}

Tensor logsumexp_rows(const Tensor& x) {
    require_2d(x, "logsumexp_rows");
    check_finite_rows(x, "logsumexp_rows");
    const std::size_t n = x.rows(), k = x.cols();
    const auto d = x.data();
    std::vector<double> out(n);
    for (std::size_t r = 0; r < n; ++r) {
        const double* row = &d[r * k];
        const double mx = *std::max_element(row, row + k);
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += std::exp(row[j] - mx);
        out[r] = mx + std::log(s);
    }
    return make_result({n}, std::move(out), {x}, [n, k](Node& self) {
        Node& in = *self.inputs[0];
        in.ensure_grad();
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t j = 0; j < k; ++j) {
                in.grad[r * k + j] += self.grad[r] * std::exp(in.data[r * k + j] - self.data[r]);
            }
        }
    });
}

Tensor reduce(ReduceOp op, const Tensor& a) {
    const auto d = a.data();
    double s = 0.0;
    for (double v : d) s += v;
    const double factor = op == ReduceOp::mean ? 1.0 / static_cast<double>(d.size()) : 1.0;
    return make_result({}, {s * factor}, {a}, [factor](Node& self) {
        Node& in = *self.inputs[0];
        in.ensure_grad();
        const double g = self.grad[0] * factor;
        for (double& v : in.grad) v += g;
    });
}

Tensor reduce(ReduceOp op, const Tensor& a, std::size_t axis) {
    if (axis >= a.ndim()) {
        throw DimensionError("reduce: axis " + std::to_string(axis) + " invalid for shape " +
                             shape_str(a.shape()));
    }
    const Shape& s = a.shape();
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t len = s[axis];
    Shape out_shape;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i != axis) out_shape.push_back(s[i]);
    }
    const double factor = op == ReduceOp::mean ? 1.0 / static_cast<double>(len) : 1.0;
    const auto d = a.data();
    std::vector<double> out(outer * inner, 0.0);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t k = 0; k < len; ++k) {
            for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += d[(o * len + k) * inner + i];
        }
    }
    for (double& v : out) v *= factor;
    return make_result(out_shape, std::move(out), {a}, [outer, inner, len, factor](Node& self) {
        Node& in = *self.inputs[0];
        in.ensure_grad();
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t k = 0; k < len; ++k) {
                for (std::size_t i = 0; i < inner; ++i) {
                    in.grad[(o * len + k) * inner + i] += self.grad[o * inner + i] * factor;
                }
            }
        }
    });
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t width) {
    require_2d(a, "slice_cols");
    const std::size_t n = a.rows(), c = a.cols();
    if (width == 0 || start + width > c) {
        throw DimensionError("slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + width) +
                             ") out of range for " + shape_str(a.shape()));
    }
    const auto d = a.data();
    std::vector<double> out(n * width);
    for (std::size_t r = 0; r < n; ++r) {
        std::copy_n(&d[r * c + start], width, &out[r * width]);
    }
    return make_result({n, width}, std::move(out), {a}, [n, c, start, width](Node& self) {
        Node& in = *self.inputs[0];
        in.ensure_grad();
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t j = 0; j < width; ++j) in.grad[r * c + start + j] += self.grad[r * width + j];
        }
    });
}

Tensor concat_cols(std::span<const Tensor> parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    const std::size_t n = parts.front().shape()[0];
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const Tensor& p : parts) {
        if (p.ndim() == 0 || p.ndim() > 2 || p.shape()[0] != n) {
            throw DimensionError("concat_cols: incompatible part " + shape_str(p.shape()));
        }
        widths.push_back(p.ndim() == 2 ? p.shape()[1] : 1);
        total += widths.back();
    }
    std::vector<double> out(n * total);
    std::size_t offset = 0;
    for (std::size_t t = 0; t < parts.size(); ++t) {
        const auto d = parts[t].data();
        for (std::size_t r = 0; r < n; ++r) {
            std::copy_n(&d[r * widths[t]], widths[t], &out[r * total + offset]);
        }
        offset += widths[t];
    }
    return make_result_v({n, total}, std::move(out), parts, [n, total, widths](Node& self) {
        std::size_t off = 0;
        for (std::size_t t = 0; t < self.inputs.size(); ++t) {
            Node& in = *self.inputs[t];
            if (in.requires_grad) {
                in.ensure_grad();
                for (std::size_t r = 0; r < n; ++r) {
                    for (std::size_t j = 0; j < widths[t]; ++j) {
                        in.grad[r * widths[t] + j] += self.grad[r * total + off + j];
                    }
                }
            }
            off += widths[t];
        }
    });
}

Tensor pick(const Tensor& a, std::span<const int> index) {
    require_2d(a, "pick");
    const std::size_t n = a.rows(), k = a.cols();
    if (index.size() != n) {
        throw DimensionError("pick: " + std::to_string(index.size()) + " indices for " + std::to_string(n) +
                             " rows");
    }
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (index[i] < 0 || static_cast<std::size_t>(index[i]) >= k) {
            throw ContractError("label " + std::to_string(index[i]) + " at row " + std::to_string(i) +
                                " outside [0, " + std::to_string(k) + ")");
        }
        idx[i] = static_cast<std::size_t>(index[i]);
    }
    const auto d = a.data();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = d[i * k + idx[i]];
    return make_result({n}, std::move(out), {a}, [k, idx](Node& self) {
        Node& in = *self.inputs[0];
        in.ensure_grad();
        for (std::size_t i = 0; i < idx.size(); ++i) in.grad[i * k + idx[i]] += self.grad[i];
    });
}

// ---- gradient check ----------------------------------------------------------

GradCheckReport gradient_check(const std::function<Tensor()>& f, std::span<Tensor> params, double h,
                               double tol) {
    if (!(h > 0.0)) throw ContractError("gradient_check: step must be positive");
    GradCheckReport report;
    report.step = h;
    report.tolerance = tol;
    report.max_rel_error.assign(params.size(), 0.0);

    for (Tensor& p : params) p.zero_grad();
    const Tensor loss = f();
    loss.backward();
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const Tensor& p : params) {
        if (p.has_grad()) {
            analytic.emplace_back(p.grad().begin(), p.grad().end());
        } else {
            analytic.emplace_back(p.numel(), 0.0);
        }
    }

    NoGradGuard no_grad;
    bool ok = true;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto values = params[pi].mutable_data();
        for (std::size_t j = 0; j < values.size(); ++j) {
            const double orig = values[j];
            const double s = h * std::max(1.0, std::abs(orig));
            const double xp = orig + s;
            const double xm = orig - s;
            values[j] = xp;
            const double fp = f().item();
            values[j] = xm;
            const double fm = f().item();
            values[j] = orig;
            const double numeric = (fp - fm) / (xp - xm);
            const double a = analytic[pi][j];
            if (!std::isfinite(numeric) || !std::isfinite(a)) {
                ok = false;
                if (report.failure.empty()) {
                    report.failure = "non-finite value at parameter " + std::to_string(pi) + ", index " +
                                     std::to_string(j);
                }
                report.max_rel_error[pi] = std::numeric_limits<double>::infinity();
                continue;
            }
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
            const double rel = std::abs(a - numeric) / denom;
            if (rel > report.max_rel_error[pi]) report.max_rel_error[pi] = rel;
            if (rel > report.worst) {
                report.worst = rel;
                report.worst_param = pi;
                report.worst_index = j;
            }
        }
    }
    if (!report.failure.empty()) report.worst = std::numeric_limits<double>::infinity();
    report.pass = ok && report.worst < tol;
    return report;
}

}  // namespace dncc
