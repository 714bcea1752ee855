#include "cfpl/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace cfpl {

namespace {

std::atomic<Precision> g_precision{Precision::f32};

#ifdef NDEBUG
std::atomic<bool> g_finite_checks{false};
#else
std::atomic<bool> g_finite_checks{true};
#endif

thread_local bool t_grad_enabled = true;

void check_finite(const std::vector<double>& data) {
    for (double v : data) {
        if (!std::isfinite(v)) {
            throw std::runtime_error("non-finite value produced by tensor op");
        }
    }
}

}  // namespace

std::size_t numel_of(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
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

Precision precision() { return g_precision.load(std::memory_order_relaxed); }
void set_precision(Precision p) { g_precision.store(p, std::memory_order_relaxed); }

bool finite_checks_enabled() { return g_finite_checks.load(std::memory_order_relaxed); }
void set_finite_checks(bool enabled) { g_finite_checks.store(enabled, std::memory_order_relaxed); }

double round_to_precision(double v) {
    if (precision() == Precision::f32) return static_cast<double>(static_cast<float>(v));
    return v;
}

bool grad_enabled() { return t_grad_enabled; }
NoGradGuard::NoGradGuard() : saved_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = saved_; }

static void round_all(std::vector<double>& data) {
    if (precision() != Precision::f32) return;
    for (double& v : data) v = static_cast<double>(static_cast<float>(v));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const std::size_t n = numel_of(shape);
    return from_values(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
    for (auto e : shape) {
        if (e == 0) throw std::invalid_argument("tensor extents must be positive: " + shape_str(shape));
    }
    if (numel_of(shape) != values.size()) {
        throw std::invalid_argument("value count " + std::to_string(values.size()) +
                                    " does not match shape " + shape_str(shape));
    }
    round_all(values);
    if (finite_checks_enabled()) check_finite(values);
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from_values({1}, {value}, requires_grad); }

const Shape& Tensor::shape() const {
    if (!node_) throw std::logic_error("undefined tensor");
    return node_->shape;
}

std::size_t Tensor::size(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) throw std::out_of_range("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    return s[axis];
}

std::size_t Tensor::numel() const { return node_ ? node_->data.size() : 0; }

std::span<const double> Tensor::values() const {
    if (!node_) throw std::logic_error("undefined tensor");
    return node_->data;
}

std::span<double> Tensor::values_mut() {
    if (!node_) throw std::logic_error("undefined tensor");
    if (node_->backward_fn) throw std::logic_error("in-place write to a non-leaf tensor");
    return node_->data;
}

double Tensor::item() const {
    if (numel() != 1) throw std::logic_error("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
    const auto& s = shape();
    if (index.size() != s.size()) throw std::out_of_range("index rank mismatch");
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i >= s[axis]) throw std::out_of_range("index out of range");
        flat = flat * s[axis] + i;
        ++axis;
    }
    return node_->data[flat];
}

std::vector<double> Tensor::to_vector() const {
    auto v = values();
    return {v.begin(), v.end()};
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
    if (!node_) throw std::logic_error("undefined tensor");
    node_->requires_grad = flag;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
    if (!has_grad()) throw std::logic_error("tensor has no gradient");
    return node_->grad;
}

std::span<double> Tensor::grad_mut() { return grad_buffer(*this); }

void Tensor::zero_grad() {
    if (node_) node_->grad.clear();
}

bool Tensor::is_leaf() const { return node_ && !node_->backward_fn; }

Tensor Tensor::detach() const {
    auto node = std::make_shared<detail::Node>();
    node->shape = shape();
    node->data = node_->data;
    return Tensor(std::move(node));
}

std::span<double> grad_buffer(const Tensor& t) {
    auto& node = t.node();
    if (!node || !node->requires_grad) return {};
    if (node->grad.empty()) node->grad.assign(node->data.size(), 0.0);
    return node->grad;
}

Tensor Tensor::make_result(Shape shape, std::vector<double> data, std::initializer_list<Tensor> parents,
                           std::function<void(detail::Node&)> backward_fn) {
    return make_result(std::move(shape), std::move(data), std::vector<Tensor>(parents), std::move(backward_fn));
}

Tensor Tensor::make_result(Shape shape, std::vector<double> data, const std::vector<Tensor>& parents,
                           std::function<void(detail::Node&)> backward_fn) {
    round_all(data);
    if (finite_checks_enabled()) check_finite(data);
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    bool needs = false;
    if (grad_enabled())
        for (const auto& p : parents) needs = needs || p.requires_grad();
    if (needs) {
        node->requires_grad = true;
        for (const auto& p : parents) {
            if (p.requires_grad()) node->parents.push_back(p.node());
        }
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(node));
}

void Tensor::backward() const {
    if (!node_) throw std::logic_error("backward on undefined tensor");
    if (node_->data.size() != 1) throw std::logic_error("backward requires a single-element tensor, got " + shape_str(node_->shape));
    if (!node_->requires_grad) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            detail::Node* p = n->parents[next++].get();
            if (visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    if (node_->grad.empty()) node_->grad.assign(1, 0.0);
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

}  // namespace cfpl
