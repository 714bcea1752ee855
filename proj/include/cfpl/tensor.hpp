#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cfpl {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

// Storage is always double. In f32 mode every produced value is rounded to
// the nearest float, so results carry 32-bit precision.
enum class Precision { f32, f64 };

Precision precision();
void set_precision(Precision p);

class PrecisionGuard {
public:
    explicit PrecisionGuard(Precision p) : saved_(precision()) { set_precision(p); }
    ~PrecisionGuard() { set_precision(saved_); }
    PrecisionGuard(const PrecisionGuard&) = delete;
    PrecisionGuard& operator=(const PrecisionGuard&) = delete;

private:
    Precision saved_;
};

// NaN/Inf detection on every op output. On by default in debug builds.
bool finite_checks_enabled();
void set_finite_checks(bool enabled);

double round_to_precision(double v);

// While any guard is alive, op results record no graph.
bool grad_enabled();
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool saved_;
};

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;
};

}  // namespace detail

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_values(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t dim() const { return shape().size(); }
    std::size_t size(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> values() const;
    // Mutable access for leaves only (optimizer updates, checkpoint loads).
    std::span<double> values_mut();
    double item() const;
    double at(std::initializer_list<std::size_t> index) const;
    std::vector<double> to_vector() const;

    bool requires_grad() const;
    void set_requires_grad(bool flag);
    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> grad_mut();
    void zero_grad();

    // Reverse-mode sweep from a single-element tensor.
    void backward() const;

    Tensor detach() const;
    bool is_leaf() const;
    bool same(const Tensor& other) const { return node_ == other.node_; }

    const std::shared_ptr<detail::Node>& node() const { return node_; }

    // Used by op implementations. The backward function receives the output
    // node (with its accumulated grad) and adds into the parents' grads.
    static Tensor make_result(Shape shape, std::vector<double> data,
                              std::initializer_list<Tensor> parents,
                              std::function<void(detail::Node&)> backward_fn);
    static Tensor make_result(Shape shape, std::vector<double> data,
                              const std::vector<Tensor>& parents,
                              std::function<void(detail::Node&)> backward_fn);

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;
};

// Returns the gradient buffer of `t` (allocated as zeros on first use), or an
// empty span when `t` does not require a gradient.
std::span<double> grad_buffer(const Tensor& t);

}  // namespace cfpl
