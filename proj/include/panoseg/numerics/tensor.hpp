#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace panoseg::nn {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

// Raised as soon as an op produces NaN or Inf.
class NumericError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// Values are held in double storage. In f32 mode every op rounds its output
// through float, so the production path computes with 32-bit values; f64 is
// the verification path used by gradient checks.
enum class Precision { f32, f64 };

Precision precision();

class PrecisionScope {
   public:
    explicit PrecisionScope(Precision p);
    ~PrecisionScope();
    PrecisionScope(const PrecisionScope&) = delete;
    PrecisionScope& operator=(const PrecisionScope&) = delete;

   private:
    Precision saved_;
};

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
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads self.grad and accumulates into parents that require grad.
    std::function<void(Node& self)> backward;

    std::vector<double>& grad_buffer() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
    bool parent_needs_grad(std::size_t i) const { return parents[i]->requires_grad; }
};

}  // namespace detail

class Tensor {
   public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value);
    static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0, bool requires_grad = false);
    static Tensor uniform(Shape shape, Rng& rng, double lo, double hi, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    // Negative axes count from the back.
    std::size_t dim(std::ptrdiff_t axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    // Untracked in-place access, for initialization and optimizer updates on leaves.
    std::span<double> data_mut();
    double item() const;
    double at(std::initializer_list<std::size_t> index) const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool flag);
    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> grad_mut();
    void zero_grad();

    // Reverse-mode sweep from this tensor; the seed gradient is all ones.
    void backward() const;

    // Same values, no history.
    Tensor detach() const;

    const std::shared_ptr<detail::Node>& node() const { return node_; }

   private:
    std::shared_ptr<detail::Node> node_;
};

std::size_t normalize_axis(std::ptrdiff_t axis, std::size_t rank);

namespace detail {

using BackwardFn = std::function<void(Node& self)>;

// Builds an op output: checks finiteness, rounds to the active precision,
// and records history when any parent requires grad.
Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                   BackwardFn backward, const char* op_name);

}  // namespace detail

}  // namespace panoseg::nn
