#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ddgan/error.hpp"
#include "ddgan/rng.hpp"

namespace ddgan {

// Compute precision. Values are always stored as doubles; in f32 mode every
// kernel performs its arithmetic in single precision, so results carry float
// rounding (and matmul runs on the float path, which is the fast one).
enum class Dtype { f64, f32 };

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

class Tensor;

namespace detail {

struct Node {
    std::uint64_t id = 0;
    Shape shape;
    std::vector<double> value;
    Dtype dtype = Dtype::f64;
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<Tensor> parents;
    // Maps the output gradient to one gradient per parent; entries whose
    // need flag is false may be left undefined. Built from tensor ops so
    // that gradients(..., create_graph=true) yields a differentiable graph
    // (needed for the R1 penalty).
    std::function<std::vector<Tensor>(const Tensor&, const std::vector<char>&)> vjp;
    std::shared_ptr<Node> grad;  // accumulated by backward()
};

bool grad_enabled();
Tensor wrap(std::shared_ptr<Node> n);

}  // namespace detail

// Disables graph recording in scope (forward values still computed).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// Dense n-d array participating in a define-by-run differentiation graph.
// Copies are shallow (shared node); graphs are freed when the last tensor
// referencing them goes out of scope.
class Tensor {
public:
    Tensor() = default;

    static Tensor constant(Shape shape, std::vector<double> value, Dtype dtype = Dtype::f64);
    static Tensor variable(Shape shape, std::vector<double> value, Dtype dtype = Dtype::f64);
    static Tensor zeros(Shape shape, Dtype dtype = Dtype::f64);
    static Tensor full(Shape shape, double v, Dtype dtype = Dtype::f64);
    static Tensor scalar(double v, Dtype dtype = Dtype::f64);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t size() const;
    std::size_t rank() const { return shape().size(); }
    Dtype dtype() const;
    bool requires_grad() const;

    const std::vector<double>& values() const;
    // Leaf-only mutable access (optimizer updates, EMA swaps).
    std::vector<double>& mutable_values();
    double at(std::size_t i) const { return values()[i]; }
    double item() const;  // rank-0 or single-element

    Tensor grad() const;  // empty tensor when no gradient accumulated
    void zero_grad();
    Tensor detach() const;

    std::uint64_t node_id() const;
    std::shared_ptr<detail::Node> node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
    std::shared_ptr<detail::Node> node_;
    friend Tensor detail::wrap(std::shared_ptr<detail::Node>);
};

// ---- op library ------------------------------------------------------------
// All binary elementwise ops require identical shapes and dtypes.

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]
Tensor transpose(const Tensor& a);                // rank-2
Tensor reshape(const Tensor& a, Shape shape);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor affine(const Tensor& x, double scale, double shift);  // scale*x + shift

Tensor concat(const std::vector<Tensor>& xs);        // along last axis
Tensor slice_last(const Tensor& x, std::size_t lo, std::size_t hi);

Tensor sum_all(const Tensor& x);                     // -> rank-0
Tensor mean_all(const Tensor& x);
Tensor sum_last(const Tensor& x);                    // drop last axis
Tensor mean_last(const Tensor& x);
Tensor broadcast_last(const Tensor& x, std::size_t n);   // append axis of n copies
Tensor fill_broadcast(const Tensor& s, Shape shape);     // rank-0 -> shape

// Per-(row, group) mean broadcast back over the group; rank-2, groups | cols.
Tensor group_mean(const Tensor& x, std::size_t groups);

// Row/column vector broadcasts over a rank-2 tensor.
Tensor add_rowvec(const Tensor& x, const Tensor& v);  // v: [cols]
Tensor mul_rowvec(const Tensor& x, const Tensor& v);  // v: [cols]
Tensor mul_colvec(const Tensor& x, const Tensor& v);  // v: [rows]

Tensor leaky_relu(const Tensor& x, double slope = 0.2);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor sigmoid(const Tensor& x);  // exp(-softplus(-x)), stable at both tails
Tensor swish(const Tensor& x);    // x * sigmoid(x)

// (x - mean_g) / sqrt(var_g + eps) per row and feature group; no affine part.
Tensor feature_norm(const Tensor& x, std::size_t groups, double eps = 1e-5);

// ---- differentiation -------------------------------------------------------

// Accumulates dLoss/dLeaf into .grad of every reachable requires_grad leaf.
void backward(const Tensor& loss);

// Gradients of a scalar loss w.r.t. selected tensors, without touching .grad.
// With create_graph the returned tensors are differentiable.
std::vector<Tensor> gradients(const Tensor& loss, const std::vector<Tensor>& wrt,
                              bool create_graph = false);

// i.i.d. standard normal entries, detached from any graph.
Tensor sample_normal(Rng& rng, Shape shape, Dtype dtype = Dtype::f64);

}  // namespace ddgan
