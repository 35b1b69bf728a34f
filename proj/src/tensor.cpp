#include "ddgan/tensor.hpp"

#include <cblas.h>

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <unordered_set>

namespace ddgan {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

namespace {

thread_local bool g_grad_enabled = true;
std::atomic<std::uint64_t> g_next_id{1};

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                     shape_str(b));
}

[[noreturn]] void shape_fail1(const char* op, const Shape& a, const char* what) {
    throw ShapeError(std::string(op) + ": " + what + ", got shape " + shape_str(a));
}

void check_same(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) shape_fail(op, a.shape(), b.shape());
    if (a.dtype() != b.dtype())
        throw ShapeError(std::string(op) + ": mixed dtypes for shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
}

inline double rf(double v) { return static_cast<double>(static_cast<float>(v)); }

using Vjp = std::function<std::vector<Tensor>(const Tensor&, const std::vector<char>&)>;

Tensor make_node(const char* op, Shape shape, std::vector<double> value, Dtype dt,
                 std::vector<Tensor> parents, Vjp vjp) {
    auto n = std::make_shared<Node>();
    n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->dtype = dt;
    n->op = op;
    bool rg = false;
    if (g_grad_enabled) {
        for (const auto& p : parents) rg = rg || p.requires_grad();
    }
    n->requires_grad = rg;
    if (rg) {
        n->parents = std::move(parents);
        n->vjp = std::move(vjp);
    }
    return detail::wrap(std::move(n));
}

// Elementwise helpers. In f32 mode the arithmetic runs in float; inputs are
// already float-valued so the narrowing cast is exact.
template <class F64, class F32>
Tensor unary_op(const char* op, const Tensor& x, F64 f64, F32 f32, Vjp vjp) {
    const auto& a = x.values();
    std::vector<double> out(a.size());
    if (x.dtype() == Dtype::f64) {
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = f64(a[i]);
    } else {
        for (std::size_t i = 0; i < a.size(); ++i)
            out[i] = static_cast<double>(f32(static_cast<float>(a[i])));
    }
    return make_node(op, x.shape(), std::move(out), x.dtype(), {x}, std::move(vjp));
}

template <class F64, class F32>
Tensor binary_op(const char* op, const Tensor& x, const Tensor& y, F64 f64, F32 f32, Vjp vjp) {
    check_same(op, x, y);
    const auto& a = x.values();
    const auto& b = y.values();
    std::vector<double> out(a.size());
    if (x.dtype() == Dtype::f64) {
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = f64(a[i], b[i]);
    } else {
        for (std::size_t i = 0; i < a.size(); ++i)
            out[i] = static_cast<double>(f32(static_cast<float>(a[i]), static_cast<float>(b[i])));
    }
    return make_node(op, x.shape(), std::move(out), x.dtype(), {x, y}, std::move(vjp));
}

// BLAS itself stays single-threaded; parallelism is the explicit row
// partition below, which keeps every output element's reduction order
// identical to the serial kernel (bit-deterministic for any thread count).
const bool g_blas_single = [] {
    openblas_set_num_threads(1);
    return true;
}();

// Two serial kernels: Eigen's packed GEMM is fastest on full matrices,
// OpenBLAS on very skinny ones (single-row/column products). The choice is a
// pure function of the shape, so results stay run-to-run deterministic.
void dgemm_rows(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                std::size_t n) {
    if (m >= 8 && n >= 8) {
        using MapC = Eigen::Map<
            const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
        using MapM =
            Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
        MapM(c, m, n).noalias() = MapC(a, m, k) * MapC(b, k, n);
        return;
    }
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(m),
                static_cast<int>(n), static_cast<int>(k), 1.0, a, static_cast<int>(k), b,
                static_cast<int>(n), 0.0, c, static_cast<int>(n));
}

void gemm_f64(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t n) {
    const std::size_t work = m * k * n;
    unsigned hw = std::thread::hardware_concurrency();
    std::size_t nthreads = (work >= (8u << 20) && hw > 1) ? std::min<std::size_t>(hw, m) : 1;
    if (nthreads <= 1) {
        dgemm_rows(a, b, c, m, k, n);
        return;
    }
    std::vector<std::thread> ts;
    const std::size_t chunk = (m + nthreads - 1) / nthreads;
    for (std::size_t t = 0; t < nthreads; ++t) {
        const std::size_t r0 = t * chunk;
        const std::size_t r1 = std::min(m, r0 + chunk);
        if (r0 >= r1) break;
        ts.emplace_back([=] { dgemm_rows(a + r0 * k, b, c + r0 * n, r1 - r0, k, n); });
    }
    for (auto& t : ts) t.join();
}

}  // namespace

namespace detail {

bool grad_enabled() { return g_grad_enabled; }

Tensor wrap(NodePtr n) { return Tensor(std::move(n)); }

}  // namespace detail

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::constant(Shape shape, std::vector<double> value, Dtype dtype) {
    if (shape_size(shape) != value.size())
        throw ShapeError("constant: shape " + shape_str(shape) + " does not match " +
                         std::to_string(value.size()) + " values");
    if (dtype == Dtype::f32)
        for (auto& v : value) v = rf(v);
    auto n = std::make_shared<Node>();
    n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->dtype = dtype;
    return detail::wrap(std::move(n));
}

Tensor Tensor::variable(Shape shape, std::vector<double> value, Dtype dtype) {
    Tensor t = constant(std::move(shape), std::move(value), dtype);
    t.node_->requires_grad = true;
    return t;
}

Tensor Tensor::zeros(Shape shape, Dtype dtype) {
    std::vector<double> v(shape_size(shape), 0.0);
    return constant(std::move(shape), std::move(v), dtype);
}

Tensor Tensor::full(Shape shape, double x, Dtype dtype) {
    std::vector<double> v(shape_size(shape), dtype == Dtype::f32 ? rf(x) : x);
    return constant(std::move(shape), std::move(v), dtype);
}

Tensor Tensor::scalar(double v, Dtype dtype) { return full({}, v, dtype); }

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->value.size(); }
Dtype Tensor::dtype() const { return node_->dtype; }
bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
const std::vector<double>& Tensor::values() const { return node_->value; }

std::vector<double>& Tensor::mutable_values() {
    if (node_->vjp) throw Error("mutable_values: only leaves may be mutated");
    return node_->value;
}

double Tensor::item() const {
    if (size() != 1) shape_fail1("item", shape(), "expected a single element");
    return node_->value[0];
}

Tensor Tensor::grad() const {
    if (!node_->grad) return Tensor();
    return detail::wrap(node_->grad);
}

void Tensor::zero_grad() { node_->grad.reset(); }

Tensor Tensor::detach() const {
    return constant(shape(), values(), dtype());
}

std::uint64_t Tensor::node_id() const { return node_ ? node_->id : 0; }

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0])
        shape_fail("matmul", a.shape(), b.shape());
    if (a.dtype() != b.dtype()) shape_fail("matmul(dtype)", a.shape(), b.shape());
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    std::vector<double> out(m * n);
    if (a.dtype() == Dtype::f64) {
        gemm_f64(a.values().data(), b.values().data(), out.data(), m, k, n);
    } else {
        std::vector<float> af(m * k), bf(k * n), cf(m * n);
        for (std::size_t i = 0; i < m * k; ++i) af[i] = static_cast<float>(a.values()[i]);
        for (std::size_t i = 0; i < k * n; ++i) bf[i] = static_cast<float>(b.values()[i]);
        if (m >= 8 && n >= 8) {
            using MapCf = Eigen::Map<
                const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
            using MapMf = Eigen::Map<
                Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
            MapMf(cf.data(), m, n).noalias() = MapCf(af.data(), m, k) * MapCf(bf.data(), k, n);
        } else {
            cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(m),
                        static_cast<int>(n), static_cast<int>(k), 1.0f, af.data(),
                        static_cast<int>(k), bf.data(), static_cast<int>(n), 0.0f, cf.data(),
                        static_cast<int>(n));
        }
        for (std::size_t i = 0; i < m * n; ++i) out[i] = static_cast<double>(cf[i]);
    }
    return make_node("matmul", {m, n}, std::move(out), a.dtype(), {a, b},
                     [a, b](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
                         Tensor ga, gb;
                         if (need[0]) ga = matmul(g, transpose(b));
                         if (need[1]) gb = matmul(transpose(a), g);
                         return {ga, gb};
                     });
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) shape_fail1("transpose", a.shape(), "expected rank 2");
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.values()[i * n + j];
    return make_node("transpose", {n, m}, std::move(out), a.dtype(), {a},
                     [](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> { return {transpose(g)}; });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_size(shape) != a.size()) shape_fail("reshape", a.shape(), shape);
    Shape prev = a.shape();
    return make_node("reshape", std::move(shape), a.values(), a.dtype(), {a},
                     [prev](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
                         return {reshape(g, prev)};
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        "add", a, b, [](double x, double y) { return x + y; },
        [](float x, float y) { return x + y; },
        [](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> { return {g, g}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](float x, float y) { return x - y; },
        [](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> { return {g, affine(g, -1.0, 0.0)}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](float x, float y) { return x * y; },
        [a, b](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> { return {mul(g, b), mul(g, a)}; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_op(
        "div", a, b, [](double x, double y) { return x / y; },
        [](float x, float y) { return x / y; },
        [a, b](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
            Tensor ga = div(g, b);
            return {ga, affine(mul(ga, div(a, b)), -1.0, 0.0)};
        });
}

Tensor affine(const Tensor& x, double scale, double shift) {
    const double s32 = rf(scale), h32 = rf(shift);
    return unary_op(
        "affine", x, [=](double v) { return scale * v + shift; },
        [=](float v) { return static_cast<float>(s32) * v + static_cast<float>(h32); },
        [scale](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> { return {affine(g, scale, 0.0)}; });
}

Tensor concat(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw ShapeError("concat: no inputs");
    const Shape& s0 = xs[0].shape();
    if (s0.empty()) shape_fail1("concat", s0, "expected rank >= 1");
    Shape lead(s0.begin(), s0.end() - 1);
    std::size_t total = 0;
    for (const auto& x : xs) {
        if (x.dtype() != xs[0].dtype())
            throw ShapeError("concat: mixed dtypes for shapes " + shape_str(s0) + " and " +
                             shape_str(x.shape()));
        if (x.rank() != s0.size() ||
            !std::equal(lead.begin(), lead.end(), x.shape().begin()))
            shape_fail("concat", s0, x.shape());
        total += x.shape().back();
    }
    const std::size_t rows = shape_size(lead);
    std::vector<double> out(rows * total);
    std::size_t off = 0;
    for (const auto& x : xs) {
        const std::size_t w = x.shape().back();
        for (std::size_t r = 0; r < rows; ++r)
            std::memcpy(out.data() + r * total + off, x.values().data() + r * w,
                        w * sizeof(double));
        off += w;
    }
    Shape oshape = lead;
    oshape.push_back(total);
    std::vector<std::size_t> widths;
    for (const auto& x : xs) widths.push_back(x.shape().back());
    return make_node("concat", std::move(oshape), std::move(out), xs[0].dtype(), xs,
                     [widths](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
                         std::vector<Tensor> gs;
                         std::size_t off2 = 0;
                         for (auto w : widths) {
                             gs.push_back(slice_last(g, off2, off2 + w));
                             off2 += w;
                         }
                         return gs;
                     });
}

Tensor slice_last(const Tensor& x, std::size_t lo, std::size_t hi) {
    if (x.rank() == 0) shape_fail1("slice_last", x.shape(), "expected rank >= 1");
    const std::size_t n = x.shape().back();
    if (lo > hi || hi > n) shape_fail1("slice_last", x.shape(), "slice range out of bounds");
    Shape lead(x.shape().begin(), x.shape().end() - 1);
    const std::size_t rows = shape_size(lead);
    const std::size_t w = hi - lo;
    std::vector<double> out(rows * w);
    for (std::size_t r = 0; r < rows; ++r)
        std::memcpy(out.data() + r * w, x.values().data() + r * n + lo, w * sizeof(double));
    Shape oshape = lead;
    oshape.push_back(w);
    const Dtype dt = x.dtype();
    return make_node("slice_last", std::move(oshape), std::move(out), dt, {x},
                     [lo, hi, n, lead, dt](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
                         std::vector<Tensor> parts;
                         auto zeros_of = [&](std::size_t w2) {
                             Shape s = lead;
                             s.push_back(w2);
                             return Tensor::zeros(std::move(s), dt);
                         };
                         if (lo > 0) parts.push_back(zeros_of(lo));
                         parts.push_back(g);
                         if (hi < n) parts.push_back(zeros_of(n - hi));
                         return {parts.size() == 1 ? g : concat(parts)};
                     });
}

Tensor sum_all(const Tensor& x) {
    double acc = 0.0;
    if (x.dtype() == Dtype::f64) {
        for (double v : x.values()) acc += v;
    } else {
        float f = 0.0f;
        for (double v : x.values()) f += static_cast<float>(v);
        acc = static_cast<double>(f);
    }
    Shape prev = x.shape();
    return make_node("sum_all", {}, {acc}, x.dtype(), {x},
                     [prev](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
                         return {fill_broadcast(g, prev)};
                     });
}

Tensor mean_all(const Tensor& x) {
    if (x.size() == 0) shape_fail1("mean_all", x.shape(), "empty tensor");
    return affine(sum_all(x), 1.0 / static_cast<double>(x.size()), 0.0);
}

Tensor sum_last(const Tensor& x) {
    if (x.rank() == 0) shape_fail1("sum_last", x.shape(), "expected rank >= 1");
    const std::size_t n = x.shape().back();
    Shape lead(x.shape().begin(), x.shape().end() - 1);
    const std::size_t rows = shape_size(lead);
    std::vector<double> out(rows, 0.0);
    if (x.dtype() == Dtype::f64) {
        for (std::size_t r = 0; r < rows; ++r) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += x.values()[r * n + j];
            out[r] = acc;
        }
    } else {
        for (std::size_t r = 0; r < rows; ++r) {
            float acc = 0.0f;
            for (std::size_t j = 0; j < n; ++j) acc += static_cast<float>(x.values()[r * n + j]);
            out[r] = static_cast<double>(acc);
        }
    }
    return make_node("sum_last", std::move(lead), std::move(out), x.dtype(), {x},
                     [n](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
                         return {broadcast_last(g, n)};
                     });
}

Tensor mean_last(const Tensor& x) {
    if (x.rank() == 0 || x.shape().back() == 0)
        shape_fail1("mean_last", x.shape(), "empty last axis");
    return affine(sum_last(x), 1.0 / static_cast<double>(x.shape().back()), 0.0);
}

Tensor broadcast_last(const Tensor& x, std::size_t n) {
    const std::size_t rows = x.size();
    std::vector<double> out(rows * n);
    for (std::size_t r = 0; r < rows; ++r)
        std::fill_n(out.data() + r * n, n, x.values()[r]);
    Shape oshape = x.shape();
    oshape.push_back(n);
    return make_node("broadcast_last", std::move(oshape), std::move(out), x.dtype(), {x},
                     [](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> { return {sum_last(g)}; });
}

Tensor fill_broadcast(const Tensor& s, Shape shape) {
    if (s.size() != 1) shape_fail1("fill_broadcast", s.shape(), "expected a scalar");
    std::vector<double> out(shape_size(shape), s.values()[0]);
    return make_node("fill_broadcast", std::move(shape), std::move(out), s.dtype(), {s},
                     [](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> { return {sum_all(g)}; });
}

Tensor group_mean(const Tensor& x, std::size_t groups) {
    if (x.rank() != 2) shape_fail1("group_mean", x.shape(), "expected rank 2");
    const std::size_t rows = x.shape()[0], cols = x.shape()[1];
    if (groups == 0 || cols % groups != 0)
        shape_fail1("group_mean", x.shape(), "groups must divide columns");
    const std::size_t w = cols / groups;
    std::vector<double> out(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t g = 0; g < groups; ++g) {
            const double* p = x.values().data() + r * cols + g * w;
            double acc = 0.0;
            if (x.dtype() == Dtype::f64) {
                for (std::size_t j = 0; j < w; ++j) acc += p[j];
                acc /= static_cast<double>(w);
            } else {
                float f = 0.0f;
                for (std::size_t j = 0; j < w; ++j) f += static_cast<float>(p[j]);
                acc = static_cast<double>(f / static_cast<float>(w));
            }
            std::fill_n(out.data() + r * cols + g * w, w, acc);
        }
    }
    // The group-mean projection is symmetric, so it is its own adjoint.
    return make_node("group_mean", x.shape(), std::move(out), x.dtype(), {x},
                     [groups](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
                         return {group_mean(g, groups)};
                     });
}

namespace {

Tensor colsum(const Tensor& g) {
    const std::size_t rows = g.shape()[0], cols = g.shape()[1];
    Tensor ones = Tensor::full({1, rows}, 1.0, g.dtype());
    return reshape(matmul(ones, g), {cols});
}

}  // namespace

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
    if (x.rank() != 2 || v.rank() != 1 || v.shape()[0] != x.shape()[1] || x.dtype() != v.dtype())
        shape_fail("add_rowvec", x.shape(), v.shape());
    const std::size_t rows = x.shape()[0], cols = x.shape()[1];
    std::vector<double> out(rows * cols);
    if (x.dtype() == Dtype::f64) {
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < cols; ++j)
                out[r * cols + j] = x.values()[r * cols + j] + v.values()[j];
    } else {
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < cols; ++j)
                out[r * cols + j] = static_cast<double>(
                    static_cast<float>(x.values()[r * cols + j]) +
                    static_cast<float>(v.values()[j]));
    }
    return make_node("add_rowvec", x.shape(), std::move(out), x.dtype(), {x, v},
                     [](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> { return {g, colsum(g)}; });
}

Tensor mul_rowvec(const Tensor& x, const Tensor& v) {
    if (x.rank() != 2 || v.rank() != 1 || v.shape()[0] != x.shape()[1] || x.dtype() != v.dtype())
        shape_fail("mul_rowvec", x.shape(), v.shape());
    const std::size_t rows = x.shape()[0], cols = x.shape()[1];
    std::vector<double> out(rows * cols);
    if (x.dtype() == Dtype::f64) {
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < cols; ++j)
                out[r * cols + j] = x.values()[r * cols + j] * v.values()[j];
    } else {
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < cols; ++j)
                out[r * cols + j] = static_cast<double>(
                    static_cast<float>(x.values()[r * cols + j]) *
                    static_cast<float>(v.values()[j]));
    }
    return make_node("mul_rowvec", x.shape(), std::move(out), x.dtype(), {x, v},
                     [x, v](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
                         return {mul_rowvec(g, v), colsum(mul(g, x))};
                     });
}

Tensor mul_colvec(const Tensor& x, const Tensor& v) {
    if (x.rank() != 2 || v.rank() != 1 || v.shape()[0] != x.shape()[0] || x.dtype() != v.dtype())
        shape_fail("mul_colvec", x.shape(), v.shape());
    const std::size_t rows = x.shape()[0], cols = x.shape()[1];
    std::vector<double> out(rows * cols);
    if (x.dtype() == Dtype::f64) {
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < cols; ++j)
                out[r * cols + j] = x.values()[r * cols + j] * v.values()[r];
    } else {
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < cols; ++j)
                out[r * cols + j] = static_cast<double>(
                    static_cast<float>(x.values()[r * cols + j]) *
                    static_cast<float>(v.values()[r]));
    }
    return make_node("mul_colvec", x.shape(), std::move(out), x.dtype(), {x, v},
                     [x, v](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
                         return {mul_colvec(g, v), sum_last(mul(g, x))};
                     });
}

Tensor leaky_relu(const Tensor& x, double slope) {
    // The derivative is piecewise constant, so the mask enters the graph as a
    // constant (built lazily in the vjp) and double backward through it is
    // exact.
    return unary_op(
        "leaky_relu", x, [=](double v) { return v >= 0.0 ? v : slope * v; },
        [s = static_cast<float>(rf(slope))](float v) { return v >= 0.0f ? v : s * v; },
        [x, slope](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
            std::vector<double> mask(x.size());
            for (std::size_t i = 0; i < x.size(); ++i)
                mask[i] = x.values()[i] >= 0.0 ? 1.0 : slope;
            return {mul(g, Tensor::constant(x.shape(), std::move(mask), x.dtype()))};
        });
}

Tensor tanh(const Tensor& x) {
    return unary_op(
        "tanh", x, [](double v) { return std::tanh(v); },
        [](float v) { return std::tanh(v); },
        [x](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
            return {mul(g, affine(square(tanh(x)), -1.0, 1.0))};
        });
}

Tensor exp(const Tensor& x) {
    return unary_op(
        "exp", x, [](double v) { return std::exp(v); }, [](float v) { return std::exp(v); },
        [x](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> { return {mul(g, exp(x))}; });
}

Tensor log(const Tensor& x) {
    return unary_op(
        "log", x, [](double v) { return std::log(v); }, [](float v) { return std::log(v); },
        [x](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> { return {div(g, x)}; });
}

Tensor sqrt(const Tensor& x) {
    return unary_op(
        "sqrt", x, [](double v) { return std::sqrt(v); }, [](float v) { return std::sqrt(v); },
        [x](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> {
            return {affine(div(g, sqrt(x)), 0.5, 0.0)};
        });
}

Tensor square(const Tensor& x) {
    return unary_op(
        "square", x, [](double v) { return v * v; }, [](float v) { return v * v; },
        [x](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> { return {mul(g, affine(x, 2.0, 0.0))}; });
}

Tensor softplus(const Tensor& x) {
    return unary_op(
        "softplus", x,
        [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
        [](float v) { return std::max(v, 0.0f) + std::log1p(std::exp(-std::abs(v))); },
        [x](const Tensor& g, const std::vector<char>& need) -> std::vector<Tensor> { return {mul(g, sigmoid(x))}; });
}

Tensor sigmoid(const Tensor& x) {
    return exp(affine(softplus(affine(x, -1.0, 0.0)), -1.0, 0.0));
}

Tensor swish(const Tensor& x) { return mul(x, sigmoid(x)); }

Tensor feature_norm(const Tensor& x, std::size_t groups, double eps) {
    Tensor centered = sub(x, group_mean(x, groups));
    Tensor var = group_mean(square(centered), groups);
    return div(centered, sqrt(affine(var, 1.0, eps)));
}

// ---- differentiation -------------------------------------------------------

namespace {

// Nodes reachable from the root, sorted by creation id. Parents are always
// created before children, so descending id is a valid reverse topological
// order (the define-by-run graph cannot contain cycles).
std::vector<Node*> collect_nodes(const NodePtr& root) {
    std::vector<Node*> out;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{root.get()};
    seen.insert(root.get());
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        out.push_back(n);
        for (const auto& p : n->parents) {
            Node* pn = p.node().get();
            if (pn && seen.insert(pn).second) stack.push_back(pn);
        }
    }
    std::sort(out.begin(), out.end(), [](Node* a, Node* b) { return a->id > b->id; });
    return out;
}

void run_backward(const Tensor& loss, const std::vector<Tensor>* wrt, std::vector<Tensor>* out,
                  bool create_graph, bool accumulate_leaves) {
    if (!loss.defined() || loss.size() != 1)
        throw ShapeError("backward: loss must be a defined scalar, got " +
                         (loss.defined() ? shape_str(loss.shape()) : std::string("<empty>")));
    std::vector<Node*> nodes = collect_nodes(loss.node());

    // reach[n]: n lies on a path from the loss to a requested target.
    std::unordered_map<Node*, bool> reach;
    std::unordered_set<Node*> targets;
    if (wrt) {
        for (const auto& t : *wrt)
            if (t.defined()) targets.insert(t.node().get());
    }
    for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {  // ascending id
        Node* n = *it;
        bool r = wrt ? targets.count(n) > 0 : (n->requires_grad && !n->vjp);
        if (!r)
            for (const auto& p : n->parents)
                if (reach[p.node().get()]) {
                    r = true;
                    break;
                }
        reach[n] = r;
    }

    std::unordered_map<Node*, Tensor> grads;
    grads[loss.node().get()] = Tensor::full({}, 1.0, loss.dtype());

    std::unique_ptr<NoGradGuard> guard;
    if (!create_graph) guard = std::make_unique<NoGradGuard>();

    for (Node* n : nodes) {
        if (!n->requires_grad || !reach[n]) continue;
        auto it = grads.find(n);
        if (it == grads.end()) continue;
        if (!n->vjp) continue;  // leaf
        Tensor g = it->second;
        if (g.shape() != n->shape) g = reshape(g, n->shape);
        std::vector<char> need(n->parents.size(), 0);
        for (std::size_t i = 0; i < n->parents.size(); ++i) {
            Node* p = n->parents[i].node().get();
            need[i] = p->requires_grad && reach[p];
        }
        std::vector<Tensor> pg = n->vjp(g, need);
        for (std::size_t i = 0; i < n->parents.size(); ++i) {
            Node* p = n->parents[i].node().get();
            if (!need[i] || !pg[i].defined()) continue;
            auto pit = grads.find(p);
            if (pit == grads.end())
                grads.emplace(p, pg[i]);
            else
                pit->second = add(pit->second, pg[i]);
        }
    }

    if (accumulate_leaves) {
        for (Node* n : nodes) {
            if (!n->requires_grad || n->vjp) continue;
            auto it = grads.find(n);
            if (it == grads.end()) continue;
            const auto& gv = it->second.values();
            if (!n->grad) {
                n->grad = it->second.detach().node();
            } else {
                auto& acc = n->grad->value;
                if (n->dtype == Dtype::f64) {
                    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += gv[i];
                } else {
                    for (std::size_t i = 0; i < acc.size(); ++i)
                        acc[i] = static_cast<double>(static_cast<float>(acc[i]) +
                                                     static_cast<float>(gv[i]));
                }
            }
        }
    }

    if (wrt && out) {
        out->clear();
        for (const auto& t : *wrt) {
            auto it = grads.find(t.node().get());
            if (it == grads.end())
                out->push_back(Tensor::zeros(t.shape(), t.dtype()));
            else
                out->push_back(it->second);
        }
    }
}

}  // namespace

void backward(const Tensor& loss) { run_backward(loss, nullptr, nullptr, false, true); }

std::vector<Tensor> gradients(const Tensor& loss, const std::vector<Tensor>& wrt,
                              bool create_graph) {
    std::vector<Tensor> out;
    run_backward(loss, &wrt, &out, create_graph, false);
    return out;
}

Tensor sample_normal(Rng& rng, Shape shape, Dtype dtype) {
    std::vector<double> v(shape_size(shape));
    rng.fill_normal(v);
    return Tensor::constant(std::move(shape), std::move(v), dtype);
}

}  // namespace ddgan
