#include "sarfah/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace sarfah {

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

namespace {
thread_local bool g_grad_enabled = true;

std::shared_ptr<TensorImpl> new_impl(Shape shape, std::vector<double> data) {
    auto impl = std::make_shared<TensorImpl>();
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
        throw std::invalid_argument("tensor: data length does not match shape " + shape_str(shape));
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    return impl;
}
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Tensor Tensor::zeros(Shape shape) {
    auto n = shape_numel(shape);
    return Tensor(new_impl(std::move(shape), std::vector<double>(n, 0.0)));
}

Tensor Tensor::full(Shape shape, double value) {
    auto n = shape_numel(shape);
    return Tensor(new_impl(std::move(shape), std::vector<double>(n, value)));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
    return Tensor(new_impl(std::move(shape), std::move(data)));
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev) {
    auto n = shape_numel(shape);
    std::vector<double> d(n);
    for (auto& v : d) v = rng.normal() * stddev;
    return Tensor(new_impl(std::move(shape), std::move(d)));
}

const Shape& Tensor::shape() const { return impl_->shape; }
int64_t Tensor::numel() const { return impl_->numel(); }
int64_t Tensor::dim(int i) const { return impl_->shape.at(i); }

std::span<double> Tensor::data() { return {impl_->data.data(), impl_->data.size()}; }
std::span<const double> Tensor::data() const { return {impl_->data.data(), impl_->data.size()}; }

double Tensor::item() const {
    if (numel() != 1) throw std::invalid_argument("item(): tensor is not scalar");
    return impl_->data[0];
}

double& Tensor::at4(int64_t n, int64_t c, int64_t y, int64_t x) {
    const Shape& s = impl_->shape;
    return impl_->data[((n * s[1] + c) * s[2] + y) * s[3] + x];
}
double Tensor::at4(int64_t n, int64_t c, int64_t y, int64_t x) const {
    const Shape& s = impl_->shape;
    return impl_->data[((n * s[1] + c) * s[2] + y) * s[3] + x];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }
Tensor& Tensor::set_requires_grad(bool v) {
    impl_->requires_grad = v;
    return *this;
}
bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }
std::span<double> Tensor::grad() {
    impl_->ensure_grad();
    return {impl_->grad.data(), impl_->grad.size()};
}
std::span<const double> Tensor::grad() const {
    if (impl_->grad.empty()) throw std::logic_error("grad(): no gradient buffer");
    return {impl_->grad.data(), impl_->grad.size()};
}
void Tensor::zero_grad() {
    if (impl_ && !impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = impl_->shape;
    impl->data = impl_->data;
    return Tensor(impl);
}

Tensor Tensor::clone() const { return detach(); }

Tensor make_op_result(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                      std::function<void(TensorImpl&)> backward_fn) {
    auto impl = new_impl(std::move(shape), std::move(data));
    bool needs = false;
    if (g_grad_enabled) {
        for (const auto& p : parents)
            if (p.defined() && p.impl_->requires_grad) { needs = true; break; }
    }
    if (needs) {
        impl->requires_grad = true;
        impl->parents.reserve(parents.size());
        for (auto& p : parents)
            if (p.defined()) impl->parents.push_back(p.impl_);
        impl->backward_fn = std::move(backward_fn);
    }
    return Tensor(impl);
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw std::invalid_argument("backward: loss must be a defined scalar tensor");

    // iterative post-order DFS
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> seen;
    std::vector<std::pair<TensorImpl*, size_t>> stack;
    stack.emplace_back(loss.impl_.get(), 0);
    seen.insert(loss.impl_.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            TensorImpl* p = node->parents[idx++].get();
            if (p && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.impl_->ensure_grad();
    loss.impl_->grad[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* t = *it;
        if (t->backward_fn && !t->grad.empty()) t->backward_fn(*t);
    }
}

double sigmoid_scalar(double x) {
    if (x >= 0.0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus_scalar(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

// ---- elementwise ------------------------------------------------------------

namespace {
void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
}

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& a, Fwd fwd, Bwd dydx) {
    const auto& x = a.impl_->data;
    std::vector<double> out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
    auto pa = a.impl_;
    return make_op_result(a.shape(), std::move(out), {a}, [pa, dydx](TensorImpl& self) {
        pa->ensure_grad();
        const auto& g = self.grad;
        for (size_t i = 0; i < g.size(); ++i) pa->grad[i] += g[i] * dydx(pa->data[i], self.data[i]);
    });
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    const auto& x = a.impl_->data;
    const auto& y = b.impl_->data;
    std::vector<double> out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
    auto pa = a.impl_, pb = b.impl_;
    return make_op_result(a.shape(), std::move(out), {a, b}, [pa, pb](TensorImpl& self) {
        const auto& g = self.grad;
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) pa->grad[i] += g[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) pb->grad[i] += g[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    const auto& x = a.impl_->data;
    const auto& y = b.impl_->data;
    std::vector<double> out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
    auto pa = a.impl_, pb = b.impl_;
    return make_op_result(a.shape(), std::move(out), {a, b}, [pa, pb](TensorImpl& self) {
        const auto& g = self.grad;
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) pa->grad[i] += g[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) pb->grad[i] -= g[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    const auto& x = a.impl_->data;
    const auto& y = b.impl_->data;
    std::vector<double> out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
    auto pa = a.impl_, pb = b.impl_;
    return make_op_result(a.shape(), std::move(out), {a, b}, [pa, pb](TensorImpl& self) {
        const auto& g = self.grad;
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) pa->grad[i] += g[i] * pb->data[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) pb->grad[i] += g[i] * pa->data[i];
        }
    });
}

Tensor add_scalar(const Tensor& a, double s) {
    return unary_op(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double s) {
    return unary_op(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor relu(const Tensor& a) {
    return unary_op(a, [](double x) { return x > 0.0 ? x : 0.0; },
                    [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
    return unary_op(a, [](double x) { return sigmoid_scalar(x); },
                    [](double, double y) { return y * (1.0 - y); });
}

Tensor silu(const Tensor& a) {
    return unary_op(a, [](double x) { return x * sigmoid_scalar(x); },
                    [](double x, double) {
                        double s = sigmoid_scalar(x);
                        return s * (1.0 + x * (1.0 - s));
                    });
}

Tensor gelu(const Tensor& a) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
    return unary_op(a,
                    [=](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
                    [=](double x, double) {
                        double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
                        double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
                        return cdf + x * pdf;
                    });
}

Tensor abs_val(const Tensor& a) {
    return unary_op(a, [](double x) { return std::fabs(x); },
                    [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.impl_->data) acc += v;
    auto pa = a.impl_;
    return make_op_result({1}, {acc}, {a}, [pa](TensorImpl& self) {
        pa->ensure_grad();
        double g = self.grad[0];
        for (auto& gv : pa->grad) gv += g;
    });
}

Tensor mean(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.impl_->data) acc += v;
    double n = static_cast<double>(a.numel());
    auto pa = a.impl_;
    return make_op_result({1}, {acc / n}, {a}, [pa, n](TensorImpl& self) {
        pa->ensure_grad();
        double g = self.grad[0] / n;
        for (auto& gv : pa->grad) gv += g;
    });
}

Tensor softmax_lastdim(const Tensor& a) {
    const Shape& s = a.shape();
    int64_t last = s.back();
    int64_t rows = a.numel() / last;
    const auto& x = a.impl_->data;
    std::vector<double> out(x.size());
    for (int64_t r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * last;
        double* yr = out.data() + r * last;
        double m = xr[0];
        for (int64_t i = 1; i < last; ++i) m = std::max(m, xr[i]);
        double z = 0.0;
        for (int64_t i = 0; i < last; ++i) {
            yr[i] = std::exp(xr[i] - m);
            z += yr[i];
        }
        for (int64_t i = 0; i < last; ++i) yr[i] /= z;
    }
    auto pa = a.impl_;
    return make_op_result(s, std::move(out), {a}, [pa, rows, last](TensorImpl& self) {
        pa->ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
            const double* y = self.data.data() + r * last;
            const double* g = self.grad.data() + r * last;
            double dot = 0.0;
            for (int64_t i = 0; i < last; ++i) dot += y[i] * g[i];
            double* gx = pa->grad.data() + r * last;
            for (int64_t i = 0; i < last; ++i) gx[i] += y[i] * (g[i] - dot);
        }
    });
}

Tensor reshape(const Tensor& a, Shape new_shape) {
    if (shape_numel(new_shape) != a.numel())
        throw std::invalid_argument("reshape: element count mismatch");
    auto pa = a.impl_;
    return make_op_result(std::move(new_shape), a.impl_->data, {a}, [pa](TensorImpl& self) {
        pa->ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    });
}

// ---- concat / slice ---------------------------------------------------------

Tensor concat_channels(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_channels: no inputs");
    const Shape& s0 = parts[0].shape();
    if (s0.size() != 4) throw std::invalid_argument("concat_channels: expects NCHW tensors");
    int64_t n = s0[0], h = s0[2], w = s0[3];
    int64_t ctot = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        if (s.size() != 4 || s[0] != n || s[2] != h || s[3] != w)
            throw std::invalid_argument("concat_channels: incompatible shapes");
        ctot += s[1];
    }
    std::vector<double> out(static_cast<size_t>(n * ctot * h * w));
    int64_t plane = h * w;
    int64_t coff = 0;
    for (const auto& p : parts) {
        int64_t c = p.shape()[1];
        const auto& x = p.impl_->data;
        for (int64_t in = 0; in < n; ++in)
            for (int64_t ic = 0; ic < c; ++ic) {
                const double* src = x.data() + (in * c + ic) * plane;
                double* dst = out.data() + (in * ctot + coff + ic) * plane;
                std::copy(src, src + plane, dst);
            }
        coff += c;
    }
    std::vector<Tensor> parents(parts.begin(), parts.end());
    std::vector<std::shared_ptr<TensorImpl>> impls;
    std::vector<int64_t> cs;
    for (const auto& p : parts) {
        impls.push_back(p.impl_);
        cs.push_back(p.shape()[1]);
    }
    return make_op_result({n, ctot, h, w}, std::move(out), parents,
                          [impls, cs, n, ctot, plane](TensorImpl& self) {
                              int64_t coff = 0;
                              for (size_t k = 0; k < impls.size(); ++k) {
                                  auto& p = impls[k];
                                  int64_t c = cs[k];
                                  if (p->requires_grad) {
                                      p->ensure_grad();
                                      for (int64_t in = 0; in < n; ++in)
                                          for (int64_t ic = 0; ic < c; ++ic) {
                                              const double* g =
                                                  self.grad.data() + (in * ctot + coff + ic) * plane;
                                              double* dst = p->grad.data() + (in * c + ic) * plane;
                                              for (int64_t i = 0; i < plane; ++i) dst[i] += g[i];
                                          }
                                  }
                                  coff += c;
                              }
                          });
}

Tensor slice_channels(const Tensor& a, int64_t c0, int64_t c1) {
    const Shape& s = a.shape();
    if (s.size() != 4 || c0 < 0 || c1 > s[1] || c0 >= c1)
        throw std::invalid_argument("slice_channels: bad range");
    int64_t n = s[0], c = s[1], h = s[2], w = s[3], plane = h * w;
    int64_t cout = c1 - c0;
    std::vector<double> out(static_cast<size_t>(n * cout * plane));
    for (int64_t in = 0; in < n; ++in)
        for (int64_t ic = 0; ic < cout; ++ic) {
            const double* src = a.impl_->data.data() + (in * c + c0 + ic) * plane;
            std::copy(src, src + plane, out.data() + (in * cout + ic) * plane);
        }
    auto pa = a.impl_;
    return make_op_result({n, cout, h, w}, std::move(out), {a},
                          [pa, n, c, c0, cout, plane](TensorImpl& self) {
                              pa->ensure_grad();
                              for (int64_t in = 0; in < n; ++in)
                                  for (int64_t ic = 0; ic < cout; ++ic) {
                                      const double* g = self.grad.data() + (in * cout + ic) * plane;
                                      double* dst = pa->grad.data() + (in * c + c0 + ic) * plane;
                                      for (int64_t i = 0; i < plane; ++i) dst[i] += g[i];
                                  }
                          });
}

Tensor concat_batch(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_batch: no inputs");
    Shape s0 = parts[0].shape();
    int64_t per = shape_numel(s0) / s0[0];
    int64_t ntot = 0;
    for (const auto& p : parts) {
        Shape s = p.shape();
        Shape rest0(s0.begin() + 1, s0.end());
        Shape rest(s.begin() + 1, s.end());
        if (rest != rest0) throw std::invalid_argument("concat_batch: incompatible shapes");
        ntot += s[0];
    }
    std::vector<double> out;
    out.reserve(static_cast<size_t>(ntot * per));
    for (const auto& p : parts)
        out.insert(out.end(), p.impl_->data.begin(), p.impl_->data.end());
    Shape os = s0;
    os[0] = ntot;
    std::vector<Tensor> parents(parts.begin(), parts.end());
    std::vector<std::shared_ptr<TensorImpl>> impls;
    for (const auto& p : parts) impls.push_back(p.impl_);
    return make_op_result(std::move(os), std::move(out), parents, [impls](TensorImpl& self) {
        size_t off = 0;
        for (auto& p : impls) {
            size_t len = p->data.size();
            if (p->requires_grad) {
                p->ensure_grad();
                for (size_t i = 0; i < len; ++i) p->grad[i] += self.grad[off + i];
            }
            off += len;
        }
    });
}

Tensor slice_batch(const Tensor& a, int64_t n0, int64_t n1) {
    const Shape& s = a.shape();
    if (n0 < 0 || n1 > s[0] || n0 >= n1) throw std::invalid_argument("slice_batch: bad range");
    int64_t per = a.numel() / s[0];
    std::vector<double> out(a.impl_->data.begin() + n0 * per, a.impl_->data.begin() + n1 * per);
    Shape os = s;
    os[0] = n1 - n0;
    auto pa = a.impl_;
    return make_op_result(std::move(os), std::move(out), {a}, [pa, n0, per](TensorImpl& self) {
        pa->ensure_grad();
        size_t off = static_cast<size_t>(n0 * per);
        for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[off + i] += self.grad[i];
    });
}

Tensor slice_element(const Tensor& a, int64_t flat_index) {
    if (flat_index < 0 || flat_index >= a.numel())
        throw std::invalid_argument("slice_element: index out of range");
    auto pa = a.impl_;
    return make_op_result({1}, {a.impl_->data[flat_index]}, {a}, [pa, flat_index](TensorImpl& self) {
        pa->ensure_grad();
        pa->grad[flat_index] += self.grad[0];
    });
}

Tensor scale_by_scalar_tensor(const Tensor& a, const Tensor& s) {
    if (s.numel() != 1) throw std::invalid_argument("scale_by_scalar_tensor: scale must be scalar");
    double sv = s.impl_->data[0];
    const auto& x = a.impl_->data;
    std::vector<double> out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] * sv;
    auto pa = a.impl_, ps = s.impl_;
    return make_op_result(a.shape(), std::move(out), {a, s}, [pa, ps, sv](TensorImpl& self) {
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * sv;
        }
        if (ps->requires_grad) {
            ps->ensure_grad();
            double acc = 0.0;
            for (size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * pa->data[i];
            ps->grad[0] += acc;
        }
    });
}

}  // namespace sarfah
