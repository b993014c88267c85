#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sarfah/rng.hpp"

namespace sarfah {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorImpl;

// Dense 64-bit float tensor with an optional gradient buffer. Ops record a
// backward closure on the output node; backward() walks the resulting DAG in
// reverse topological order and accumulates into grad buffers.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor from_data(Shape shape, std::vector<double> data);
    static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    int64_t numel() const;
    int64_t dim(int i) const;

    std::span<double> data();
    std::span<const double> data() const;
    double item() const;  // scalar tensors only

    // 4D convenience accessors (row-major NCHW)
    double& at4(int64_t n, int64_t c, int64_t y, int64_t x);
    double at4(int64_t n, int64_t c, int64_t y, int64_t x) const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool v);
    bool has_grad() const;
    std::span<double> grad();
    std::span<const double> grad() const;
    void zero_grad();

    // Same data buffer, detached from the tape.
    Tensor detach() const;
    // Deep copy of values (no tape).
    Tensor clone() const;

    std::shared_ptr<TensorImpl> impl_;

private:
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
    friend Tensor make_op_result(Shape shape, std::vector<double> data,
                                 std::vector<Tensor> parents,
                                 std::function<void(TensorImpl&)> backward_fn);
};

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until needed
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void(TensorImpl&)> backward_fn;

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
    }
};

// Thread-local autodiff mode; NoGradGuard disables tape recording in scope.
bool grad_enabled();
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// Create an op output node. Records parents + closure only when the tape is
// active and some parent requires grad.
Tensor make_op_result(Shape shape, std::vector<double> data,
                      std::vector<Tensor> parents,
                      std::function<void(TensorImpl&)> backward_fn);

// Accumulate d(loss)/d(leaf) into grad buffers for every node reachable from
// `loss`, which must be scalar.
void backward(const Tensor& loss);

// ---- elementwise / reduction / shape ops -----------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor abs_val(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor softmax_lastdim(const Tensor& a);

Tensor reshape(const Tensor& a, Shape new_shape);

Tensor concat_channels(const std::vector<Tensor>& parts);
Tensor slice_channels(const Tensor& a, int64_t c0, int64_t c1);
Tensor concat_batch(const std::vector<Tensor>& parts);
Tensor slice_batch(const Tensor& a, int64_t n0, int64_t n1);
// Extract one element as a [1] tensor (keeps the tape connected).
Tensor slice_element(const Tensor& a, int64_t flat_index);
Tensor scale_by_scalar_tensor(const Tensor& a, const Tensor& s);

double sigmoid_scalar(double x);
double softplus_scalar(double x);

}  // namespace sarfah
