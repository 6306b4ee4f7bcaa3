#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace navlab::nd {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);
bool same_shape(const Shape& a, const Shape& b);

struct TensorImpl;
using TensorImplPtr = std::shared_ptr<TensorImpl>;

// Reverse-mode node. `apply` reads the output's grad and accumulates into the
// inputs' grads using raw kernels; there is no double backward.
struct GradFn {
    const char* name = "?";
    std::vector<TensorImplPtr> inputs;
    std::function<void(const TensorImpl&)> apply;
};

struct TensorImpl {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated lazily, same size as value
    bool requires_grad = false;
    std::unique_ptr<GradFn> grad_fn;

    int64_t numel() const { return static_cast<int64_t>(value.size()); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

// Value-semantic handle to shared storage. Copies alias the same data.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(TensorImplPtr impl) : impl_(std::move(impl)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);
    static Tensor from_vector(Shape shape, std::vector<double> v, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int dim(int i) const;
    int ndim() const { return static_cast<int>(impl_->shape.size()); }
    int64_t numel() const { return impl_->numel(); }

    double* data() { return impl_->value.data(); }
    const double* data() const { return impl_->value.data(); }
    std::vector<double>& values() { return impl_->value; }
    const std::vector<double>& values() const { return impl_->value; }

    double* grad_data() { impl_->ensure_grad(); return impl_->grad.data(); }
    const std::vector<double>& grad() const { return impl_->grad; }

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool rg);
    void zero_grad();

    double item() const;

    // Runs reverse-mode accumulation from this tensor (must be scalar).
    void backward();

    // Same values, no graph edge. Copies the data.
    Tensor detach() const;

    const TensorImplPtr& impl() const { return impl_; }

private:
    TensorImplPtr impl_;
};

// Thread-local gradient mode. Forward passes inside a NoGradGuard build no
// graph, which also makes them safe to run concurrently on shared weights.
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};
bool grad_enabled();

namespace detail {
// Shared by op implementations: decide whether the output tracks gradients,
// and attach a GradFn when it does.
bool track(const std::initializer_list<const Tensor*>& inputs);
void attach(Tensor& out, const char* name, std::vector<Tensor> inputs,
            std::function<void(const TensorImpl&)> apply);
}  // namespace detail

}  // namespace navlab::nd
