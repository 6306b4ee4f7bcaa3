#include "navlab/core/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace navlab::nd {

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto impl = std::make_shared<TensorImpl>();
    impl->value.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
    impl->shape = std::move(shape);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.values().begin(), t.values().end(), v);
    return t;
}

Tensor Tensor::from_vector(Shape shape, std::vector<double> v, bool requires_grad) {
    if (static_cast<int64_t>(v.size()) != shape_numel(shape))
        throw std::invalid_argument("from_vector: size mismatch for shape " + shape_str(shape));
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->value = std::move(v);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from_vector({1}, {v}, requires_grad); }

int Tensor::dim(int i) const {
    if (i < 0) i += ndim();
    return impl_->shape.at(static_cast<size_t>(i));
}

Tensor& Tensor::set_requires_grad(bool rg) {
    impl_->requires_grad = rg;
    if (rg) impl_->ensure_grad();
    return *this;
}

void Tensor::zero_grad() {
    impl_->ensure_grad();
    std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

double Tensor::item() const {
    if (numel() != 1) throw std::logic_error("item(): tensor has " + std::to_string(numel()) + " elements");
    return impl_->value[0];
}

Tensor Tensor::detach() const {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = impl_->shape;
    impl->value = impl_->value;
    impl->requires_grad = false;
    return Tensor(std::move(impl));
}

void Tensor::backward() {
    if (numel() != 1) throw std::logic_error("backward() requires a scalar loss");
    // Topological order via iterative post-order DFS over grad_fn edges.
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> visited;
    struct Frame {
        TensorImpl* node;
        size_t next_child;
    };
    std::vector<Frame> stack;
    if (impl_->grad_fn || impl_->requires_grad) stack.push_back({impl_.get(), 0});
    visited.insert(impl_.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        GradFn* fn = f.node->grad_fn.get();
        const size_t nchild = fn ? fn->inputs.size() : 0;
        if (f.next_child < nchild) {
            TensorImpl* child = fn->inputs[f.next_child++].get();
            if (child->grad_fn || child->requires_grad) {
                if (visited.insert(child).second) stack.push_back({child, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }
    for (TensorImpl* n : order) n->ensure_grad();
    impl_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* n = *it;
        if (n->grad_fn) n->grad_fn->apply(*n);
    }
}

namespace {
thread_local int g_no_grad_depth = 0;
}

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

bool grad_enabled() { return g_no_grad_depth == 0; }

namespace detail {

bool track(const std::initializer_list<const Tensor*>& inputs) {
    if (!grad_enabled()) return false;
    for (const Tensor* t : inputs)
        if (t->defined() && (t->requires_grad() || t->impl()->grad_fn)) return true;
    return false;
}

void attach(Tensor& out, const char* name, std::vector<Tensor> inputs,
            std::function<void(const TensorImpl&)> apply) {
    auto fn = std::make_unique<GradFn>();
    fn->name = name;
    fn->inputs.reserve(inputs.size());
    for (auto& t : inputs) fn->inputs.push_back(t.impl());
    fn->apply = std::move(apply);
    out.impl()->grad_fn = std::move(fn);
}

}  // namespace detail

}  // namespace navlab::nd
