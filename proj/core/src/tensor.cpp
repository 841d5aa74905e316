#include "posekit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace posekit {

std::string Shape4::str() const {
    std::ostringstream os;
    os << n << "x" << c << "x" << h << "x" << w;
    return os.str();
}

struct TensorImpl {
    Shape4 shape;
    std::vector<double> data;
    std::vector<double> grad; // empty until first needed
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void(TensorImpl&)> backward_fn; // null for leaves

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
    }
};

namespace {

thread_local bool g_grad_mode = true;

int64_t flat_index(const Shape4& s, int64_t n, int64_t c, int64_t h, int64_t w) {
    return ((n * s.c + c) * s.h + h) * s.w + w;
}

} // namespace

bool grad_mode_enabled() { return g_grad_mode; }

NoGradGuard::NoGradGuard() : prev_(g_grad_mode) { g_grad_mode = false; }
NoGradGuard::~NoGradGuard() { g_grad_mode = prev_; }

// ---------------------------------------------------------------------------
// Tensor handle
// ---------------------------------------------------------------------------

Tensor::Tensor() : impl_(nullptr) {}
Tensor::Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

Tensor Tensor::zeros(Shape4 shape, bool requires_grad) {
    return from_data(shape, std::vector<double>(static_cast<size_t>(shape.numel()), 0.0), requires_grad);
}

Tensor Tensor::full(Shape4 shape, double value, bool requires_grad) {
    return from_data(shape, std::vector<double>(static_cast<size_t>(shape.numel()), value), requires_grad);
}

Tensor Tensor::from_data(Shape4 shape, std::vector<double> values, bool requires_grad) {
    if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0)
        throw ShapeError("tensor: negative dimension in shape " + shape.str());
    if (static_cast<int64_t>(values.size()) != shape.numel())
        throw ShapeError("tensor: data length " + std::to_string(values.size()) +
                         " does not match shape " + shape.str());
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = shape;
    impl->data = std::move(values);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_data(Shape4{1, 1, 1, 1}, {value}, requires_grad);
}

const Shape4& Tensor::shape() const { return impl_->shape; }
int64_t Tensor::numel() const { return impl_->shape.numel(); }

std::span<const double> Tensor::data() const { return impl_->data; }
std::span<double> Tensor::data() { return impl_->data; }

double Tensor::at(int64_t n, int64_t c, int64_t h, int64_t w) const {
    const Shape4& s = impl_->shape;
    if (n < 0 || n >= s.n || c < 0 || c >= s.c || h < 0 || h >= s.h || w < 0 || w >= s.w)
        throw ShapeError("tensor: index out of range for shape " + s.str());
    return impl_->data[static_cast<size_t>(flat_index(s, n, c, h, w))];
}

double& Tensor::at(int64_t n, int64_t c, int64_t h, int64_t w) {
    const Shape4& s = impl_->shape;
    if (n < 0 || n >= s.n || c < 0 || c >= s.c || h < 0 || h >= s.h || w < 0 || w >= s.w)
        throw ShapeError("tensor: index out of range for shape " + s.str());
    return impl_->data[static_cast<size_t>(flat_index(s, n, c, h, w))];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool on) { impl_->requires_grad = on; }

bool Tensor::has_grad() const { return !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const {
    if (impl_->grad.empty())
        throw ValueError("tensor: grad requested but none has been computed");
    return impl_->grad;
}

void Tensor::zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
    return from_data(impl_->shape, impl_->data, false);
}

double Tensor::item() const {
    if (numel() != 1)
        throw ShapeError("tensor: item() on non-scalar of shape " + impl_->shape.str());
    return impl_->data[0];
}

void Tensor::backward() const { posekit::backward(*this); }

// ---------------------------------------------------------------------------
// Graph machinery
// ---------------------------------------------------------------------------

Tensor make_op_output(Shape4 shape, std::vector<double> data,
                      std::vector<Tensor> parents,
                      std::function<void(TensorImpl&)> backward_fn) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = shape;
    impl->data = std::move(data);
    bool track = g_grad_mode;
    if (track) {
        track = false;
        for (const Tensor& p : parents)
            if (p.defined() && p.requires_grad()) { track = true; break; }
    }
    if (track) {
        impl->requires_grad = true;
        impl->parents.reserve(parents.size());
        for (const Tensor& p : parents)
            if (p.defined()) impl->parents.push_back(p.impl_);
        impl->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(impl));
}

void backward(const Tensor& loss) {
    if (!loss.defined()) throw ValueError("backward: undefined tensor");
    if (loss.numel() != 1)
        throw ShapeError("backward: loss must be scalar, got shape " + loss.shape().str());
    TensorImpl* root = loss.impl();
    if (!root->requires_grad)
        throw ValueError("backward: loss was not produced by tracked operations");

    // Iterative post-order topo sort (parents before node).
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> visited;
    std::vector<std::pair<TensorImpl*, size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorImpl* p = node->parents[next++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    // Interior grads are recomputed per call; leaf grads accumulate.
    for (TensorImpl* node : order)
        if (node->backward_fn) node->grad.assign(node->data.size(), 0.0);
    root->ensure_grad();
    root->grad[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* node = *it;
        if (node->backward_fn) node->backward_fn(*node);
    }
}

bool all_finite(const Tensor& t) {
    for (double v : t.data())
        if (!std::isfinite(v)) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Raw convolution kernels (shared by forward ops and their adjoints)
// ---------------------------------------------------------------------------

namespace {

// out[n, co, oh, ow] += sum_{ci,kh,kw} in[n, cib+ci, oh*s-p+kh, ow*s-p+kw] * k[co, ci, kh, kw]
void conv_gather_acc(const double* in, const Shape4& is, const double* k, const Shape4& ks,
                     double* out, const Shape4& os, int stride, int pad, int groups) {
    const int64_t cin_per_g = ks.c;
    const int64_t cout_per_g = ks.n / groups;
    for (int64_t n = 0; n < is.n; ++n)
        for (int64_t g = 0; g < groups; ++g)
            for (int64_t cog = 0; cog < cout_per_g; ++cog) {
                const int64_t co = g * cout_per_g + cog;
                const double* kc = k + co * ks.c * ks.h * ks.w;
                for (int64_t oh = 0; oh < os.h; ++oh)
                    for (int64_t ow = 0; ow < os.w; ++ow) {
                        double acc = 0.0;
                        for (int64_t ci = 0; ci < cin_per_g; ++ci) {
                            const double* ip = in + ((n * is.c + g * cin_per_g + ci) * is.h) * is.w;
                            const double* kp = kc + (ci * ks.h) * ks.w;
                            for (int64_t kh = 0; kh < ks.h; ++kh) {
                                const int64_t ih = oh * stride - pad + kh;
                                if (ih < 0 || ih >= is.h) continue;
                                for (int64_t kw = 0; kw < ks.w; ++kw) {
                                    const int64_t iw = ow * stride - pad + kw;
                                    if (iw < 0 || iw >= is.w) continue;
                                    acc += ip[ih * is.w + iw] * kp[kh * ks.w + kw];
                                }
                            }
                        }
                        out[flat_index(os, n, co, oh, ow)] += acc;
                    }
            }
}

// out[n, cob+co, ih*s-p+kh, iw*s-p+kw] += in[n, ci, ih, iw] * k[ci, co, kh, kw]
void deconv_scatter_acc(const double* in, const Shape4& is, const double* k, const Shape4& ks,
                        double* out, const Shape4& os, int stride, int pad, int groups) {
    const int64_t cin_per_g = is.c / groups;
    const int64_t cout_per_g = ks.c;
    for (int64_t n = 0; n < is.n; ++n)
        for (int64_t g = 0; g < groups; ++g)
            for (int64_t cig = 0; cig < cin_per_g; ++cig) {
                const int64_t ci = g * cin_per_g + cig;
                const double* kc = k + ci * ks.c * ks.h * ks.w;
                for (int64_t ih = 0; ih < is.h; ++ih)
                    for (int64_t iw = 0; iw < is.w; ++iw) {
                        const double v = in[flat_index(is, n, ci, ih, iw)];
                        if (v == 0.0) continue;
                        for (int64_t co = 0; co < cout_per_g; ++co) {
                            double* op = out + ((n * os.c + g * cout_per_g + co) * os.h) * os.w;
                            const double* kp = kc + (co * ks.h) * ks.w;
                            for (int64_t kh = 0; kh < ks.h; ++kh) {
                                const int64_t oh = ih * stride - pad + kh;
                                if (oh < 0 || oh >= os.h) continue;
                                for (int64_t kw = 0; kw < ks.w; ++kw) {
                                    const int64_t ow = iw * stride - pad + kw;
                                    if (ow < 0 || ow >= os.w) continue;
                                    op[oh * os.w + ow] += v * kp[kh * ks.w + kw];
                                }
                            }
                        }
                    }
            }
}

// gk[co, ci, kh, kw] += sum_{n,oh,ow} in[n, cib+ci, oh*s-p+kh, ow*s-p+kw] * gout[n, co, oh, ow]
void conv_kernel_grad_acc(const double* in, const Shape4& is, const double* gout, const Shape4& os,
                          double* gk, const Shape4& ks, int stride, int pad, int groups) {
    const int64_t cin_per_g = ks.c;
    const int64_t cout_per_g = ks.n / groups;
    for (int64_t n = 0; n < is.n; ++n)
        for (int64_t g = 0; g < groups; ++g)
            for (int64_t cog = 0; cog < cout_per_g; ++cog) {
                const int64_t co = g * cout_per_g + cog;
                for (int64_t oh = 0; oh < os.h; ++oh)
                    for (int64_t ow = 0; ow < os.w; ++ow) {
                        const double go = gout[flat_index(os, n, co, oh, ow)];
                        if (go == 0.0) continue;
                        for (int64_t ci = 0; ci < cin_per_g; ++ci) {
                            const double* ip = in + ((n * is.c + g * cin_per_g + ci) * is.h) * is.w;
                            double* kp = gk + ((co * ks.c + ci) * ks.h) * ks.w;
                            for (int64_t kh = 0; kh < ks.h; ++kh) {
                                const int64_t ih = oh * stride - pad + kh;
                                if (ih < 0 || ih >= is.h) continue;
                                for (int64_t kw = 0; kw < ks.w; ++kw) {
                                    const int64_t iw = ow * stride - pad + kw;
                                    if (iw < 0 || iw >= is.w) continue;
                                    kp[kh * ks.w + kw] += ip[ih * is.w + iw] * go;
                                }
                            }
                        }
                    }
            }
}

// gk[ci, co, kh, kw] += sum_{n,ih,iw} in[n, ci, ih, iw] * gout[n, cob+co, ih*s-p+kh, iw*s-p+kw]
void deconv_kernel_grad_acc(const double* in, const Shape4& is, const double* gout, const Shape4& os,
                            double* gk, const Shape4& ks, int stride, int pad, int groups) {
    const int64_t cin_per_g = is.c / groups;
    const int64_t cout_per_g = ks.c;
    for (int64_t n = 0; n < is.n; ++n)
        for (int64_t g = 0; g < groups; ++g)
            for (int64_t cig = 0; cig < cin_per_g; ++cig) {
                const int64_t ci = g * cin_per_g + cig;
                for (int64_t ih = 0; ih < is.h; ++ih)
                    for (int64_t iw = 0; iw < is.w; ++iw) {
                        const double v = in[flat_index(is, n, ci, ih, iw)];
                        if (v == 0.0) continue;
                        for (int64_t co = 0; co < cout_per_g; ++co) {
                            const double* gp = gout + ((n * os.c + g * cout_per_g + co) * os.h) * os.w;
                            double* kp = gk + ((ci * ks.c + co) * ks.h) * ks.w;
                            for (int64_t kh = 0; kh < ks.h; ++kh) {
                                const int64_t oh = ih * stride - pad + kh;
                                if (oh < 0 || oh >= os.h) continue;
                                for (int64_t kw = 0; kw < ks.w; ++kw) {
                                    const int64_t ow = iw * stride - pad + kw;
                                    if (ow < 0 || ow >= os.w) continue;
                                    kp[kh * ks.w + kw] += v * gp[oh * os.w + ow];
                                }
                            }
                        }
                    }
            }
}

void bias_grad_acc(const double* gout, const Shape4& os, double* gbias) {
    for (int64_t n = 0; n < os.n; ++n)
        for (int64_t c = 0; c < os.c; ++c) {
            double acc = 0.0;
            const double* p = gout + ((n * os.c + c) * os.h) * os.w;
            for (int64_t i = 0; i < os.h * os.w; ++i) acc += p[i];
            gbias[c] += acc;
        }
}

void add_bias(double* out, const Shape4& os, const double* bias) {
    for (int64_t n = 0; n < os.n; ++n)
        for (int64_t c = 0; c < os.c; ++c) {
            double* p = out + ((n * os.c + c) * os.h) * os.w;
            for (int64_t i = 0; i < os.h * os.w; ++i) p[i] += bias[c];
        }
}

void check_conv_common(const char* op, const Tensor& input,
                       const std::optional<Tensor>& bias, int stride, int padding, int groups,
                       int64_t cout_total) {
    if (stride < 1)
        throw ValueError(std::string(op) + ": stride must be >= 1, got " + std::to_string(stride));
    if (padding < 0)
        throw ValueError(std::string(op) + ": padding must be >= 0, got " + std::to_string(padding));
    if (groups < 1)
        throw ValueError(std::string(op) + ": groups must be >= 1, got " + std::to_string(groups));
    if (input.shape().c % groups != 0)
        throw ShapeError(std::string(op) + ": channel axis " + std::to_string(input.shape().c) +
                         " not divisible by groups " + std::to_string(groups));
    if (bias) {
        const Shape4& bs = bias->shape();
        if (!(bs.n == 1 && bs.h == 1 && bs.w == 1 && bs.c == cout_total))
            throw ShapeError(std::string(op) + ": bias channel axis expects (1," +
                             std::to_string(cout_total) + ",1,1), got " + bs.str());
    }
}

} // namespace

// ---------------------------------------------------------------------------
// conv2d / deconv2d
// ---------------------------------------------------------------------------

Tensor conv2d(const Tensor& input, const Tensor& kernel,
              const std::optional<Tensor>& bias,
              int stride, int padding, int groups) {
    const Shape4& is = input.shape();
    const Shape4& ks = kernel.shape();
    const int64_t cout = ks.n;
    check_conv_common("conv2d", input, bias, stride, padding, groups, cout);
    if (ks.c != is.c / groups)
        throw ShapeError("conv2d: kernel input-channel axis expects " +
                         std::to_string(is.c / groups) + " (=Cin/groups), got " + std::to_string(ks.c));
    if (cout % groups != 0)
        throw ShapeError("conv2d: kernel output-channel axis " + std::to_string(cout) +
                         " not divisible by groups " + std::to_string(groups));
    const int64_t oh = (is.h + 2 * padding - ks.h) / stride + 1;
    const int64_t ow = (is.w + 2 * padding - ks.w) / stride + 1;
    if (is.h + 2 * padding < ks.h || is.w + 2 * padding < ks.w)
        throw ShapeError("conv2d: kernel " + std::to_string(ks.h) + "x" + std::to_string(ks.w) +
                         " larger than padded input on the spatial axes (" + is.str() + ")");
    const Shape4 os{is.n, cout, oh, ow};

    std::vector<double> out(static_cast<size_t>(os.numel()), 0.0);
    conv_gather_acc(input.data().data(), is, kernel.data().data(), ks, out.data(), os,
                    stride, padding, groups);
    if (bias) add_bias(out.data(), os, bias->data().data());

    Tensor in_t = input, k_t = kernel;
    std::optional<Tensor> b_t = bias;
    auto fn = [in_t, k_t, b_t, is, ks, os, stride, padding, groups](TensorImpl& self) {
        const double* gout = self.grad.data();
        if (in_t.impl()->requires_grad) {
            in_t.impl()->ensure_grad();
            // adjoint of gather is scatter with the same kernel
            deconv_scatter_acc(gout, os, k_t.data().data(), Shape4{ks.n, ks.c, ks.h, ks.w},
                               in_t.impl()->grad.data(), is, stride, padding, groups);
        }
        if (k_t.impl()->requires_grad) {
            k_t.impl()->ensure_grad();
            conv_kernel_grad_acc(in_t.data().data(), is, gout, os,
                                 k_t.impl()->grad.data(), ks, stride, padding, groups);
        }
        if (b_t && b_t->impl()->requires_grad) {
            b_t->impl()->ensure_grad();
            bias_grad_acc(gout, os, b_t->impl()->grad.data());
        }
    };
    std::vector<Tensor> parents{input, kernel};
    if (bias) parents.push_back(*bias);
    return make_op_output(os, std::move(out), std::move(parents), std::move(fn));
}

Tensor deconv2d(const Tensor& input, const Tensor& kernel,
                const std::optional<Tensor>& bias,
                int stride, int padding, int groups) {
    const Shape4& is = input.shape();
    const Shape4& ks = kernel.shape();
    const int64_t cout = ks.c * groups;
    check_conv_common("deconv2d", input, bias, stride, padding, groups, cout);
    if (ks.n != is.c)
        throw ShapeError("deconv2d: kernel input-channel axis expects " +
                         std::to_string(is.c) + " (=Cin), got " + std::to_string(ks.n));
    const int64_t oh = (is.h - 1) * stride - 2 * padding + ks.h;
    const int64_t ow = (is.w - 1) * stride - 2 * padding + ks.w;
    if (oh < 1 || ow < 1)
        throw ShapeError("deconv2d: output spatial axes collapse to " + std::to_string(oh) + "x" +
                         std::to_string(ow) + " for input " + is.str());
    const Shape4 os{is.n, cout, oh, ow};

    std::vector<double> out(static_cast<size_t>(os.numel()), 0.0);
    deconv_scatter_acc(input.data().data(), is, kernel.data().data(), ks, out.data(), os,
                       stride, padding, groups);
    if (bias) add_bias(out.data(), os, bias->data().data());

    Tensor in_t = input, k_t = kernel;
    std::optional<Tensor> b_t = bias;
    auto fn = [in_t, k_t, b_t, is, ks, os, stride, padding, groups](TensorImpl& self) {
        const double* gout = self.grad.data();
        if (in_t.impl()->requires_grad) {
            in_t.impl()->ensure_grad();
            conv_gather_acc(gout, os, k_t.data().data(), ks,
                            in_t.impl()->grad.data(), is, stride, padding, groups);
        }
        if (k_t.impl()->requires_grad) {
            k_t.impl()->ensure_grad();
            deconv_kernel_grad_acc(in_t.data().data(), is, gout, os,
                                   k_t.impl()->grad.data(), ks, stride, padding, groups);
        }
        if (b_t && b_t->impl()->requires_grad) {
            b_t->impl()->ensure_grad();
            bias_grad_acc(gout, os, b_t->impl()->grad.data());
        }
    };
    std::vector<Tensor> parents{input, kernel};
    if (bias) parents.push_back(*bias);
    return make_op_output(os, std::move(out), std::move(parents), std::move(fn));
}

// ---------------------------------------------------------------------------
// Pointwise / reduction ops
// ---------------------------------------------------------------------------

Tensor global_avg_pool(const Tensor& input) {
    const Shape4& is = input.shape();
    if (is.h < 1 || is.w < 1)
        throw ShapeError("global_avg_pool: spatial axes must be >= 1, got " + is.str());
    const Shape4 os{is.n, is.c, 1, 1};
    const double inv = 1.0 / static_cast<double>(is.h * is.w);
    std::vector<double> out(static_cast<size_t>(os.numel()));
    const double* in = input.data().data();
    for (int64_t n = 0; n < is.n; ++n)
        for (int64_t c = 0; c < is.c; ++c) {
            double acc = 0.0;
            const double* p = in + ((n * is.c + c) * is.h) * is.w;
            for (int64_t i = 0; i < is.h * is.w; ++i) acc += p[i];
            out[n * is.c + c] = acc * inv;
        }

    Tensor in_t = input;
    auto fn = [in_t, is, inv](TensorImpl& self) {
        if (!in_t.impl()->requires_grad) return;
        in_t.impl()->ensure_grad();
        double* gin = in_t.impl()->grad.data();
        for (int64_t n = 0; n < is.n; ++n)
            for (int64_t c = 0; c < is.c; ++c) {
                const double g = self.grad[n * is.c + c] * inv;
                double* p = gin + ((n * is.c + c) * is.h) * is.w;
                for (int64_t i = 0; i < is.h * is.w; ++i) p[i] += g;
            }
    };
    return make_op_output(os, std::move(out), {input}, std::move(fn));
}

Tensor hard_sigmoid(const Tensor& input) {
    std::vector<double> out(input.data().begin(), input.data().end());
    for (double& v : out) v = std::clamp((v + 3.0) / 6.0, 0.0, 1.0);

    Tensor in_t = input;
    auto fn = [in_t](TensorImpl& self) {
        if (!in_t.impl()->requires_grad) return;
        in_t.impl()->ensure_grad();
        const auto x = in_t.data();
        double* gin = in_t.impl()->grad.data();
        for (size_t i = 0; i < x.size(); ++i)
            if (x[i] > -3.0 && x[i] < 3.0) gin[i] += self.grad[i] / 6.0;
    };
    return make_op_output(input.shape(), std::move(out), {input}, std::move(fn));
}

Tensor relu(const Tensor& input) {
    std::vector<double> out(input.data().begin(), input.data().end());
    for (double& v : out) v = v > 0.0 ? v : 0.0;

    Tensor in_t = input;
    auto fn = [in_t](TensorImpl& self) {
        if (!in_t.impl()->requires_grad) return;
        in_t.impl()->ensure_grad();
        const auto x = in_t.data();
        double* gin = in_t.impl()->grad.data();
        for (size_t i = 0; i < x.size(); ++i)
            if (x[i] > 0.0) gin[i] += self.grad[i];
    };
    return make_op_output(input.shape(), std::move(out), {input}, std::move(fn));
}

namespace {

enum class EwOp { add, sub, mul };

void check_broadcast(const Shape4& a, const Shape4& b) {
    auto ok = [](int64_t ad, int64_t bd) { return bd == ad || bd == 1; };
    if (!ok(a.n, b.n) || !ok(a.c, b.c) || !ok(a.h, b.h) || !ok(a.w, b.w))
        throw ShapeError("elementwise: shape " + b.str() + " does not broadcast to " + a.str());
}

int64_t bcast_index(const Shape4& bs, int64_t n, int64_t c, int64_t h, int64_t w) {
    return flat_index(bs, bs.n == 1 ? 0 : n, bs.c == 1 ? 0 : c, bs.h == 1 ? 0 : h, bs.w == 1 ? 0 : w);
}

Tensor elementwise_impl(EwOp op, const Tensor& a, const Tensor& b) {
    const Shape4& as = a.shape();
    const Shape4& bs = b.shape();
    check_broadcast(as, bs);

    std::vector<double> out(static_cast<size_t>(as.numel()));
    const double* ap = a.data().data();
    const double* bp = b.data().data();
    size_t i = 0;
    for (int64_t n = 0; n < as.n; ++n)
        for (int64_t c = 0; c < as.c; ++c)
            for (int64_t h = 0; h < as.h; ++h)
                for (int64_t w = 0; w < as.w; ++w, ++i) {
                    const double bv = bp[bcast_index(bs, n, c, h, w)];
                    switch (op) {
                        case EwOp::add: out[i] = ap[i] + bv; break;
                        case EwOp::sub: out[i] = ap[i] - bv; break;
                        case EwOp::mul: out[i] = ap[i] * bv; break;
                    }
                }

    Tensor a_t = a, b_t = b;
    auto fn = [op, a_t, b_t, as, bs](TensorImpl& self) {
        const double* gout = self.grad.data();
        if (a_t.impl()->requires_grad) {
            a_t.impl()->ensure_grad();
            double* ga = a_t.impl()->grad.data();
            const double* bp2 = b_t.data().data();
            size_t j = 0;
            for (int64_t n = 0; n < as.n; ++n)
                for (int64_t c = 0; c < as.c; ++c)
                    for (int64_t h = 0; h < as.h; ++h)
                        for (int64_t w = 0; w < as.w; ++w, ++j) {
                            ga[j] += op == EwOp::mul ? gout[j] * bp2[bcast_index(bs, n, c, h, w)]
                                                     : gout[j];
                        }
        }
        if (b_t.impl()->requires_grad) {
            b_t.impl()->ensure_grad();
            double* gb = b_t.impl()->grad.data();
            const double* ap2 = a_t.data().data();
            const double sign = op == EwOp::sub ? -1.0 : 1.0;
            size_t j = 0;
            for (int64_t n = 0; n < as.n; ++n)
                for (int64_t c = 0; c < as.c; ++c)
                    for (int64_t h = 0; h < as.h; ++h)
                        for (int64_t w = 0; w < as.w; ++w, ++j) {
                            const int64_t bi = bcast_index(bs, n, c, h, w);
                            gb[bi] += op == EwOp::mul ? gout[j] * ap2[j] : sign * gout[j];
                        }
        }
    };
    return make_op_output(as, std::move(out), {a, b}, std::move(fn));
}

} // namespace

Tensor elementwise(EwKind kind, const Tensor& a, const Tensor& b) {
    return elementwise_impl(kind == EwKind::add ? EwOp::add : EwOp::mul, a, b);
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise_impl(EwOp::add, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise_impl(EwOp::mul, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise_impl(EwOp::sub, a, b); }

Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (double& v : out) v *= s;
    Tensor a_t = a;
    auto fn = [a_t, s](TensorImpl& self) {
        if (!a_t.impl()->requires_grad) return;
        a_t.impl()->ensure_grad();
        double* ga = a_t.impl()->grad.data();
        for (size_t i = 0; i < self.grad.size(); ++i) ga[i] += s * self.grad[i];
    };
    return make_op_output(a.shape(), std::move(out), {a}, std::move(fn));
}

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    Tensor a_t = a;
    auto fn = [a_t](TensorImpl& self) {
        if (!a_t.impl()->requires_grad) return;
        a_t.impl()->ensure_grad();
        const double g = self.grad[0];
        double* ga = a_t.impl()->grad.data();
        for (size_t i = 0; i < a_t.impl()->data.size(); ++i) ga[i] += g;
    };
    return make_op_output(Shape4{1, 1, 1, 1}, {acc}, {a}, std::move(fn));
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var,
                  bool training, double momentum, double eps) {
    const Shape4& is = input.shape();
    const Shape4 want{1, is.c, 1, 1};
    for (const Tensor* t : {&gamma, &beta, static_cast<const Tensor*>(&running_mean),
                            static_cast<const Tensor*>(&running_var)})
        if (!(t->shape() == want))
            throw ShapeError("batch_norm: per-channel tensors must be " + want.str() +
                             ", got " + t->shape().str());

    const int64_t m = is.n * is.h * is.w;
    const int64_t plane = is.h * is.w;
    std::vector<double> mean(is.c, 0.0), invstd(is.c, 0.0);
    const double* in = input.data().data();

    if (training) {
        if (m < 1) throw ShapeError("batch_norm: empty batch axis for input " + is.str());
        std::vector<double> var(is.c, 0.0);
        for (int64_t c = 0; c < is.c; ++c) {
            double acc = 0.0;
            for (int64_t n = 0; n < is.n; ++n) {
                const double* p = in + ((n * is.c + c) * plane);
                for (int64_t i = 0; i < plane; ++i) acc += p[i];
            }
            mean[c] = acc / static_cast<double>(m);
            double vacc = 0.0;
            for (int64_t n = 0; n < is.n; ++n) {
                const double* p = in + ((n * is.c + c) * plane);
                for (int64_t i = 0; i < plane; ++i) {
                    const double d = p[i] - mean[c];
                    vacc += d * d;
                }
            }
            var[c] = vacc / static_cast<double>(m);
            invstd[c] = 1.0 / std::sqrt(var[c] + eps);
        }
        // running stats use the unbiased variance, matching common practice
        double* rm = running_mean.data().data();
        double* rv = running_var.data().data();
        for (int64_t c = 0; c < is.c; ++c) {
            const double unbiased = m > 1 ? var[c] * static_cast<double>(m) / static_cast<double>(m - 1)
                                          : var[c];
            rm[c] = (1.0 - momentum) * rm[c] + momentum * mean[c];
            rv[c] = (1.0 - momentum) * rv[c] + momentum * unbiased;
        }
    } else {
        const double* rm = running_mean.data().data();
        const double* rv = running_var.data().data();
        for (int64_t c = 0; c < is.c; ++c) {
            mean[c] = rm[c];
            invstd[c] = 1.0 / std::sqrt(rv[c] + eps);
        }
    }

    std::vector<double> xhat(static_cast<size_t>(is.numel()));
    std::vector<double> out(static_cast<size_t>(is.numel()));
    const double* gm = gamma.data().data();
    const double* bt = beta.data().data();
    for (int64_t n = 0; n < is.n; ++n)
        for (int64_t c = 0; c < is.c; ++c) {
            const double* p = in + ((n * is.c + c) * plane);
            double* xh = xhat.data() + ((n * is.c + c) * plane);
            double* o = out.data() + ((n * is.c + c) * plane);
            for (int64_t i = 0; i < plane; ++i) {
                xh[i] = (p[i] - mean[c]) * invstd[c];
                o[i] = gm[c] * xh[i] + bt[c];
            }
        }

    Tensor in_t = input, g_t = gamma, b_t = beta;
    auto fn = [in_t, g_t, b_t, is, plane, m, training,
               invstd_v = std::move(invstd),
               xhat_v = std::move(xhat)](TensorImpl& self) {
        const double* gout = self.grad.data();
        const double* gm2 = g_t.data().data();

        // per-channel reductions shared by all three grads
        std::vector<double> sum_g(is.c, 0.0), sum_gx(is.c, 0.0);
        for (int64_t n = 0; n < is.n; ++n)
            for (int64_t c = 0; c < is.c; ++c) {
                const double* go = gout + ((n * is.c + c) * plane);
                const double* xh = xhat_v.data() + ((n * is.c + c) * plane);
                for (int64_t i = 0; i < plane; ++i) {
                    sum_g[c] += go[i];
                    sum_gx[c] += go[i] * xh[i];
                }
            }

        if (b_t.impl()->requires_grad) {
            b_t.impl()->ensure_grad();
            for (int64_t c = 0; c < is.c; ++c) b_t.impl()->grad[c] += sum_g[c];
        }
        if (g_t.impl()->requires_grad) {
            g_t.impl()->ensure_grad();
            for (int64_t c = 0; c < is.c; ++c) g_t.impl()->grad[c] += sum_gx[c];
        }
        if (in_t.impl()->requires_grad) {
            in_t.impl()->ensure_grad();
            double* gin = in_t.impl()->grad.data();
            const double invm = 1.0 / static_cast<double>(m);
            for (int64_t n = 0; n < is.n; ++n)
                for (int64_t c = 0; c < is.c; ++c) {
                    const double* go = gout + ((n * is.c + c) * plane);
                    const double* xh = xhat_v.data() + ((n * is.c + c) * plane);
                    double* gi = gin + ((n * is.c + c) * plane);
                    const double k = gm2[c] * invstd_v[c];
                    for (int64_t i = 0; i < plane; ++i) {
                        if (training) {
                            gi[i] += k * (go[i] - invm * sum_g[c] - invm * xh[i] * sum_gx[c]);
                        } else {
                            gi[i] += k * go[i];
                        }
                    }
                }
        }
    };
    return make_op_output(is, std::move(out), {input, gamma, beta}, std::move(fn));
}

} // namespace posekit
