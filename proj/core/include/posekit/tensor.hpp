#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "posekit/errors.hpp"

namespace posekit {

/// Dense 4-D shape in batch/channel/height/width order.
struct Shape4 {
    int64_t n = 1;
    int64_t c = 1;
    int64_t h = 1;
    int64_t w = 1;

    int64_t numel() const { return n * c * h * w; }
    bool operator==(const Shape4&) const = default;
    std::string str() const;
};

struct TensorImpl;

/// Handle to a dense NCHW tensor of doubles. Copies share storage; use
/// detach() or clone() for an independent value. Tensors produced by the
/// ops below record the computation needed for reverse-mode backward()
/// whenever an input has requires_grad set and grad mode is on.
class Tensor {
public:
    Tensor();

    static Tensor zeros(Shape4 shape, bool requires_grad = false);
    static Tensor full(Shape4 shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape4 shape, std::vector<double> values, bool requires_grad = false);
    /// 1x1x1x1 scalar.
    static Tensor scalar(double value, bool requires_grad = false);

    const Shape4& shape() const;
    int64_t numel() const;

    std::span<const double> data() const;
    std::span<double> data();
    double at(int64_t n, int64_t c, int64_t h, int64_t w) const;
    double& at(int64_t n, int64_t c, int64_t h, int64_t w);

    bool requires_grad() const;
    void set_requires_grad(bool on);

    bool has_grad() const;
    std::span<const double> grad() const;
    /// Clears this tensor's grad buffer (leaves allocation).
    void zero_grad();

    /// Value-only copy, cut off from any graph.
    Tensor detach() const;
    Tensor clone() const { return detach(); }

    /// Value of a 1-element tensor. Throws ShapeError otherwise.
    double item() const;

    /// Reverse-mode backprop from this scalar. Grads of leaf tensors
    /// accumulate across calls; intermediate grads are recomputed fresh.
    void backward() const;

    bool defined() const { return impl_ != nullptr; }

    TensorImpl* impl() const { return impl_.get(); }

private:
    explicit Tensor(std::shared_ptr<TensorImpl> impl);
    std::shared_ptr<TensorImpl> impl_;
    friend Tensor make_op_output(Shape4, std::vector<double>, std::vector<Tensor>,
                                 std::function<void(TensorImpl&)>);
};

/// RAII switch that disables graph recording on this thread.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

bool grad_mode_enabled();

// ---------------------------------------------------------------------------
// Forward operations (each differentiable unless noted)
// ---------------------------------------------------------------------------

/// 2-D convolution. kernel is (Cout, Cin/groups, Kh, Kw) laid out on Shape4;
/// bias, when present, is (1, Cout, 1, 1). groups=Cin with Cout=Cin is
/// depthwise, Kh=Kw=1 with groups=1 is pointwise.
Tensor conv2d(const Tensor& input, const Tensor& kernel,
              const std::optional<Tensor>& bias,
              int stride, int padding, int groups);

/// Transposed convolution, the adjoint of conv2d in its input: with the same
/// kernel tensor, <deconv2d(x,K), y> == <x, conv2d(y,K)>. kernel is
/// (Cin, Cout/groups, Kh, Kw); output spatial size (in-1)*stride - 2*padding + k.
Tensor deconv2d(const Tensor& input, const Tensor& kernel,
                const std::optional<Tensor>& bias,
                int stride, int padding, int groups);

/// Mean over H and W per channel; output is N x C x 1 x 1.
Tensor global_avg_pool(const Tensor& input);

/// Elementwise clamp((x+3)/6, 0, 1).
Tensor hard_sigmoid(const Tensor& input);

Tensor relu(const Tensor& input);

enum class EwKind { add, mul };

/// Elementwise add/mul. b must broadcast to a's shape: every axis of b
/// either equals a's or is 1 (covers the NxCx1x1 and Nx1xHxW cases).
/// Gradients sum-reduce over broadcast axes of b.
Tensor elementwise(EwKind kind, const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);

/// Multiply by a compile-time constant (not differentiated through s).
Tensor scale(const Tensor& a, double s);

/// Sum of all elements as a 1x1x1x1 scalar.
Tensor sum(const Tensor& a);

/// Per-channel batch normalization. gamma/beta are (1,C,1,1) parameters;
/// running_mean/running_var are (1,C,1,1) value buffers updated in place
/// when training. Statistics in training mode are per-channel over N*H*W.
Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  Tensor& running_mean, Tensor& running_var,
                  bool training, double momentum = 0.1, double eps = 1e-5);

/// Free-function form of Tensor::backward().
void backward(const Tensor& loss);

/// True if every element is finite.
bool all_finite(const Tensor& t);

} // namespace posekit
