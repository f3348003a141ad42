#pragma once

#include "usseg/weibull.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace usseg {

// Multi-head 1D convolutional forecaster. Each head runs `channels.size()`
// blocks of [conv(kernel, stride 1, length-preserving pad) + LeakyReLU +
// conv(kernel 2, stride 2) + LeakyReLU]; head outputs are concatenated,
// flattened, and passed through the fully connected stack, ending in two
// raw outputs mapped by softplus(.) + 1e-4 to Weibull (scale, shape).
struct NetConfig {
    int window = 64;
    std::vector<int> head_kernels = {3, 5, 9, 15};
    std::vector<int> channels = {8, 16};  // per block; block count = channels.size()
    std::vector<int> fc_widths = {128, 64};
    double leaky_slope = 0.01;

    int blocks() const { return static_cast<int>(channels.size()); }
};

inline constexpr double kOutputFloor = 1e-4;

// Parameter vector layout: heads in declaration order; within a head, the
// blocks' convolutions in execution order; then fully connected layers;
// per layer, weights first (out-major) then biases. Parameters and
// activations are double precision during training.
struct ProbNet {
    NetConfig config;
    std::vector<double> params;
    double norm_scale = 1.0;  // amplitude that maps to 1.0 at the input
};

// Closed-form parameter count implied by the config.
std::size_t param_count(const NetConfig& cfg);

// Validates the config and seeds parameters: weights uniform in
// +-1/sqrt(fan_in), biases zero except the output bias, which is set so a
// zero input yields (scale, shape) near (0.5, 1.5).
ProbNet make_net(NetConfig cfg, uint64_t seed);

// Indices of the two output-layer bias parameters (scale, shape).
std::pair<std::size_t, std::size_t> output_bias_indices(const NetConfig& cfg);

// Batched forward pass: x holds n rows of `window` values. Pure function of
// (params, x); safe for concurrent use on a shared net.
void forward(const ProbNet& net, std::span<const double> x, std::size_t n,
             std::vector<WeibullParams>& out);

// Batch-mean Weibull NLL and its gradient with respect to every parameter.
// The reduction runs over fixed sample chunks so results do not depend on
// the worker count. Returns the loss.
double nll_backward(const ProbNet& net, std::span<const double> x,
                    std::span<const double> targets, std::size_t n, std::vector<double>& grad);

// --- Adam -----------------------------------------------------------------

struct AdamState {
    std::vector<double> m, v;
    int64_t t = 0;
    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

void adam_step(AdamState& state, std::vector<double>& params, std::span<const double> grads,
               double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// --- Model file ------------------------------------------------------------
// "USSM" | u32 version=1 | u32 window | u32 n_heads | n_heads*u32 kernels
// | u32 n_blocks | n_blocks*u32 channels | u32 n_fc | n_fc*u32 widths
// | f32 leaky_slope | f32 norm_scale | u64 param_count | param_count*f32
// little-endian parameters in the layout above.
void save_model(const ProbNet& net, const std::string& path);
ProbNet load_model(const std::string& path);

} // namespace usseg
