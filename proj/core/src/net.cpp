#include "usseg/net.hpp"

#include "usseg/error.hpp"
#include "usseg/parallel.hpp"
#include "usseg/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace usseg {

namespace {

struct ConvDesc {
    int kernel, stride, pad_left;
    int c_in, c_out;
    int in_len, out_len;
    std::size_t w_off, b_off;
};

struct FcDesc {
    int in, out;
    std::size_t w_off, b_off;
};

struct NetPlan {
    std::vector<std::vector<ConvDesc>> heads;
    std::vector<FcDesc> fc;  // hidden layers then the 2-wide output layer
    int flat_dim = 0;
    std::size_t n_params = 0;
};

NetPlan plan_net(const NetConfig& cfg) {
    if (cfg.window < 2) throw std::invalid_argument("NetConfig: window must be >= 2");
    if (cfg.head_kernels.empty()) throw std::invalid_argument("NetConfig: no head kernels");
    if (cfg.channels.empty()) throw std::invalid_argument("NetConfig: no channels");
    const int blocks = cfg.blocks();
    if (cfg.window % (1 << blocks) != 0)
        throw std::invalid_argument("NetConfig: window must be divisible by 2^blocks");
    for (int k : cfg.head_kernels)
        if (k < 1) throw std::invalid_argument("NetConfig: kernel sizes must be >= 1");
    for (int c : cfg.channels)
        if (c < 1) throw std::invalid_argument("NetConfig: channels must be >= 1");
    for (int w : cfg.fc_widths)
        if (w < 1) throw std::invalid_argument("NetConfig: fc widths must be >= 1");

    NetPlan plan;
    std::size_t off = 0;
    auto add_conv = [&](std::vector<ConvDesc>& layers, int kernel, int stride, int pad_left,
                        int c_in, int c_out, int in_len, int out_len) {
        ConvDesc d{kernel, stride, pad_left, c_in, c_out, in_len, out_len, off, 0};
        off += static_cast<std::size_t>(kernel) * c_in * c_out;
        d.b_off = off;
        off += static_cast<std::size_t>(c_out);
        layers.push_back(d);
    };

    for (int k : cfg.head_kernels) {
        std::vector<ConvDesc> layers;
        int len = cfg.window;
        int c_in = 1;
        for (int bl = 0; bl < blocks; ++bl) {
            const int c_out = cfg.channels[static_cast<std::size_t>(bl)];
            add_conv(layers, k, 1, (k - 1) / 2, c_in, c_out, len, len);
            add_conv(layers, 2, 2, 0, c_out, c_out, len, len / 2);
            len /= 2;
            c_in = c_out;
        }
        plan.heads.push_back(std::move(layers));
    }
    plan.flat_dim = static_cast<int>(cfg.head_kernels.size()) * cfg.channels.back() *
                    (cfg.window >> blocks);

    int in = plan.flat_dim;
    for (int w : cfg.fc_widths) {
        FcDesc d{in, w, off, 0};
        off += static_cast<std::size_t>(in) * w;
        d.b_off = off;
        off += static_cast<std::size_t>(w);
        plan.fc.push_back(d);
        in = w;
    }
    FcDesc out_layer{in, 2, off, 0};
    off += static_cast<std::size_t>(in) * 2;
    out_layer.b_off = off;
    off += 2;
    plan.fc.push_back(out_layer);

    plan.n_params = off;
    return plan;
}

double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}
double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
double softplus_inv(double y) { return std::log(std::expm1(y)); }

struct LayerBufs {
    std::vector<double> pre, post;
};

// Per-thread forward/backward scratch. Sized once from the plan.
struct Workspace {
    std::vector<std::vector<LayerBufs>> heads;
    std::vector<double> flat;
    std::vector<LayerBufs> fc;
    std::vector<double> d_a, d_b, d_flat;  // backward ping-pong buffers

    explicit Workspace(const NetPlan& plan) {
        std::size_t max_buf = static_cast<std::size_t>(plan.flat_dim);
        heads.resize(plan.heads.size());
        for (std::size_t h = 0; h < plan.heads.size(); ++h) {
            heads[h].resize(plan.heads[h].size());
            for (std::size_t l = 0; l < plan.heads[h].size(); ++l) {
                const ConvDesc& d = plan.heads[h][l];
                const std::size_t sz = static_cast<std::size_t>(d.c_out) * d.out_len;
                heads[h][l].pre.resize(sz);
                heads[h][l].post.resize(sz);
                max_buf = std::max(max_buf, std::max(sz, static_cast<std::size_t>(d.c_in) * d.in_len));
            }
        }
        flat.resize(static_cast<std::size_t>(plan.flat_dim));
        fc.resize(plan.fc.size());
        for (std::size_t l = 0; l < plan.fc.size(); ++l) {
            fc[l].pre.resize(static_cast<std::size_t>(plan.fc[l].out));
            fc[l].post.resize(static_cast<std::size_t>(plan.fc[l].out));
            max_buf = std::max(max_buf, static_cast<std::size_t>(plan.fc[l].in));
        }
        d_a.resize(max_buf);
        d_b.resize(max_buf);
        d_flat.resize(static_cast<std::size_t>(plan.flat_dim));
    }
};

void conv_forward(const ConvDesc& d, const double* params, const double* in, double* out) {
    const double* w = params + d.w_off;
    const double* bias = params + d.b_off;
    for (int co = 0; co < d.c_out; ++co) {
        double* out_row = out + static_cast<std::size_t>(co) * d.out_len;
        for (int i = 0; i < d.out_len; ++i) out_row[i] = bias[co];
        for (int ci = 0; ci < d.c_in; ++ci) {
            const double* in_row = in + static_cast<std::size_t>(ci) * d.in_len;
            const double* w_row = w + (static_cast<std::size_t>(co) * d.c_in + ci) * d.kernel;
            for (int i = 0; i < d.out_len; ++i) {
                const int base = i * d.stride - d.pad_left;
                double acc = 0.0;
                for (int j = 0; j < d.kernel; ++j) {
                    const int m = base + j;
                    if (m >= 0 && m < d.in_len) acc += w_row[j] * in_row[m];
                }
                out_row[i] += acc;
            }
        }
    }
}

void leaky(const double* pre, double* post, std::size_t n, double slope) {
    for (std::size_t i = 0; i < n; ++i) post[i] = pre[i] > 0.0 ? pre[i] : slope * pre[i];
}

// Forward one sample, filling the workspace; returns the two raw outputs.
void forward_sample(const NetPlan& plan, const NetConfig& cfg, const double* params,
                    const double* input, Workspace& ws, double raw[2]) {
    double* flat = ws.flat.data();
    for (std::size_t h = 0; h < plan.heads.size(); ++h) {
        const double* cur = input;
        for (std::size_t l = 0; l < plan.heads[h].size(); ++l) {
            const ConvDesc& d = plan.heads[h][l];
            LayerBufs& bufs = ws.heads[h][l];
            conv_forward(d, params, cur, bufs.pre.data());
            leaky(bufs.pre.data(), bufs.post.data(), bufs.pre.size(), cfg.leaky_slope);
            cur = bufs.post.data();
        }
        const LayerBufs& last = ws.heads[h].back();
        std::copy(last.post.begin(), last.post.end(), flat);
        flat += last.post.size();
    }

    const double* cur = ws.flat.data();
    for (std::size_t l = 0; l < plan.fc.size(); ++l) {
        const FcDesc& d = plan.fc[l];
        const double* w = params + d.w_off;
        const double* bias = params + d.b_off;
        LayerBufs& bufs = ws.fc[l];
        for (int o = 0; o < d.out; ++o) {
            const double* w_row = w + static_cast<std::size_t>(o) * d.in;
            double acc = bias[o];
            for (int i = 0; i < d.in; ++i) acc += w_row[i] * cur[i];
            bufs.pre[static_cast<std::size_t>(o)] = acc;
        }
        if (l + 1 < plan.fc.size()) {
            leaky(bufs.pre.data(), bufs.post.data(), bufs.pre.size(), cfg.leaky_slope);
            cur = bufs.post.data();
        }
    }
    raw[0] = ws.fc.back().pre[0];
    raw[1] = ws.fc.back().pre[1];
}

// Backward one sample from d_raw into grad; d_a/d_b are scratch.
void backward_sample(const NetPlan& plan, const NetConfig& cfg, const double* params,
                     const double* input, Workspace& ws, const double d_raw[2], double* grad) {
    const double slope = cfg.leaky_slope;

    // FC stack, output layer first.
    double* d_cur = ws.d_a.data();
    d_cur[0] = d_raw[0];
    d_cur[1] = d_raw[1];
    for (std::size_t li = plan.fc.size(); li-- > 0;) {
        const FcDesc& d = plan.fc[li];
        const double* in =
            li == 0 ? ws.flat.data() : ws.fc[li - 1].post.data();
        double* w_grad = grad + d.w_off;
        double* b_grad = grad + d.b_off;
        const double* w = params + d.w_off;
        double* d_in = li == 0 ? ws.d_flat.data() : ws.d_b.data();
        std::fill(d_in, d_in + d.in, 0.0);
        for (int o = 0; o < d.out; ++o) {
            const double g = d_cur[o];
            if (g == 0.0) continue;
            b_grad[o] += g;
            const double* w_row = w + static_cast<std::size_t>(o) * d.in;
            double* wg_row = w_grad + static_cast<std::size_t>(o) * d.in;
            for (int i = 0; i < d.in; ++i) {
                wg_row[i] += g * in[i];
                d_in[i] += g * w_row[i];
            }
        }
        if (li > 0) {
            // through the LeakyReLU between fc layers
            const LayerBufs& prev = ws.fc[li - 1];
            for (int i = 0; i < d.in; ++i)
                d_in[i] *= prev.pre[static_cast<std::size_t>(i)] > 0.0 ? 1.0 : slope;
            std::swap(ws.d_a, ws.d_b);
            d_cur = ws.d_a.data();
        }
    }

    // Split d_flat back into heads and run the conv stacks in reverse.
    const double* d_flat = ws.d_flat.data();
    std::size_t flat_off = 0;
    for (std::size_t h = 0; h < plan.heads.size(); ++h) {
        const auto& layers = plan.heads[h];
        const std::size_t out_sz = ws.heads[h].back().post.size();
        double* d_out = ws.d_a.data();
        std::copy(d_flat + flat_off, d_flat + flat_off + out_sz, d_out);
        flat_off += out_sz;

        for (std::size_t li = layers.size(); li-- > 0;) {
            const ConvDesc& d = layers[li];
            const LayerBufs& bufs = ws.heads[h][li];
            // through this layer's LeakyReLU
            for (std::size_t i = 0; i < bufs.pre.size(); ++i)
                d_out[i] *= bufs.pre[i] > 0.0 ? 1.0 : slope;

            const double* in = li == 0 ? input : ws.heads[h][li - 1].post.data();
            const double* w = params + d.w_off;
            double* w_grad = grad + d.w_off;
            double* b_grad = grad + d.b_off;
            double* d_in = ws.d_b.data();
            std::fill(d_in, d_in + static_cast<std::size_t>(d.c_in) * d.in_len, 0.0);

            for (int co = 0; co < d.c_out; ++co) {
                const double* d_row = d_out + static_cast<std::size_t>(co) * d.out_len;
                for (int i = 0; i < d.out_len; ++i) b_grad[co] += d_row[i];
                for (int ci = 0; ci < d.c_in; ++ci) {
                    const double* in_row = in + static_cast<std::size_t>(ci) * d.in_len;
                    double* din_row = d_in + static_cast<std::size_t>(ci) * d.in_len;
                    const std::size_t w_base = (static_cast<std::size_t>(co) * d.c_in + ci) * d.kernel;
                    const double* w_row = w + w_base;
                    double* wg_row = w_grad + w_base;
                    for (int i = 0; i < d.out_len; ++i) {
                        const double g = d_row[i];
                        if (g == 0.0) continue;
                        const int base = i * d.stride - d.pad_left;
                        for (int j = 0; j < d.kernel; ++j) {
                            const int m = base + j;
                            if (m < 0 || m >= d.in_len) continue;
                            wg_row[j] += g * in_row[m];
                            din_row[m] += g * w_row[j];
                        }
                    }
                }
            }
            if (li > 0) {
                std::swap(ws.d_a, ws.d_b);
                d_out = ws.d_a.data();
            }
            // gradient w.r.t. the sample input itself is not needed
        }
    }
}

} // namespace

std::size_t param_count(const NetConfig& cfg) { return plan_net(cfg).n_params; }

std::pair<std::size_t, std::size_t> output_bias_indices(const NetConfig& cfg) {
    const NetPlan plan = plan_net(cfg);
    const FcDesc& out = plan.fc.back();
    return {out.b_off, out.b_off + 1};
}

ProbNet make_net(NetConfig cfg, uint64_t seed) {
    const NetPlan plan = plan_net(cfg);
    ProbNet net;
    net.config = std::move(cfg);
    net.params.assign(plan.n_params, 0.0);

    uint64_t layer_id = 0;
    auto init_layer = [&](std::size_t w_off, std::size_t w_count, int fan_in) {
        Rng rng(seed, ++layer_id);
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t i = 0; i < w_count; ++i)
            net.params[w_off + i] = rng.uniform(-bound, bound);
    };
    for (const auto& layers : plan.heads)
        for (const ConvDesc& d : layers)
            init_layer(d.w_off, static_cast<std::size_t>(d.kernel) * d.c_in * d.c_out,
                       d.kernel * d.c_in);
    for (const FcDesc& d : plan.fc)
        init_layer(d.w_off, static_cast<std::size_t>(d.in) * d.out, d.in);

    const FcDesc& out = plan.fc.back();
    net.params[out.b_off] = softplus_inv(0.5 - kOutputFloor);
    net.params[out.b_off + 1] = softplus_inv(1.5 - kOutputFloor);
    return net;
}

void forward(const ProbNet& net, std::span<const double> x, std::size_t n,
             std::vector<WeibullParams>& out) {
    const NetPlan plan = plan_net(net.config);
    if (net.params.size() != plan.n_params)
        throw std::invalid_argument("forward: parameter vector does not match config");
    const std::size_t W = static_cast<std::size_t>(net.config.window);
    if (x.size() != n * W) throw std::invalid_argument("forward: batch shape mismatch");
    out.resize(n);

    const double* params = net.params.data();
    parallel_for(n, [&](std::size_t lo, std::size_t hi) {
        Workspace ws(plan);
        double raw[2];
        for (std::size_t i = lo; i < hi; ++i) {
            forward_sample(plan, net.config, params, x.data() + i * W, ws, raw);
            out[i].scale = softplus(raw[0]) + kOutputFloor;
            out[i].shape = softplus(raw[1]) + kOutputFloor;
        }
    });
}

double nll_backward(const ProbNet& net, std::span<const double> x,
                    std::span<const double> targets, std::size_t n, std::vector<double>& grad) {
    const NetPlan plan = plan_net(net.config);
    if (net.params.size() != plan.n_params)
        throw std::invalid_argument("nll_backward: parameter vector does not match config");
    const std::size_t W = static_cast<std::size_t>(net.config.window);
    if (x.size() != n * W || targets.size() != n)
        throw std::invalid_argument("nll_backward: batch shape mismatch");
    if (n == 0) throw std::invalid_argument("nll_backward: empty batch");

    // Fixed chunking (independent of worker count) for a deterministic
    // reduction order.
    const std::size_t n_slots = std::clamp<std::size_t>((n + 255) / 256, 1, 32);
    const std::size_t per_slot = (n + n_slots - 1) / n_slots;
    std::vector<std::vector<double>> slot_grad(n_slots);
    std::vector<double> slot_loss(n_slots, 0.0);

    const double* params = net.params.data();
    parallel_for(n_slots, [&](std::size_t s_lo, std::size_t s_hi) {
        Workspace ws(plan);
        for (std::size_t s = s_lo; s < s_hi; ++s) {
            slot_grad[s].assign(plan.n_params, 0.0);
            const std::size_t lo = s * per_slot;
            const std::size_t hi = std::min(n, lo + per_slot);
            double raw[2];
            for (std::size_t i = lo; i < hi; ++i) {
                forward_sample(plan, net.config, params, x.data() + i * W, ws, raw);
                WeibullParams p{softplus(raw[0]) + kOutputFloor, softplus(raw[1]) + kOutputFloor};
                slot_loss[s] -= weibull::log_pdf(targets[i], p);
                const weibull::Grad g = weibull::nll_grad(targets[i], p);
                const double d_raw[2] = {g.d_scale * sigmoid(raw[0]), g.d_shape * sigmoid(raw[1])};
                backward_sample(plan, net.config, params, x.data() + i * W, ws, d_raw,
                                slot_grad[s].data());
            }
        }
    });

    grad.assign(plan.n_params, 0.0);
    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t s = 0; s < n_slots; ++s) {
        if (slot_grad[s].empty()) continue;
        loss += slot_loss[s];
        for (std::size_t i = 0; i < plan.n_params; ++i) grad[i] += slot_grad[s][i];
    }
    for (double& g : grad) g *= inv_n;
    return loss * inv_n;
}

void adam_step(AdamState& state, std::vector<double>& params, std::span<const double> grads,
               double lr, double beta1, double beta2, double eps) {
    if (state.m.size() != params.size() || grads.size() != params.size())
        throw std::invalid_argument("adam_step: dimension mismatch");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
}

// --- Model file -------------------------------------------------------------

namespace {

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<uint32_t>(v)); }

struct ModelReader {
    const uint8_t* p;
    std::size_t n, pos = 0;
    std::string path;
    uint32_t u32(const char* field) {
        if (pos + 4 > n) throw FormatError(path + ": truncated model while reading " + field);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64(const char* field) {
        if (pos + 8 > n) throw FormatError(path + ": truncated model while reading " + field);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    float f32(const char* field) { return std::bit_cast<float>(u32(field)); }
};

} // namespace

void save_model(const ProbNet& net, const std::string& path) {
    const NetPlan plan = plan_net(net.config);
    if (net.params.size() != plan.n_params)
        throw std::invalid_argument("save_model: parameter vector does not match config");
    std::string bytes;
    bytes += "USSM";
    put_u32(bytes, 1);
    put_u32(bytes, static_cast<uint32_t>(net.config.window));
    put_u32(bytes, static_cast<uint32_t>(net.config.head_kernels.size()));
    for (int k : net.config.head_kernels) put_u32(bytes, static_cast<uint32_t>(k));
    put_u32(bytes, static_cast<uint32_t>(net.config.channels.size()));
    for (int c : net.config.channels) put_u32(bytes, static_cast<uint32_t>(c));
    put_u32(bytes, static_cast<uint32_t>(net.config.fc_widths.size()));
    for (int w : net.config.fc_widths) put_u32(bytes, static_cast<uint32_t>(w));
    put_f32(bytes, static_cast<float>(net.config.leaky_slope));
    put_f32(bytes, static_cast<float>(net.norm_scale));
    put_u64(bytes, static_cast<uint64_t>(net.params.size()));
    for (double p : net.params) put_f32(bytes, static_cast<float>(p));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("save_model: cannot open " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("save_model: I/O failure writing " + path);
}

ProbNet load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_model: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "USSM", 4) != 0)
        throw FormatError(path + ": bad magic (expected USSM)");
    ModelReader r{reinterpret_cast<const uint8_t*>(bytes.data()) + 4, bytes.size() - 4, 0, path};
    const uint32_t version = r.u32("version");
    if (version != 1)
        throw FormatError(path + ": unsupported model version " + std::to_string(version));

    ProbNet net;
    net.config.window = static_cast<int>(r.u32("window"));
    net.config.head_kernels.resize(r.u32("n_heads"));
    for (int& k : net.config.head_kernels) k = static_cast<int>(r.u32("kernel"));
    net.config.channels.resize(r.u32("n_blocks"));
    for (int& c : net.config.channels) c = static_cast<int>(r.u32("channels"));
    net.config.fc_widths.resize(r.u32("n_fc"));
    for (int& w : net.config.fc_widths) w = static_cast<int>(r.u32("fc_width"));
    net.config.leaky_slope = r.f32("leaky_slope");
    net.norm_scale = r.f32("norm_scale");
    const uint64_t count = r.u64("param_count");

    const NetPlan plan = plan_net(net.config);
    if (count != plan.n_params)
        throw FormatError(path + ": parameter count " + std::to_string(count) +
                          " does not match the config's " + std::to_string(plan.n_params));
    if (r.n - r.pos != count * 4)
        throw FormatError(path + ": payload length does not match the declared count");
    net.params.resize(count);
    for (uint64_t i = 0; i < count; ++i) net.params[i] = r.f32("param");
    return net;
}

} // namespace usseg
