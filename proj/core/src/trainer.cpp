#include "usseg/trainer.hpp"

#include "usseg/parallel.hpp"
#include "usseg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace usseg {

std::size_t count_windows(std::size_t length, int window, int stride) {
    if (window < 1 || stride < 1) throw std::invalid_argument("count_windows: W, S must be >= 1");
    if (length <= static_cast<std::size_t>(window)) return 0;
    return (length - static_cast<std::size_t>(window) - 1) / static_cast<std::size_t>(stride) + 1;
}

void Dataset::gather(std::span<const std::size_t> idx, std::vector<double>& x,
                     std::vector<double>& y) const {
    const std::size_t W = static_cast<std::size_t>(window_);
    x.resize(idx.size() * W);
    y.resize(idx.size());
    const double inv = 1.0 / norm_scale_;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const SampleRef& r = refs_[idx[i]];
        const ScanVolume& vol = vols_[r.vol];
        for (std::size_t j = 0; j < W; ++j)
            x[i * W + j] = vol.at(r.offset + static_cast<uint32_t>(j), r.time, r.beam) * inv;
        y[i] = vol.at(r.offset + static_cast<uint32_t>(W), r.time, r.beam) * inv;
    }
}

Dataset build_dataset(const std::vector<const ScanVolume*>& vols, const SamplerConfig& cfg) {
    if (cfg.window < 2) throw std::invalid_argument("SamplerConfig: window must be >= 2");
    if (cfg.stride < 1) throw std::invalid_argument("SamplerConfig: stride must be >= 1");
    if (cfg.time_downsample < 1)
        throw std::invalid_argument("SamplerConfig: time_downsample must be >= 1");

    std::vector<ScanVolume> prepared;
    prepared.reserve(vols.size());
    for (const ScanVolume* vol : vols) {
        if (vol->kind() != VolumeKind::envelope)
            throw std::invalid_argument("build_dataset: volumes must be enveloped");
        prepared.push_back(downsample_time(*vol, static_cast<uint32_t>(cfg.time_downsample)));
    }

    double scale = cfg.norm_scale;
    if (scale <= 0.0) {
        scale = 0.0;
        for (const ScanVolume& vol : prepared)
            for (float v : vol.data()) scale = std::max(scale, static_cast<double>(v));
        if (scale <= 0.0) scale = 1.0;
    }

    std::vector<SampleRef> refs;
    for (std::size_t vi = 0; vi < prepared.size(); ++vi) {
        const ScanVolume& vol = prepared[vi];
        const std::size_t per_lane = count_windows(vol.n_frames(), cfg.window, cfg.stride);
        if (per_lane == 0) {
            std::fprintf(stderr,
                         "build_dataset: volume %zu has %u frames <= window %d, skipping\n", vi,
                         vol.n_frames(), cfg.window);
            continue;
        }
        for (uint32_t t = 0; t < vol.n_time(); ++t)
            for (uint32_t b = 0; b < vol.n_beams(); ++b)
                for (std::size_t w = 0; w < per_lane; ++w)
                    refs.push_back(SampleRef{static_cast<uint32_t>(vi), t, b,
                                             static_cast<uint32_t>(w * cfg.stride)});
    }
    return Dataset(std::move(prepared), cfg.window, scale, std::move(refs));
}

namespace {

double dataset_nll(const ProbNet& net, const Dataset& ds, std::size_t batch) {
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<double> x, y;
    std::vector<WeibullParams> params;
    double acc = 0.0;
    for (std::size_t lo = 0; lo < idx.size(); lo += batch) {
        const std::size_t hi = std::min(idx.size(), lo + batch);
        ds.gather(std::span(idx).subspan(lo, hi - lo), x, y);
        forward(net, x, hi - lo, params);
        for (std::size_t i = 0; i < params.size(); ++i)
            acc -= weibull::log_pdf(y[i], params[i]);
    }
    return acc / static_cast<double>(ds.size());
}

void seeded_shuffle(std::vector<std::size_t>& idx, uint64_t seed) {
    Rng rng(seed, 0x53484c46ULL);  // "SHLF"
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[rng.below(i)]);
}

} // namespace

double mean_log_likelihood(const ProbNet& net, const Dataset& ds) {
    if (ds.size() == 0) throw std::invalid_argument("mean_log_likelihood: empty dataset");
    return -dataset_nll(net, ds, 8192);
}

TrainResult train(ProbNet net, const std::vector<const ScanVolume*>& train_vols,
                  const ScanVolume& val_vol, const SamplerConfig& sampler,
                  const TrainConfig& cfg) {
    if (cfg.patience < 1) throw std::invalid_argument("TrainConfig: patience must be >= 1");
    if (cfg.batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");

    Dataset train_ds = build_dataset(train_vols, sampler);
    if (train_ds.size() == 0) throw std::invalid_argument("train: empty training set");
    net.norm_scale = train_ds.norm_scale();

    SamplerConfig val_sampler = sampler;
    val_sampler.stride = cfg.validation_stride;
    val_sampler.norm_scale = train_ds.norm_scale();
    Dataset val_ds = build_dataset({&val_vol}, val_sampler);
    if (val_ds.size() == 0) throw std::invalid_argument("train: empty validation set");

    TrainResult result{net, {}, std::numeric_limits<double>::infinity(), 0};
    AdamState adam(net.params.size());
    std::vector<std::size_t> order(train_ds.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> x, y, grad;

    int since_best = 0;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        seeded_shuffle(order, mix_seed(cfg.seed, static_cast<uint64_t>(epoch)));
        double train_acc = 0.0;
        std::size_t seen = 0;
        for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
            const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
            train_ds.gather(std::span(order).subspan(lo, hi - lo), x, y);
            const double loss = nll_backward(net, x, y, hi - lo, grad);
            adam_step(adam, net.params, grad, cfg.learning_rate);
            train_acc += loss * static_cast<double>(hi - lo);
            seen += hi - lo;
        }
        const double train_nll = train_acc / static_cast<double>(seen);
        const double val_nll = dataset_nll(net, val_ds, 8192);
        result.history.push_back(EpochStats{train_nll, val_nll});

        if (val_nll < result.best_val_nll) {
            result.best_val_nll = val_nll;
            result.best_epoch = epoch;
            result.model = net;
            since_best = 0;
        } else {
            ++since_best;
            if (since_best >= cfg.patience) break;
        }
    }
    if (result.best_epoch == 0) result.model = net;  // all-epoch NLL was non-finite
    return result;
}

std::vector<StrideRow> stride_study(const NetConfig& net_cfg,
                                    const std::vector<const ScanVolume*>& train_vols,
                                    const ScanVolume& val_vol, const ScanVolume& test_vol,
                                    const SamplerConfig& sampler, const TrainConfig& cfg,
                                    const std::vector<int>& strides, int repeats) {
    if (repeats < 1) throw std::invalid_argument("stride_study: repeats must be >= 1");
    std::vector<StrideRow> rows;
    for (int stride : strides) {
        SamplerConfig s = sampler;
        s.stride = stride;
        std::vector<double> lls;
        std::size_t dataset_size = 0;
        for (int r = 0; r < repeats; ++r) {
            TrainConfig run_cfg = cfg;
            run_cfg.seed = mix_seed(cfg.seed, static_cast<uint64_t>(r) + 1);
            ProbNet net = make_net(net_cfg, run_cfg.seed);
            TrainResult result = train(std::move(net), train_vols, val_vol, s, run_cfg);

            SamplerConfig test_sampler = sampler;
            test_sampler.stride = cfg.test_stride;
            test_sampler.norm_scale = result.model.norm_scale;
            Dataset test_ds = build_dataset({&test_vol}, test_sampler);
            lls.push_back(mean_log_likelihood(result.model, test_ds));
            if (r == 0) {
                Dataset train_ds = build_dataset(train_vols, s);
                dataset_size = train_ds.size();
            }
        }
        double mean = 0.0;
        for (double v : lls) mean += v;
        mean /= static_cast<double>(lls.size());
        double var = 0.0;
        for (double v : lls) var += (v - mean) * (v - mean);
        const double stddev = lls.size() > 1 ? std::sqrt(var / static_cast<double>(lls.size() - 1)) : 0.0;
        rows.push_back(StrideRow{stride, dataset_size, mean, stddev});
    }
    return rows;
}

void write_history_csv(const std::vector<EpochStats>& history, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("write_history_csv: cannot open " + path);
    out << "epoch,train_nll,val_nll\n";
    char line[128];
    for (std::size_t i = 0; i < history.size(); ++i) {
        std::snprintf(line, sizeof line, "%zu,%.10g,%.10g\n", i + 1, history[i].train_nll,
                      history[i].val_nll);
        out << line;
    }
}

void write_stride_csv(const std::vector<StrideRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("write_stride_csv: cannot open " + path);
    out << "stride,dataset_size,mean_test_log_likelihood,std_test_log_likelihood\n";
    char line[160];
    for (const StrideRow& r : rows) {
        std::snprintf(line, sizeof line, "%d,%zu,%.10g,%.10g\n", r.stride, r.dataset_size,
                      r.mean_test_ll, r.std_test_ll);
        out << line;
    }
}

} // namespace usseg
