#pragma once

#include "usseg/net.hpp"
#include "usseg/volume.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace usseg {

// Window sampling along scan-axis lanes of enveloped volumes.
struct SamplerConfig {
    int window = 64;
    int stride = 64;
    int time_downsample = 5;
    // Amplitude mapped to 1.0; 0 means "use the corpus maximum".
    double norm_scale = 0.0;
};

struct TrainConfig {
    std::size_t batch_size = 65536;
    double learning_rate = 1e-6;
    int patience = 3;
    int max_epochs = 50;
    uint64_t seed = 0;
    int validation_stride = 64;
    int test_stride = 1;
};

// Number of windows a lane of length L yields: offsets 0, S, 2S, ... with
// the target sample at offset+W required to exist.
std::size_t count_windows(std::size_t length, int window, int stride);

// One (window, next value) training pair, addressed into the corpus.
struct SampleRef {
    uint32_t vol;
    uint32_t time;
    uint32_t beam;
    uint32_t offset;
};

// Materialized sampling of a corpus: normalized window/target pairs are
// gathered on demand. Enumeration order is (volume, time, beam, offset).
class Dataset {
public:
    Dataset(std::vector<ScanVolume> vols, int window, double norm_scale,
            std::vector<SampleRef> refs)
        : vols_(std::move(vols)), window_(window), norm_scale_(norm_scale),
          refs_(std::move(refs)) {}

    std::size_t size() const { return refs_.size(); }
    int window() const { return window_; }
    double norm_scale() const { return norm_scale_; }
    const std::vector<SampleRef>& refs() const { return refs_; }
    const ScanVolume& volume(std::size_t i) const { return vols_[i]; }

    // Fills x (n rows of `window` values) and y (n targets), normalized.
    void gather(std::span<const std::size_t> idx, std::vector<double>& x,
                std::vector<double>& y) const;

private:
    std::vector<ScanVolume> vols_;  // time-downsampled envelope volumes
    int window_;
    double norm_scale_;
    std::vector<SampleRef> refs_;
};

// Applies the time downsample, computes (or adopts) the normalization scale
// and enumerates every lane's windows at the configured stride. Volumes must
// be enveloped; a volume with too few frames contributes zero samples.
Dataset build_dataset(const std::vector<const ScanVolume*>& vols, const SamplerConfig& cfg);

struct EpochStats {
    double train_nll;
    double val_nll;
};

struct TrainResult {
    ProbNet model;
    std::vector<EpochStats> history;
    double best_val_nll;
    int best_epoch;  // 1-based
};

// Seeded mini-batch training with early stopping on validation NLL. The
// returned model is the best-validation snapshot and carries the training
// normalization scale.
TrainResult train(ProbNet net, const std::vector<const ScanVolume*>& train_vols,
                  const ScanVolume& val_vol, const SamplerConfig& sampler, const TrainConfig& cfg);

// Mean per-sample log-likelihood of a dataset under the model.
double mean_log_likelihood(const ProbNet& net, const Dataset& ds);

struct StrideRow {
    int stride;
    std::size_t dataset_size;
    double mean_test_ll;
    double std_test_ll;
};

// Trains `repeats` fresh models per stride and scores each on a stride-1
// (configurable) test set; reports mean and std of the test log-likelihood.
std::vector<StrideRow> stride_study(const NetConfig& net_cfg,
                                    const std::vector<const ScanVolume*>& train_vols,
                                    const ScanVolume& val_vol, const ScanVolume& test_vol,
                                    const SamplerConfig& sampler, const TrainConfig& cfg,
                                    const std::vector<int>& strides, int repeats);

// CSV emitters. history: epoch,train_nll,val_nll
// stride study: stride,dataset_size,mean_test_log_likelihood,std_test_log_likelihood
void write_history_csv(const std::vector<EpochStats>& history, const std::string& path);
void write_stride_csv(const std::vector<StrideRow>& rows, const std::string& path);

} // namespace usseg
