#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dncc/tensor.hpp"

namespace dncc {

struct Dataset {
    std::vector<double> features;  // row-major {size(), dim}
    std::size_t dim = 0;
    std::vector<int> labels;
    std::size_t num_classes = 0;

    std::size_t size() const { return labels.size(); }
    // Throws ContractError unless labels lie in [0, K), N >= 1, features
    // are finite and the matrix is rectangular.
    void validate() const;

    Tensor batch_features(std::span<const std::size_t> rows) const;
    std::vector<int> batch_labels(std::span<const std::size_t> rows) const;
    Tensor all_features() const;
    Dataset subset(std::span<const std::size_t> rows) const;
    // FNV-1a over shape, features and labels.
    std::uint64_t fingerprint() const;
};

// MNIST-style IDX pair: images magic 0x00000803, labels magic 0x00000801,
// big-endian counts. Pixels are scaled by 1/255 and flattened row-major.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);
// Writes features * 255 rounded to unsigned bytes. rows * cols must equal dim.
void write_idx(const Dataset& ds, std::size_t rows, std::size_t cols, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path);

// Numeric CSV with a header; every column except `label_column` is a feature.
Dataset load_csv(const std::filesystem::path& path, const std::string& label_column);
void write_csv(const Dataset& ds, const std::filesystem::path& path, const std::string& label_column);

// K Gaussian clusters around random unit-norm centers scaled by 3, isotropic
// standard deviation `spread`. Rows are grouped by class.
Dataset synth_blobs(std::uint64_t seed, std::size_t num_classes, std::size_t per_class_n, std::size_t dim,
                    double spread);

struct Split {
    Dataset train;
    Dataset val;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> val_indices;
    // False when some class had fewer than 5 samples and the split fell back
    // to an unstratified shuffle.
    bool stratified = true;
};

// Partition into train:val = train_parts:val_parts. The validation size is
// floor(N * val_parts / (train_parts + val_parts)), at least 1; classes get
// their share by largest remainder.
Split train_val_split(const Dataset& ds, std::size_t train_parts, std::size_t val_parts, std::uint64_t seed);

// Per-epoch minibatches. The order for an epoch is a pure function of
// (seed, epoch); the last batch may be short.
class BatchIterator {
public:
    BatchIterator(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed);

    std::vector<std::size_t> order(int epoch) const;
    std::vector<std::vector<std::size_t>> batches(int epoch) const;
    // Batches of the current epoch, then advances the counter.
    std::vector<std::vector<std::size_t>> next_epoch();

    int epoch() const { return epoch_; }
    void set_epoch(int epoch) { epoch_ = epoch; }
    std::size_t batch_size() const { return batch_size_; }

private:
    std::size_t size_;
    std::size_t batch_size_;
    std::uint64_t seed_;
    int epoch_ = 0;
};

}  // namespace dncc
