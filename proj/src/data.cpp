#include "dncc/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <random>
#include <sstream>

#include "dncc/error.hpp"
#include "dncc/text.hpp"

namespace dncc {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset, const std::string& what) {
    if (offset + 4 > buf.size()) throw FormatError(what + ": truncated header", buf.size() < offset ? 0 : offset);
    return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
           (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::mt19937_64 seeded(std::uint64_t seed, std::uint64_t key) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)};
    return std::mt19937_64(seq);
}

std::size_t infer_classes(const std::vector<int>& labels) {
    int mx = 0;
    for (int l : labels) mx = std::max(mx, l);
    return static_cast<std::size_t>(mx) + 1;
}

}  // namespace

void Dataset::validate() const {
    if (labels.empty()) throw ContractError("dataset is empty");
    if (features.size() != labels.size() * dim) {
        throw ContractError("feature matrix has " + std::to_string(features.size()) + " values for " +
                            std::to_string(labels.size()) + " rows of width " + std::to_string(dim));
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
            throw ContractError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                                " outside [0, " + std::to_string(num_classes) + ")");
        }
    }
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (!std::isfinite(features[i])) {
            throw ContractError("non-finite feature at row " + std::to_string(i / dim));
        }
    }
}

Tensor Dataset::batch_features(std::span<const std::size_t> rows) const {
    std::vector<double> out(rows.size() * dim);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        std::copy_n(&features[rows[r] * dim], dim, &out[r * dim]);
    }
    return Tensor::from({rows.size(), dim}, std::move(out));
}

std::vector<int> Dataset::batch_labels(std::span<const std::size_t> rows) const {
    std::vector<int> out(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) out[r] = labels[rows[r]];
    return out;
}

Tensor Dataset::all_features() const { return Tensor::from({size(), dim}, features); }

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.dim = dim;
    out.num_classes = num_classes;
    out.features.resize(rows.size() * dim);
    out.labels.resize(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        std::copy_n(&features[rows[r] * dim], dim, &out.features[r * dim]);
        out.labels[r] = labels[rows[r]];
    }
    return out;
}

std::uint64_t Dataset::fingerprint() const {
    auto bytes_of = [](const auto& v) {
        return std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(v.data()),
                                              v.size() * sizeof(v[0]));
    };
    const std::uint64_t header[3] = {size(), dim, num_classes};
    std::uint64_t h = fnv1a(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(header),
                                                           sizeof(header)));
    h = fnv1a(bytes_of(features), h);
    return fnv1a(bytes_of(labels), h);
}

// ---- IDX ---------------------------------------------------------------------

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
    const auto img = read_bytes(images_path);
    const auto lab = read_bytes(labels_path);
    if (img.empty()) throw FormatError("images file is empty", 0);
    if (lab.empty()) throw FormatError("labels file is empty", 0);

    const std::uint32_t img_magic = read_be32(img, 0, "images");
    if (img_magic != kIdxImagesMagic) throw FormatError("images file has bad magic", 0);
    const std::uint32_t lab_magic = read_be32(lab, 0, "labels");
    if (lab_magic != kIdxLabelsMagic) throw FormatError("labels file has bad magic", 0);

    const std::size_t count = read_be32(img, 4, "images");
    const std::size_t rows = read_be32(img, 8, "images");
    const std::size_t cols = read_be32(img, 12, "images");
    const std::size_t label_count = read_be32(lab, 4, "labels");
    if (count == 0 || rows == 0 || cols == 0) throw FormatError("images file declares an empty set", 4);
    if (label_count != count) {
        throw FormatError("labels file holds " + std::to_string(label_count) + " labels for " +
                              std::to_string(count) + " images",
                          4);
    }
    const std::size_t dim = rows * cols;
    if (img.size() < 16 + count * dim) throw FormatError("images file truncated", img.size());
    if (lab.size() < 8 + count) throw FormatError("labels file truncated", lab.size());

    Dataset ds;
    ds.dim = dim;
    ds.features.resize(count * dim);
    for (std::size_t i = 0; i < count * dim; ++i) ds.features[i] = static_cast<double>(img[16 + i]) / 255.0;
    ds.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) ds.labels[i] = lab[8 + i];
    ds.num_classes = infer_classes(ds.labels);
    return ds;
}

void write_idx(const Dataset& ds, std::size_t rows, std::size_t cols, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path) {
    if (rows * cols != ds.dim) throw ContractError("write_idx: rows * cols must equal dataset dim");
    std::ofstream img(images_path, std::ios::binary | std::ios::trunc);
    std::ofstream lab(labels_path, std::ios::binary | std::ios::trunc);
    if (!img || !lab) throw Error("write_idx: cannot open output files");
    write_be32(img, kIdxImagesMagic);
    write_be32(img, static_cast<std::uint32_t>(ds.size()));
    write_be32(img, static_cast<std::uint32_t>(rows));
    write_be32(img, static_cast<std::uint32_t>(cols));
    for (double v : ds.features) {
        const double clamped = std::clamp(v, 0.0, 1.0);
        img.put(static_cast<char>(static_cast<unsigned char>(std::lround(clamped * 255.0))));
    }
    write_be32(lab, kIdxLabelsMagic);
    write_be32(lab, static_cast<std::uint32_t>(ds.size()));
    for (int l : ds.labels) lab.put(static_cast<char>(static_cast<unsigned char>(l)));
}

// ---- CSV ---------------------------------------------------------------------

Dataset load_csv(const std::filesystem::path& path, const std::string& label_column) {
    const std::string text = read_file(path.string());
    const auto lines = split_lines(text);
    if (lines.empty()) throw FormatError("CSV file has no header", 1);
    const auto header = split(lines[0], ',');
    std::size_t label_idx = header.size();
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (trim(header[c]) == label_column) label_idx = c;
    }
    if (label_idx == header.size()) {
        throw ConfigError("label column '" + label_column + "' not found in " + path.string());
    }
    Dataset ds;
    ds.dim = header.size() - 1;
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
        if (trim(lines[ln]).empty()) continue;
        const auto cells = split(lines[ln], ',');
        if (cells.size() != header.size()) {
            throw FormatError("expected " + std::to_string(header.size()) + " cells, found " +
                                  std::to_string(cells.size()),
                              ln + 1);
        }
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (c == label_idx) {
                const long long v = parse_int(cells[c], ln + 1);
                if (v < 0 || v > 1'000'000) throw FormatError("label out of range", ln + 1);
                ds.labels.push_back(static_cast<int>(v));
            } else {
                ds.features.push_back(parse_double(cells[c], ln + 1));
            }
        }
    }
    if (ds.labels.empty()) throw FormatError("CSV file has no data rows", 2);
    ds.num_classes = infer_classes(ds.labels);
    return ds;
}

void write_csv(const Dataset& ds, const std::filesystem::path& path, const std::string& label_column) {
    std::ostringstream out;
    for (std::size_t c = 0; c < ds.dim; ++c) out << 'x' << c << ',';
    out << label_column << '\n';
    for (std::size_t r = 0; r < ds.size(); ++r) {
        for (std::size_t c = 0; c < ds.dim; ++c) out << format_double(ds.features[r * ds.dim + c]) << ',';
        out << ds.labels[r] << '\n';
    }
    write_file(path.string(), out.str());
}

// ---- synthetic -----------------------------------------------------------------

Dataset synth_blobs(std::uint64_t seed, std::size_t num_classes, std::size_t per_class_n, std::size_t dim,
                    double spread) {
    if (num_classes < 2) throw ConfigError("synth_blobs needs at least 2 classes");
    if (dim < 2) throw ConfigError("synth_blobs needs at least 2 dimensions");
    if (per_class_n == 0) throw ConfigError("synth_blobs needs at least one sample per class");
    auto rng = seeded(seed, 0x626c6f6273ull);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<double> centers(num_classes * dim);
    for (std::size_t k = 0; k < num_classes; ++k) {
        double norm = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            const double v = normal(rng);
            centers[k * dim + j] = v;
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (std::size_t j = 0; j < dim; ++j) centers[k * dim + j] *= 3.0 / norm;
    }
    Dataset ds;
    ds.dim = dim;
    ds.num_classes = num_classes;
    ds.features.reserve(num_classes * per_class_n * dim);
    for (std::size_t k = 0; k < num_classes; ++k) {
        for (std::size_t i = 0; i < per_class_n; ++i) {
            for (std::size_t j = 0; j < dim; ++j) ds.features.push_back(centers[k * dim + j] + spread * normal(rng));
            ds.labels.push_back(static_cast<int>(k));
        }
    }
    return ds;
}

// ---- splitting -------------------------------------------------------------------

Split train_val_split(const Dataset& ds, std::size_t train_parts, std::size_t val_parts, std::uint64_t seed) {
    const std::size_t n = ds.size();
    const std::size_t parts = train_parts + val_parts;
    if (train_parts == 0 || val_parts == 0) throw ConfigError("split ratio parts must be positive");
    if (n < parts) {
        throw ContractError("dataset of " + std::to_string(n) + " rows too small for a " +
                            std::to_string(train_parts) + ":" + std::to_string(val_parts) + " split");
    }
    const std::size_t val_total = std::max<std::size_t>(1, n * val_parts / parts);
    auto rng = seeded(seed, 0x73706c6974ull);

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < n; ++i) by_class[ds.labels[i]].push_back(i);
    bool stratified = true;
    for (const auto& [cls, idx] : by_class) {
        if (idx.size() < parts) stratified = false;
    }

    Split out;
    out.stratified = stratified;
    std::vector<char> is_val(n, 0);
    if (stratified) {
        // Largest-remainder allocation of val_total across classes.
        std::vector<std::pair<int, std::size_t>> quota;
        std::vector<std::pair<double, int>> remainders;
        std::size_t assigned = 0;
        for (const auto& [cls, idx] : by_class) {
            const double exact = static_cast<double>(idx.size()) * static_cast<double>(val_total) /
                                 static_cast<double>(n);
            const auto base = static_cast<std::size_t>(std::floor(exact));
            quota.emplace_back(cls, base);
            remainders.emplace_back(exact - static_cast<double>(base), cls);
            assigned += base;
        }
        std::stable_sort(remainders.begin(), remainders.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::size_t r = 0; assigned < val_total && r < remainders.size(); ++r, ++assigned) {
            for (auto& q : quota) {
                if (q.first == remainders[r].second) ++q.second;
            }
        }
        for (const auto& [cls, count] : quota) {
            std::vector<std::size_t> idx = by_class[cls];
            std::shuffle(idx.begin(), idx.end(), rng);
            for (std::size_t i = 0; i < count; ++i) is_val[idx[i]] = 1;
        }
    } else {
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t i = 0; i < val_total; ++i) is_val[idx[i]] = 1;
    }
    for (std::size_t i = 0; i < n; ++i) (is_val[i] ? out.val_indices : out.train_indices).push_back(i);
    out.train = ds.subset(out.train_indices);
    out.val = ds.subset(out.val_indices);
    return out;
}

// ---- batching --------------------------------------------------------------------

BatchIterator::BatchIterator(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed)
    : size_(dataset_size), batch_size_(batch_size), seed_(seed) {
    if (batch_size == 0) throw ConfigError("batch size must be positive");
}

std::vector<std::size_t> BatchIterator::order(int epoch) const {
    std::vector<std::size_t> idx(size_);
    for (std::size_t i = 0; i < size_; ++i) idx[i] = i;
    auto rng = seeded(seed_, 0x100000000ull + static_cast<std::uint64_t>(epoch));
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
}

std::vector<std::vector<std::size_t>> BatchIterator::batches(int epoch) const {
    const auto idx = order(epoch);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < idx.size(); start += batch_size_) {
        const std::size_t end = std::min(idx.size(), start + batch_size_);
        out.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(start),
                         idx.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

std::vector<std::vector<std::size_t>> BatchIterator::next_epoch() { return batches(epoch_++); }

}  // namespace dncc
