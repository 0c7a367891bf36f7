#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "pgnas/errors.hpp"
#include "pgnas/rng.hpp"
#include "pgnas/search_space.hpp"
#include "pgnas/serialize.hpp"
#include "pgnas/supernet.hpp"
#include "pgnas/tensor.hpp"

namespace pgnas {

struct Batch {
    Tensor x;                 // [B x ...example shape]
    std::vector<int> labels;  // class indices
};

// Immutable after construction; splits are disjoint by example id.
struct Dataset {
    std::vector<int> example_shape;  // shape of one example, e.g. {C,H,W} or {I}
    std::vector<double> values;      // examples back to back
    std::vector<int> labels;
    std::string split_tag = "train";  // train | val | test
    std::string provenance;

    int size() const { return static_cast<int>(labels.size()); }

    size_t example_numel() const {
        size_t n = 1;
        for (int d : example_shape) n *= static_cast<size_t>(d);
        return n;
    }

    void validate(int num_classes) const {
        for (int y : labels) {
            if (y < 0 || y >= num_classes) {
                throw DataError("label " + std::to_string(y) + " out of range for " +
                                std::to_string(num_classes) + " classes");
            }
        }
        if (values.size() != example_numel() * labels.size()) {
            throw DataError("dataset value buffer does not match example count");
        }
    }

    Batch gather(const std::vector<int>& ids) const {
        const size_t n = example_numel();
        std::vector<int> shape;
        shape.push_back(static_cast<int>(ids.size()));
        shape.insert(shape.end(), example_shape.begin(), example_shape.end());
        Batch b;
        b.x = Tensor(std::move(shape));
        b.labels.reserve(ids.size());
        for (size_t i = 0; i < ids.size(); ++i) {
            const size_t src = static_cast<size_t>(ids[i]) * n;
            std::copy(values.begin() + static_cast<ptrdiff_t>(src),
                      values.begin() + static_cast<ptrdiff_t>(src + n), b.x.data() + i * n);
            b.labels.push_back(labels[static_cast<size_t>(ids[i])]);
        }
        return b;
    }

    Batch all() const {
        std::vector<int> ids(static_cast<size_t>(size()));
        std::iota(ids.begin(), ids.end(), 0);
        return gather(ids);
    }
};

namespace data {

// ---- CSV: one example per row, input values then the label ------------------

struct CsvSchema {
    bool has_header = false;
    std::vector<int> input_shape;  // optional reshape; empty keeps flat {I}
};

inline Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {}) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open CSV '" + path.string() + "'");
    Dataset ds;
    ds.provenance = path.string();
    std::string line;
    size_t width = 0;
    bool first = true;
    size_t row_no = 0;
    while (std::getline(is, line)) {
        ++row_no;
        if (line.empty()) continue;
        if (first && schema.has_header) {
            first = false;
            continue;
        }
        first = false;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(text_to_double(cell));
        if (row.size() < 2) {
            throw DataError("CSV row " + std::to_string(row_no) + " needs input columns plus a label");
        }
        if (width == 0) {
            width = row.size();
        } else if (row.size() != width) {
            throw DataError("CSV row " + std::to_string(row_no) + " has " +
                            std::to_string(row.size()) + " columns, expected " + std::to_string(width));
        }
        const double label = row.back();
        if (label != std::floor(label) || label < 0) {
            throw DataError("CSV row " + std::to_string(row_no) + ": label must be a non-negative integer");
        }
        ds.labels.push_back(static_cast<int>(label));
        ds.values.insert(ds.values.end(), row.begin(), row.end() - 1);
    }
    if (ds.labels.empty()) throw DataError("CSV '" + path.string() + "' holds no examples");
    const int flat = static_cast<int>(width - 1);
    if (schema.input_shape.empty()) {
        ds.example_shape = {flat};
    } else {
        size_t n = 1;
        for (int d : schema.input_shape) n *= static_cast<size_t>(d);
        if (n != static_cast<size_t>(flat)) {
            throw DataError("CSV input width " + std::to_string(flat) + " does not match shape " +
                            Tensor::shape_text(schema.input_shape));
        }
        ds.example_shape = schema.input_shape;
    }
    return ds;
}

inline void write_csv(const std::filesystem::path& path, const Dataset& ds) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
    const size_t n = ds.example_numel();
    for (int i = 0; i < ds.size(); ++i) {
        for (size_t j = 0; j < n; ++j) {
            os << double_to_text(ds.values[static_cast<size_t>(i) * n + j]) << ",";
        }
        os << ds.labels[static_cast<size_t>(i)] << "\n";
    }
    if (!os) throw DataError("write failed for '" + path.string() + "'");
}

// ---- IDX: big-endian magic-prefixed binary, u8 payload ----------------------

inline std::vector<uint8_t> read_all_bytes(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open '" + path.string() + "'");
    return std::vector<uint8_t>((std::istreambuf_iterator<char>(is)),
                                std::istreambuf_iterator<char>());
}

inline uint32_t be32(const std::vector<uint8_t>& b, size_t off) {
    return (static_cast<uint32_t>(b[off]) << 24) | (static_cast<uint32_t>(b[off + 1]) << 16) |
           (static_cast<uint32_t>(b[off + 2]) << 8) | static_cast<uint32_t>(b[off + 3]);
}

// Images: magic 0x00000803, dims [count, rows, cols]; labels: magic
// 0x00000801, dims [count]. Pixels are u8 scaled to [0,1]; examples come out
// shaped {1, rows, cols}.
inline Dataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path) {
    const auto img = read_all_bytes(images_path);
    if (img.size() < 16) throw DataError("IDX image file: malformed header");
    if (be32(img, 0) != 0x00000803u) throw DataError("IDX image file: bad magic");
    const uint32_t count = be32(img, 4), rows = be32(img, 8), cols = be32(img, 12);
    if (rows == 0 || cols == 0) throw DataError("IDX image file: zero spatial dimension");
    const size_t need = 16 + static_cast<size_t>(count) * rows * cols;
    if (img.size() != need) throw DataError("IDX image file: truncated payload");

    const auto lab = read_all_bytes(labels_path);
    if (lab.size() < 8) throw DataError("IDX label file: malformed header");
    if (be32(lab, 0) != 0x00000801u) throw DataError("IDX label file: bad magic");
    if (be32(lab, 4) != count) {
        throw DataError("IDX label count " + std::to_string(be32(lab, 4)) +
                        " does not match image count " + std::to_string(count));
    }
    if (lab.size() != 8 + static_cast<size_t>(count)) throw DataError("IDX label file: truncated payload");

    Dataset ds;
    ds.provenance = images_path.string() + "+" + labels_path.string();
    ds.example_shape = {1, static_cast<int>(rows), static_cast<int>(cols)};
    ds.values.resize(static_cast<size_t>(count) * rows * cols);
    for (size_t i = 0; i < ds.values.size(); ++i) ds.values[i] = img[16 + i] / 255.0;
    ds.labels.resize(count);
    for (uint32_t i = 0; i < count; ++i) ds.labels[i] = lab[8 + i];
    return ds;
}

// ---- splitting ----------------------------------------------------------------

struct SplitFractions {
    double train = 0.8, val = 0.1, test = 0.1;
};

// Deterministic shuffled partition; sizes match the fractions within one.
inline std::array<Dataset, 3> split(const Dataset& ds, const SplitFractions& f, uint64_t seed) {
    const double sum = f.train + f.val + f.test;
    if (std::fabs(sum - 1.0) > 1e-9) {
        throw DataError("split fractions must sum to 1, got " + double_to_text(sum));
    }
    const int n = ds.size();
    std::vector<int> ids(static_cast<size_t>(n));
    std::iota(ids.begin(), ids.end(), 0);
    CounterRng rng(seed, "split/shuffle");
    for (int i = n - 1; i > 0; --i) {  // Fisher-Yates on the counter stream
        const int j = static_cast<int>(rng.bits() % static_cast<uint64_t>(i + 1));
        std::swap(ids[static_cast<size_t>(i)], ids[static_cast<size_t>(j)]);
    }
    const int n_train = static_cast<int>(std::floor(f.train * n + 0.5));
    const int n_val = static_cast<int>(std::floor(f.val * n + 0.5));
    const int n_train_c = std::min(n_train, n);
    const int n_val_c = std::min(n_val, n - n_train_c);

    auto take = [&](int begin, int count, const char* tag) {
        Dataset out;
        out.example_shape = ds.example_shape;
        out.split_tag = tag;
        out.provenance = ds.provenance;
        const size_t m = ds.example_numel();
        for (int i = begin; i < begin + count; ++i) {
            const size_t src = static_cast<size_t>(ids[static_cast<size_t>(i)]) * m;
            out.values.insert(out.values.end(), ds.values.begin() + static_cast<ptrdiff_t>(src),
                              ds.values.begin() + static_cast<ptrdiff_t>(src + m));
            out.labels.push_back(ds.labels[static_cast<size_t>(ids[static_cast<size_t>(i)])]);
        }
        return out;
    };
    return {take(0, n_train_c, "train"), take(n_train_c, n_val_c, "val"),
            take(n_train_c + n_val_c, n - n_train_c - n_val_c, "test")};
}

// ---- planted-subnetwork benchmark -------------------------------------------

// Labels come from a hidden teacher: the planted architecture pruned out of a
// freshly initialized super-network. Inputs are standard normal, so the
// architecture, not the data, carries all the signal.
struct PlantedSpec {
    SearchSpaceSpec space;
    Architecture planted;
    uint64_t teacher_seed = 1;
    double noise = 0.0;  // probability a label is replaced by a different class
    int count = 0;
    double teacher_weight_scale = 1.0;
    int max_regenerations = 16;  // retries when a teacher labels everything alike

    void validate() const {
        space.validate();
        if (static_cast<int>(planted.active.size()) != space.total_slices()) {
            throw ConfigError("planted architecture does not match the search space");
        }
        if (!planted.feeds_head(space)) {
            throw ConfigError("planted architecture does not reach the classifier head");
        }
        if (noise < 0.0 || noise >= 1.0) throw ConfigError("label noise must lie in [0,1)");
        if (count < 1) throw ConfigError("planted dataset needs a positive example count");
    }
};

inline Dataset generate_planted(const PlantedSpec& ps) {
    ps.validate();
    const int c_in = ps.space.input_shape[0];
    const int h = ps.space.input_shape[1];
    const int w = ps.space.input_shape[2];
    const size_t n = static_cast<size_t>(c_in) * h * w;

    for (int attempt = 0; attempt <= ps.max_regenerations; ++attempt) {
        const uint64_t seed = ps.teacher_seed + static_cast<uint64_t>(attempt);
        InitConfig init;
        init.weight_scale = ps.teacher_weight_scale;
        SuperNet teacher_net = SuperNet::build(ps.space, seed, init);
        PrunedNet teacher = prune(teacher_net, ps.planted);

        Dataset ds;
        ds.provenance = "planted(seed=" + std::to_string(seed) + ")";
        ds.example_shape = {c_in, h, w};
        ds.values.resize(n * static_cast<size_t>(ps.count));
        CounterRng in_rng(seed, "planted/input");
        for (double& v : ds.values) v = in_rng.normal();

        ds.labels.resize(static_cast<size_t>(ps.count));
        const int chunk = 256;
        for (int start = 0; start < ps.count; start += chunk) {
            const int m = std::min(chunk, ps.count - start);
            Tensor xb({m, c_in, h, w});
            std::copy(ds.values.begin() + static_cast<ptrdiff_t>(static_cast<size_t>(start) * n),
                      ds.values.begin() + static_cast<ptrdiff_t>(static_cast<size_t>(start + m) * n),
                      xb.data());
            Tensor logits = teacher.forward(xb);
            for (int i = 0; i < m; ++i) {
                int best = 0;
                for (int j = 1; j < ps.space.num_classes; ++j) {
                    if (logits.at(i, j) > logits.at(i, best)) best = j;
                }
                ds.labels[static_cast<size_t>(start + i)] = best;
            }
        }

        bool degenerate = true;
        for (int y : ds.labels) {
            if (y != ds.labels[0]) {
                degenerate = false;
                break;
            }
        }
        if (degenerate) continue;

        if (ps.noise > 0.0) {
            CounterRng noise_rng(seed, "planted/label-noise");
            for (int& y : ds.labels) {
                if (noise_rng.uniform() < ps.noise) {
                    // uniform over the other classes, so the flip rate is exactly `noise`
                    int shift = 1 + static_cast<int>(noise_rng.bits() %
                                                     static_cast<uint64_t>(ps.space.num_classes - 1));
                    y = (y + shift) % ps.space.num_classes;
                }
            }
        }
        return ds;
    }
    throw DataError("planted dataset generation: teacher stayed degenerate after " +
                    std::to_string(ps.max_regenerations + 1) + " seeds");
}

}  // namespace data

}  // namespace pgnas
