#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "enfed/dataset.hpp"
#include "enfed/errors.hpp"
#include "enfed/rng.hpp"

namespace enfed {

// Calorie-burn class from the value's range: <0.5, 0.5-1, 1-2, 2-3, >=3.
// Boundary values go to the upper bin.
inline int bin_calories(double v) {
    if (!std::isfinite(v) || v < 0.0)
        throw std::invalid_argument("bin_calories: value must be finite and non-negative");
    if (v < 0.5) return 0;
    if (v < 1.0) return 1;
    if (v < 2.0) return 2;
    if (v < 3.0) return 3;
    return 4;
}

enum class LabelMode { CalorieBin, DirectClass };

struct CsvSchema {
    std::string name;
    std::string label_column;
    LabelMode mode = LabelMode::DirectClass;
    int class_count = 0;  // DirectClass only; CalorieBin is fixed at 5
    int label_base = 0;   // DirectClass labels are stored as base..base+C-1
};

// The two dataset shapes used by the experiments: exercise records labeled by
// a real-valued calorie burn, and HAR sensor rows labeled 1..6.
inline CsvSchema calorie_schema() {
    return CsvSchema{"calorie", "calories", LabelMode::CalorieBin, 5, 0};
}

inline CsvSchema harsense_schema() {
    return CsvSchema{"harsense", "Activity", LabelMode::DirectClass, 6, 1};
}

inline CsvSchema schema_by_name(const std::string& name) {
    if (name == "calorie") return calorie_schema();
    if (name == "harsense") return harsense_schema();
    throw ConfigError("unknown CSV schema preset '" + name + "'");
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    cells.push_back(cur);
    return cells;
}

inline double parse_number(const std::string& cell, std::size_t row, const std::string& col) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(cell, &pos);
        while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
        if (pos != cell.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw DataError("row " + std::to_string(row) + ": cannot parse '" + cell +
                        "' in column '" + col + "'");
    }
}

}  // namespace detail

// Comma-separated, first row header, '.' decimal. Feature columns are every
// column except the label, in header order. Row order is preserved.
inline Dataset load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open CSV file '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line.empty()) throw DataError("empty CSV file '" + path + "'");

    const auto header = detail::split_csv_line(line);
    std::size_t label_idx = header.size();
    std::vector<std::size_t> feature_idx;
    std::vector<std::string> feature_names;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == schema.label_column) {
            label_idx = i;
        } else {
            feature_idx.push_back(i);
            feature_names.push_back(header[i]);
        }
    }
    if (label_idx == header.size())
        throw DataError("CSV '" + path + "': missing column '" + schema.label_column + "'");
    if (feature_idx.empty()) throw DataError("CSV '" + path + "': no feature columns");

    std::vector<float> values;
    std::vector<int> labels;
    std::size_t row = 0;
    const int clazz_count = schema.mode == LabelMode::CalorieBin ? 5 : schema.class_count;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw DataError("row " + std::to_string(row) + ": expected " +
                            std::to_string(header.size()) + " cells, got " +
                            std::to_string(cells.size()));
        for (std::size_t i = 0; i < feature_idx.size(); ++i)
            values.push_back(static_cast<float>(
                detail::parse_number(cells[feature_idx[i]], row, feature_names[i])));
        const double raw = detail::parse_number(cells[label_idx], row, schema.label_column);
        int label = 0;
        if (schema.mode == LabelMode::CalorieBin) {
            try {
                label = bin_calories(raw);
            } catch (const std::invalid_argument& e) {
                throw DataError("row " + std::to_string(row) + ": " + e.what());
            }
        } else {
            label = static_cast<int>(std::llround(raw)) - schema.label_base;
            if (label < 0 || label >= clazz_count)
                throw DataError("row " + std::to_string(row) + ": unknown label '" +
                                cells[label_idx] + "'");
        }
        labels.push_back(label);
    }
    if (labels.empty()) throw DataError("CSV '" + path + "': no data rows");

    Dataset ds;
    ds.class_count = clazz_count;
    ds.features = Mat<float>(labels.size(), feature_idx.size());
    ds.features.a = std::move(values);
    ds.labels = std::move(labels);
    ds.validate();
    return ds;
}

struct SplitResult {
    Dataset train;
    Dataset test;
};

// Seeded shuffle then cut: floor(n*ratio) training rows, the rest test.
inline SplitResult split(const Dataset& ds, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("split: ratio must be in (0,1)");
    if (ds.rows() < 2) throw std::invalid_argument("split: need at least two rows");
    Rng rng(derive_seed(seed, seed_stream::kSplit));
    auto perm = random_permutation(ds.rows(), rng);
    const std::size_t n_train = static_cast<std::size_t>(
        std::floor(static_cast<double>(ds.rows()) * ratio));
    std::vector<std::size_t> train_idx(perm.begin(), perm.begin() + n_train);
    std::vector<std::size_t> test_idx(perm.begin() + n_train, perm.end());
    return SplitResult{ds.select(train_idx), ds.select(test_idx)};
}

enum class PartitionMode { Iid, LabelSkew };

// IID: seeded shuffle then round-robin deal. Device i receives every k-th row.
inline std::vector<Dataset> partition_iid(const Dataset& ds, int k, std::uint64_t seed) {
    if (k < 1) throw std::invalid_argument("partition: k must be >= 1");
    if (static_cast<std::size_t>(k) > ds.rows())
        throw std::invalid_argument("partition: k exceeds row count");
    Rng rng(derive_seed(seed, seed_stream::kPartition));
    auto perm = random_permutation(ds.rows(), rng);
    std::vector<std::vector<std::size_t>> idx(k);
    for (std::size_t j = 0; j < perm.size(); ++j) idx[j % k].push_back(perm[j]);
    std::vector<Dataset> parts;
    parts.reserve(k);
    for (auto& v : idx) parts.push_back(ds.select(v));
    return parts;
}

// Label skew: per-class device proportions drawn from Dirichlet(alpha) on a
// per-class stream, rows dealt by largest-remainder rounding. Disjoint and
// exhaustive by construction.
inline std::vector<Dataset> partition_label_skew(const Dataset& ds, int k, double alpha,
                                                 std::uint64_t seed) {
    if (k < 1) throw std::invalid_argument("partition: k must be >= 1");
    if (static_cast<std::size_t>(k) > ds.rows())
        throw std::invalid_argument("partition: k exceeds row count");
    if (!(alpha > 0)) throw std::invalid_argument("partition: alpha must be > 0");

    std::vector<std::vector<std::size_t>> by_class(ds.class_count);
    for (std::size_t i = 0; i < ds.rows(); ++i) by_class[ds.labels[i]].push_back(i);
    for (int c = 0; c < ds.class_count; ++c)
        if (by_class[c].empty())
            throw std::invalid_argument("partition: class " + std::to_string(c) + " has no rows");

    std::vector<std::vector<std::size_t>> device_idx(k);
    for (int c = 0; c < ds.class_count; ++c) {
        Rng rng(derive_seed(seed, seed_stream::kPartition, static_cast<std::uint64_t>(c) + 1));
        rng.shuffle(by_class[c]);
        const auto props = rng.dirichlet(std::vector<double>(k, alpha));
        // Largest-remainder apportionment of this class's rows.
        const std::size_t n = by_class[c].size();
        std::vector<std::size_t> counts(k);
        std::vector<std::pair<double, int>> remainders;
        std::size_t assigned = 0;
        for (int d = 0; d < k; ++d) {
            const double exact = props[d] * static_cast<double>(n);
            counts[d] = static_cast<std::size_t>(std::floor(exact));
            assigned += counts[d];
            remainders.push_back({exact - std::floor(exact), d});
        }
        std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (std::size_t r = 0; assigned < n; ++r, ++assigned) ++counts[remainders[r].second];
        std::size_t cursor = 0;
        for (int d = 0; d < k; ++d)
            for (std::size_t j = 0; j < counts[d]; ++j)
                device_idx[d].push_back(by_class[c][cursor++]);
    }
    std::vector<Dataset> parts;
    parts.reserve(k);
    for (auto& v : device_idx) parts.push_back(ds.select(v));
    return parts;
}

inline std::vector<Dataset> partition(const Dataset& ds, int k, PartitionMode mode, double alpha,
                                      std::uint64_t seed) {
    return mode == PartitionMode::Iid ? partition_iid(ds, k, seed)
                                      : partition_label_skew(ds, k, alpha, seed);
}

// Gaussian blobs with unit variance at seeded centers kept at least sep apart
// (sep == 0 collapses all centers to the origin, i.e. pure label noise).
// label_noise flips that fraction of labels to a different class.
inline Dataset synth_generate(int classes, int per_class, int dim, double sep, std::uint64_t seed,
                              double label_noise = 0.0) {
    if (classes < 1 || per_class < 1 || dim < 1)
        throw std::invalid_argument("synth_generate: classes, per_class, dim must be >= 1");
    if (!(sep >= 0.0)) throw std::invalid_argument("synth_generate: sep must be >= 0");
    if (!(label_noise >= 0.0 && label_noise <= 1.0))
        throw std::invalid_argument("synth_generate: label_noise must be in [0,1]");

    Rng rng(derive_seed(seed, seed_stream::kDatasetGen));
    std::vector<std::vector<double>> centers(classes, std::vector<double>(dim, 0.0));
    if (sep > 0.0) {
        double radius = 2.0 * sep;
        for (int c = 0; c < classes; ++c) {
            for (int attempt = 0;; ++attempt) {
                for (int j = 0; j < dim; ++j) centers[c][j] = radius * rng.normal();
                bool ok = true;
                for (int prev = 0; prev < c && ok; ++prev) {
                    double d2 = 0;
                    for (int j = 0; j < dim; ++j) {
                        const double diff = centers[c][j] - centers[prev][j];
                        d2 += diff * diff;
                    }
                    ok = d2 >= sep * sep;
                }
                if (ok) break;
                if (attempt == 200) radius *= 1.5;  // widen if the space is crowded
            }
        }
    }

    Dataset ds;
    ds.class_count = classes;
    ds.features = Mat<float>(static_cast<std::size_t>(classes) * per_class, dim);
    ds.labels.resize(ds.features.rows);
    std::size_t row = 0;
    for (int c = 0; c < classes; ++c) {
        for (int i = 0; i < per_class; ++i, ++row) {
            for (int j = 0; j < dim; ++j)
                ds.features(row, j) = static_cast<float>(centers[c][j] + rng.normal());
            ds.labels[row] = c;
        }
    }
    if (label_noise > 0.0 && classes > 1) {
        Rng noise_rng(derive_seed(seed, seed_stream::kLabelNoise));
        for (std::size_t i = 0; i < ds.labels.size(); ++i) {
            if (noise_rng.uniform01() < label_noise) {
                const int shift = 1 + static_cast<int>(noise_rng.below(classes - 1));
                ds.labels[i] = (ds.labels[i] + shift) % classes;
            }
        }
    }
    return ds;
}

// Per-feature min-max to [0,1], fitted on training rows only. A feature with
// min == max maps to 0 everywhere.
struct Normalizer {
    std::vector<float> lo;
    std::vector<float> hi;

    static Normalizer fit(const Dataset& train) {
        if (train.rows() == 0) throw std::invalid_argument("Normalizer: empty training set");
        Normalizer n;
        n.lo.assign(train.dim(), std::numeric_limits<float>::max());
        n.hi.assign(train.dim(), std::numeric_limits<float>::lowest());
        for (std::size_t r = 0; r < train.rows(); ++r) {
            for (std::size_t c = 0; c < train.dim(); ++c) {
                n.lo[c] = std::min(n.lo[c], train.features(r, c));
                n.hi[c] = std::max(n.hi[c], train.features(r, c));
            }
        }
        return n;
    }

    Dataset apply(const Dataset& ds) const {
        if (ds.dim() != lo.size()) throw std::invalid_argument("Normalizer: dimension mismatch");
        Dataset out = ds;
        for (std::size_t c = 0; c < lo.size(); ++c) {
            const float range = hi[c] - lo[c];
            for (std::size_t r = 0; r < out.rows(); ++r) {
                out.features(r, c) =
                    range > 0.0f ? (out.features(r, c) - lo[c]) / range : 0.0f;
            }
        }
        return out;
    }
};

}  // namespace enfed
