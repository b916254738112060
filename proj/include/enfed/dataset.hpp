#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "enfed/matrix.hpp"

namespace enfed {

// Labeled feature matrix. Labels are class indices in [0, class_count).
struct Dataset {
    Mat<float> features;
    std::vector<int> labels;
    int class_count = 0;

    std::size_t rows() const { return features.rows; }
    std::size_t dim() const { return features.cols; }

    void validate() const {
        if (features.rows != labels.size())
            throw std::invalid_argument("Dataset: feature/label row counts differ");
        if (class_count <= 0) throw std::invalid_argument("Dataset: class_count must be positive");
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] < 0 || labels[i] >= class_count)
                throw std::invalid_argument("Dataset: label out of range at row " +
                                            std::to_string(i));
        }
    }

    Dataset select(const std::vector<std::size_t>& idx) const {
        Dataset out;
        out.class_count = class_count;
        out.features = Mat<float>(idx.size(), features.cols);
        out.labels.resize(idx.size());
        for (std::size_t r = 0; r < idx.size(); ++r) {
            for (std::size_t c = 0; c < features.cols; ++c)
                out.features(r, c) = features(idx[r], c);
            out.labels[r] = labels[idx[r]];
        }
        return out;
    }
};

}  // namespace enfed
