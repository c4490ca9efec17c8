#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "entk/tensor.hpp"

namespace entk {

struct Dataset {
    Tensor x;                 // [n x feature dims]
    std::vector<int> labels;  // empty when unlabeled
};

// Two Gaussian blobs with unit variance, centers +-separation/2 along the
// first coordinate. Sample i belongs to class i % 2, so every prefix is
// balanced. Fully determined by the seed.
Dataset make_blobs(std::size_t n, std::size_t dim, double separation, std::uint64_t seed);

// One sample per line, comma-separated floats. If every line's final field
// parses as a bare integer, it is taken as the label column.
Dataset load_csv(const std::string& path);

// One integer class per line.
std::vector<int> load_labels_csv(const std::string& path);

// Reshape flat samples to the model's input shape (adds the batch extent).
Tensor reshape_samples(const Tensor& flat, const std::vector<std::size_t>& input_shape);

}  // namespace entk
