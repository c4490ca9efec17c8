#pragma once

#include <vector>

#include "entk/ntk.hpp"
#include "entk/tensor.hpp"

namespace entk {

// Kernel ridge regression surrogate: alpha = (K + lambda I)^-1 Y.
struct KrrModel {
    Tensor alpha;  // [B_train x O]
    double lambda = 0.0;
    KernelKind kind = KernelKind::Pntk;
    Digest model_fingerprint{};
    Digest train_data_fingerprint{};
};

KrrModel krr_fit(const KernelMatrix& k_train, const Tensor& targets, double lambda);

struct Prediction {
    Tensor scores;            // [B_test x O]
    std::vector<int> labels;  // argmax, ties to the lower class index
};

// k_cross is [B_test x B_train]; its train-side fingerprint must match the
// model's.
Prediction krr_predict(const KrrModel& model, const KernelMatrix& k_cross);

// +-1 one-hot targets from integer class labels.
Tensor targets_from_labels(const std::vector<int>& labels, std::size_t n_classes);

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

}  // namespace entk
