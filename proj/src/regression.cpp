#include "entk/regression.hpp"

namespace entk {

KrrModel krr_fit(const KernelMatrix& k_train, const Tensor& targets, double lambda) {
    const Tensor& k = k_train.values;
    if (k.rank() != 2 || k.shape[0] != k.shape[1]) {
        throw Error(ErrorKind::Dimension, "krr_fit: training kernel must be square");
    }
    if (!k_train.symmetric) {
        throw Error(ErrorKind::Dimension, "krr_fit: training kernel must be symmetric (X1 == X2)");
    }
    if (targets.rank() != 2 || targets.shape[0] != k.shape[0]) {
        throw Error(ErrorKind::Dimension, "krr_fit: targets rows must match kernel order");
    }
    if (lambda < 0.0) throw Error(ErrorKind::Usage, "krr_fit: lambda must be >= 0");

    Tensor regularized = k;
    const std::size_t n = k.shape[0];
    for (std::size_t i = 0; i < n; ++i) regularized.at(i, i) += lambda;

    KrrModel model;
    model.lambda = lambda;
    model.kind = k_train.kind;
    model.model_fingerprint = k_train.model_fingerprint;
    model.train_data_fingerprint = k_train.data_fingerprint_rows;
    try {
        model.alpha = cholesky_solve(regularized, targets);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::NotPositiveDefinite && lambda == 0.0) {
            throw Error(ErrorKind::NotPositiveDefinite,
                        std::string(e.what()) + "; kernel is not numerically PD, use lambda > 0");
        }
        throw;
    }
    return model;
}

Prediction krr_predict(const KrrModel& model, const KernelMatrix& k_cross) {
    if (k_cross.data_fingerprint_cols != model.train_data_fingerprint) {
        throw Error(ErrorKind::Integrity,
                    "cross kernel train-side data fingerprint does not match the fitted model");
    }
    if (k_cross.model_fingerprint != model.model_fingerprint) {
        throw Error(ErrorKind::Integrity,
                    "cross kernel model fingerprint does not match the fitted model");
    }
    if (k_cross.values.shape[1] != model.alpha.shape[0]) {
        throw Error(ErrorKind::Dimension, "cross kernel columns must match training rows");
    }
    Prediction pred;
    pred.scores = matmul(k_cross.values, model.alpha);
    const std::size_t b = pred.scores.shape[0], o = pred.scores.shape[1];
    pred.labels.resize(b);
    for (std::size_t i = 0; i < b; ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < o; ++c) {
            if (pred.scores.at(i, c) > pred.scores.at(i, best)) best = c;  // ties keep lower index
        }
        pred.labels[i] = static_cast<int>(best);
    }
    return pred;
}

Tensor targets_from_labels(const std::vector<int>& labels, std::size_t n_classes) {
    Tensor y = Tensor::zeros({labels.size(), n_classes});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int c = labels[i];
        if (c < 0 || static_cast<std::size_t>(c) >= n_classes) {
            throw Error(ErrorKind::Dimension,
                        "label " + std::to_string(c) + " out of range for " +
                            std::to_string(n_classes) + " classes");
        }
        for (std::size_t k = 0; k < n_classes; ++k) y.at(i, k) = -1.0;
        y.at(i, static_cast<std::size_t>(c)) = 1.0;
    }
    return y;
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.size() != truth.size() || predicted.empty()) {
        throw Error(ErrorKind::Dimension, "accuracy: label vectors must match and be non-empty");
    }
    std::size_t hit = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (predicted[i] == truth[i]) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(predicted.size());
}

}  // namespace entk
