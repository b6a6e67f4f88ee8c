#pragma once

#include <cstdint>
#include <vector>

#include "balancemix/matrix.hpp"

namespace balancemix {

// Sigmoid outputs are clamped to [kConfidenceClamp, 1 - kConfidenceClamp] so
// every BCE evaluation stays finite.
inline constexpr double kConfidenceClamp = 1e-7;

// One-hidden-layer multi-label classifier: ReLU hidden units, K independent
// sigmoid outputs. Doubles as the gradient container (same shapes).
struct ModelState {
    Matrix w1;               // [hidden x input]
    std::vector<double> b1;  // [hidden]
    Matrix w2;               // [classes x hidden]
    std::vector<double> b2;  // [classes]

    std::size_t input_dim() const { return w1.cols(); }
    std::size_t hidden_dim() const { return w1.rows(); }
    std::size_t num_classes() const { return w2.rows(); }
    std::size_t num_parameters() const {
        return w1.size() + b1.size() + w2.size() + b2.size();
    }

    static ModelState zeros(std::size_t input, std::size_t hidden, std::size_t classes);
};

// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)], reproducible from seed.
ModelState init_model(std::size_t input, std::size_t hidden, std::size_t classes,
                      std::uint64_t seed);

// Per-class confidences for a feature batch, clamped sigmoid outputs.
// Throws ContractError on feature-width mismatch.
Matrix forward(const ModelState& model, const Matrix& features);

// Binary cross-entropy against a (possibly soft) label in [0,1]. The
// confidence must already be clamped away from {0,1}.
double bce(double confidence, double label);

struct MiniBatch {
    Matrix features;  // [b x d]
    Matrix labels;    // [b x K], entries in [0,1] (soft after mixing)
    Matrix weights;   // [b x K], per-label loss weights in [0,1]

    std::size_t batch_size() const { return features.rows(); }
};

// Weighted BCE batch loss and its exact analytic gradients:
//   loss = (1/b) sum_n sum_k w_nk * BCE(f_nk, y_nk)
// The per-logit gradient is w_nk * (f_nk - y_nk) / b, backpropagated through
// the ReLU hidden layer.
std::pair<double, ModelState> batch_loss_and_grads(const ModelState& model,
                                                   const MiniBatch& batch);

struct OptimizerState {
    ModelState velocity;
    double learning_rate = 0.1;
    double momentum = 0.9;
    double weight_decay = 0.0;

    static OptimizerState for_model(const ModelState& model, double lr, double momentum,
                                    double weight_decay);
};

// v <- momentum * v + g + wd * theta;  theta <- theta - lr * v
void sgd_step(ModelState& model, OptimizerState& opt, const ModelState& grads);

}  // namespace balancemix
