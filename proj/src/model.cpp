#include "balancemix/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace balancemix {

ModelState ModelState::zeros(std::size_t input, std::size_t hidden, std::size_t classes) {
    ModelState m;
    m.w1 = Matrix(hidden, input);
    m.b1.assign(hidden, 0.0);
    m.w2 = Matrix(classes, hidden);
    m.b2.assign(classes, 0.0);
    return m;
}

ModelState init_model(std::size_t input, std::size_t hidden, std::size_t classes,
                      std::uint64_t seed) {
    ModelState m = ModelState::zeros(input, hidden, classes);
    std::mt19937_64 rng(seed);
    auto fill_uniform = [&rng](double* p, std::size_t n, std::size_t fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (std::size_t i = 0; i < n; ++i) p[i] = dist(rng);
    };
    fill_uniform(m.w1.data(), m.w1.size(), input);
    fill_uniform(m.b1.data(), m.b1.size(), input);
    fill_uniform(m.w2.data(), m.w2.size(), hidden);
    fill_uniform(m.b2.data(), m.b2.size(), hidden);
    return m;
}

namespace {

double clamped_sigmoid(double logit) {
    const double s = 1.0 / (1.0 + std::exp(-logit));
    return std::clamp(s, kConfidenceClamp, 1.0 - kConfidenceClamp);
}

// Hidden pre-activations and confidences for one batch; kept for backprop.
struct ForwardPass {
    Matrix z1;    // [b x H]
    Matrix conf;  // [b x K]
};

ForwardPass run_forward(const ModelState& model, const Matrix& features) {
    if (features.cols() != model.input_dim()) {
        throw ContractError("forward: feature width " + std::to_string(features.cols()) +
                            " does not match model input dim " +
                            std::to_string(model.input_dim()));
    }
    const std::size_t b = features.rows();
    const std::size_t d = model.input_dim();
    const std::size_t h = model.hidden_dim();
    const std::size_t k = model.num_classes();

    ForwardPass fp;
    fp.z1 = Matrix(b, h);
    fp.conf = Matrix(b, k);

    for (std::size_t n = 0; n < b; ++n) {
        const double* x = features.row(n).data();
        for (std::size_t j = 0; j < h; ++j) {
            double z = model.b1[j];
            const double* w = model.w1.row(j).data();
            for (std::size_t i = 0; i < d; ++i) z += w[i] * x[i];
            fp.z1(n, j) = z;
        }
        for (std::size_t c = 0; c < k; ++c) {
            double z = model.b2[c];
            const double* w = model.w2.row(c).data();
            for (std::size_t j = 0; j < h; ++j) {
                const double a = fp.z1(n, j);
                if (a > 0.0) z += w[j] * a;
            }
            fp.conf(n, c) = clamped_sigmoid(z);
        }
    }
    return fp;
}

}  // namespace

Matrix forward(const ModelState& model, const Matrix& features) {
    return run_forward(model, features).conf;
}

double bce(double confidence, double label) {
    return -label * std::log(confidence) - (1.0 - label) * std::log(1.0 - confidence);
}

std::pair<double, ModelState> batch_loss_and_grads(const ModelState& model,
                                                   const MiniBatch& batch) {
    if (!batch.labels.same_shape(batch.weights) ||
        batch.labels.rows() != batch.features.rows() ||
        batch.labels.cols() != model.num_classes()) {
        throw ContractError("batch_loss_and_grads: inconsistent batch shapes");
    }
    const std::size_t b = batch.batch_size();
    const std::size_t d = model.input_dim();
    const std::size_t h = model.hidden_dim();
    const std::size_t k = model.num_classes();

    const ForwardPass fp = run_forward(model, batch.features);
    ModelState grads = ModelState::zeros(d, h, k);

    double loss = 0.0;
    const double inv_b = 1.0 / static_cast<double>(b);
    std::vector<double> dz1(h);

    for (std::size_t n = 0; n < b; ++n) {
        std::fill(dz1.begin(), dz1.end(), 0.0);
        for (std::size_t c = 0; c < k; ++c) {
            const double w = batch.weights(n, c);
            const double y = batch.labels(n, c);
            const double f = fp.conf(n, c);
            loss += w * bce(f, y);
            const double dz2 = w * (f - y) * inv_b;
            if (dz2 == 0.0) continue;
            grads.b2[c] += dz2;
            double* gw2 = grads.w2.row(c).data();
            const double* w2 = model.w2.row(c).data();
            for (std::size_t j = 0; j < h; ++j) {
                const double a = fp.z1(n, j);
                if (a > 0.0) {
                    gw2[j] += dz2 * a;
                    dz1[j] += dz2 * w2[j];
                }
            }
        }
        const double* x = batch.features.row(n).data();
        for (std::size_t j = 0; j < h; ++j) {
            const double g = dz1[j];
            if (g == 0.0) continue;
            grads.b1[j] += g;
            double* gw1 = grads.w1.row(j).data();
            for (std::size_t i = 0; i < d; ++i) gw1[i] += g * x[i];
        }
    }
    return {loss * inv_b, std::move(grads)};
}

OptimizerState OptimizerState::for_model(const ModelState& model, double lr, double momentum,
                                         double weight_decay) {
    OptimizerState opt;
    opt.velocity =
        ModelState::zeros(model.input_dim(), model.hidden_dim(), model.num_classes());
    opt.learning_rate = lr;
    opt.momentum = momentum;
    opt.weight_decay = weight_decay;
    return opt;
}

namespace {

void sgd_update(double* theta, double* v, const double* g, std::size_t n,
                const OptimizerState& opt) {
    for (std::size_t i = 0; i < n; ++i) {
        v[i] = opt.momentum * v[i] + g[i] + opt.weight_decay * theta[i];
        theta[i] -= opt.learning_rate * v[i];
    }
}

}  // namespace

void sgd_step(ModelState& model, OptimizerState& opt, const ModelState& grads) {
    if (grads.num_parameters() != model.num_parameters() ||
        opt.velocity.num_parameters() != model.num_parameters()) {
        throw ContractError("sgd_step: parameter shape mismatch");
    }
    sgd_update(model.w1.data(), opt.velocity.w1.data(), grads.w1.data(), model.w1.size(), opt);
    sgd_update(model.b1.data(), opt.velocity.b1.data(), grads.b1.data(), model.b1.size(), opt);
    sgd_update(model.w2.data(), opt.velocity.w2.data(), grads.w2.data(), model.w2.size(), opt);
    sgd_update(model.b2.data(), opt.velocity.b2.data(), grads.b2.data(), model.b2.size(), opt);
}

}  // namespace balancemix
