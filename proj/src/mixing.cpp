#include "balancemix/mixing.hpp"

#include <algorithm>

namespace balancemix {

const char* reliability_name(Reliability r) {
    switch (r) {
        case Reliability::Clean: return "C";
        case Reliability::Relabeled: return "R";
        case Reliability::Ambiguous: return "U";
    }
    return "?";
}

double fold_lambda(double lambda_prime) {
    return std::max(lambda_prime, 1.0 - lambda_prime);
}

double draw_lambda(double alpha, std::mt19937_64& rng) {
    if (!(alpha > 0.0)) throw ConfigError("draw_lambda: alpha must be positive");
    std::gamma_distribution<double> gamma(alpha, 1.0);
    const double a = gamma(rng);
    const double b = gamma(rng);
    const double lambda_prime = (a + b) > 0.0 ? a / (a + b) : 0.5;
    return fold_lambda(lambda_prime);
}

MixedInstance mix(const TaggedInstance& random_side, const TaggedInstance& minority_side,
                  double lambda) {
    if (lambda < 0.5 || lambda > 1.0) {
        throw ContractError("mix: lambda must lie in [0.5, 1]");
    }
    if (random_side.features.size() != minority_side.features.size() ||
        random_side.labels.size() != minority_side.labels.size()) {
        throw ContractError("mix: instances disagree on feature or label width");
    }
    if (random_side.reliability.size() != random_side.labels.size() ||
        random_side.ambiguous_weight.size() != random_side.labels.size()) {
        throw ContractError("mix: random-side ledger row width mismatch");
    }

    MixedInstance out;
    out.lambda = lambda;
    const double mu = 1.0 - lambda;

    out.features.resize(random_side.features.size());
    for (std::size_t j = 0; j < out.features.size(); ++j) {
        out.features[j] = lambda * random_side.features[j] + mu * minority_side.features[j];
    }
    out.labels.resize(random_side.labels.size());
    for (std::size_t c = 0; c < out.labels.size(); ++c) {
        out.labels[c] = lambda * static_cast<double>(random_side.labels[c]) +
                        mu * static_cast<double>(minority_side.labels[c]);
    }
    out.reliability.assign(random_side.reliability.begin(), random_side.reliability.end());
    out.ambiguous_weight.assign(random_side.ambiguous_weight.begin(),
                                random_side.ambiguous_weight.end());
    return out;
}

}  // namespace balancemix
