#pragma once

// Bregman divergences and Bregman information over discrete distributions.

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace dncc {

using Point = std::vector<double>;

// A strictly convex functional phi: S -> R, differentiable on ri(S).
struct ConvexFunctional {
    std::string name;
    std::function<double(std::span<const double>)> value;
    std::function<Point(std::span<const double>)> gradient;
    // dom(phi): points where phi is finite.
    std::function<bool(std::span<const double>)> domain_contains;
    // ri(S): points where the gradient exists. Second argument of a divergence
    // and the mean of a distribution must lie here.
    std::function<bool(std::span<const double>)> interior_contains;
};

// phi(x) = -sum_i log x_i. A 1-element point is the scalar case used by the
// loss. Domain guard: every coordinate must exceed 1e-300.
ConvexFunctional neg_log();
// phi(x) = ||x||^2.
ConvexFunctional squared_norm();
// phi(x) = sum_i x_i log x_i on x > 0.
ConvexFunctional x_log_x();

inline constexpr double kNegLogDomainFloor = 1e-300;

struct DiscreteDistribution {
    std::vector<Point> points;
    std::vector<double> weights;

    static DiscreteDistribution uniform(std::vector<Point> points);
    // Weighted mean E[T].
    Point mean() const;
    // Throws ContractError on empty support, negative weights, weights not
    // summing to 1 (1e-12), or mismatched point dimensions.
    void validate() const;
};

// d_phi(a, b) = phi(a) - phi(b) - <a - b, grad phi(b)>.
double bregman_divergence(const ConvexFunctional& phi, std::span<const double> a, std::span<const double> b);
inline double bregman_divergence(const ConvexFunctional& phi, double a, double b) {
    return bregman_divergence(phi, std::span<const double>(&a, 1), std::span<const double>(&b, 1));
}

// I_phi(T) = sum_i w_i d_phi(t_i, mu), mu = E[T].
double bregman_information(const ConvexFunctional& phi, const DiscreteDistribution& dist);

// E[phi(T)] - phi(E[T]).
double jensen_gap(const ConvexFunctional& phi, const DiscreteDistribution& dist);

// d_{-log}(p, q) = log(q/p) + p/q - 1 from log-probabilities, without
// exponentiating p or q on their own.
double itakura_saito_log_domain(double log_p, double log_q);

}  // namespace dncc
