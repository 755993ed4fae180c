#include "dncc/bregman.hpp"

#include <cmath>
#include <numeric>

#include "dncc/error.hpp"

namespace dncc {

namespace {

std::string point_str(std::span<const double> p) {
    std::string s = "(";
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(p[i]);
    }
    return s + ")";
}

bool all_finite(std::span<const double> x) {
    for (double v : x) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace

ConvexFunctional neg_log() {
    ConvexFunctional f;
    f.name = "neg_log";
    f.value = [](std::span<const double> x) {
        double s = 0.0;
        for (double v : x) s -= std::log(v);
        return s;
    };
    f.gradient = [](std::span<const double> x) {
        Point g(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) g[i] = -1.0 / x[i];
        return g;
    };
    f.domain_contains = [](std::span<const double> x) {
        for (double v : x) {
            if (!(v > kNegLogDomainFloor) || !std::isfinite(v)) return false;
        }
        return !x.empty();
    };
    f.interior_contains = f.domain_contains;
    return f;
}

ConvexFunctional squared_norm() {
    ConvexFunctional f;
    f.name = "squared_norm";
    f.value = [](std::span<const double> x) {
        double s = 0.0;
        for (double v : x) s += v * v;
        return s;
    };
    f.gradient = [](std::span<const double> x) {
        Point g(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) g[i] = 2.0 * x[i];
        return g;
    };
    f.domain_contains = [](std::span<const double> x) { return !x.empty() && all_finite(x); };
    f.interior_contains = f.domain_contains;
    return f;
}

ConvexFunctional x_log_x() {
    ConvexFunctional f;
    f.name = "x_log_x";
    f.value = [](std::span<const double> x) {
        double s = 0.0;
        for (double v : x) s += v > 0.0 ? v * std::log(v) : 0.0;
        return s;
    };
    f.gradient = [](std::span<const double> x) {
        Point g(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) g[i] = std::log(x[i]) + 1.0;
        return g;
    };
    // phi extends continuously to 0, but the gradient only exists for x > 0.
    f.domain_contains = [](std::span<const double> x) {
        for (double v : x) {
            if (!(v >= 0.0) || !std::isfinite(v)) return false;
        }
        return !x.empty();
    };
    f.interior_contains = [](std::span<const double> x) {
        for (double v : x) {
            if (!(v > 0.0) || !std::isfinite(v)) return false;
        }
        return !x.empty();
    };
    return f;
}

DiscreteDistribution DiscreteDistribution::uniform(std::vector<Point> points) {
    DiscreteDistribution d;
    const double w = points.empty() ? 0.0 : 1.0 / static_cast<double>(points.size());
    d.weights.assign(points.size(), w);
    d.points = std::move(points);
    return d;
}

Point DiscreteDistribution::mean() const {
    Point mu(points.front().size(), 0.0);
    for (std::size_t i = 0; i < points.size(); ++i) {
        for (std::size_t j = 0; j < mu.size(); ++j) mu[j] += weights[i] * points[i][j];
    }
    return mu;
}

void DiscreteDistribution::validate() const {
    if (points.empty()) throw ContractError("distribution has no support points");
    if (points.size() != weights.size()) {
        throw ContractError("distribution has " + std::to_string(points.size()) + " points but " +
                            std::to_string(weights.size()) + " weights");
    }
    const std::size_t dim = points.front().size();
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i].size() != dim) throw ContractError("support points differ in dimension");
        if (!(weights[i] >= 0.0)) {
            throw ContractError("negative weight at index " + std::to_string(i));
        }
        total += weights[i];
    }
    if (std::abs(total - 1.0) > 1e-12) {
        throw ContractError("weights sum to " + std::to_string(total) + ", expected 1");
    }
}

double bregman_divergence(const ConvexFunctional& phi, std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("bregman_divergence: points differ in dimension");
    if (!phi.domain_contains(a)) {
        throw DomainError("first point " + point_str(a) + " outside dom(" + phi.name + ")");
    }
    if (!phi.interior_contains(b)) {
        throw DomainError("second point " + point_str(b) + " outside ri(dom(" + phi.name + "))");
    }
    const Point g = phi.gradient(b);
    double inner = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) inner += (a[i] - b[i]) * g[i];
    return phi.value(a) - phi.value(b) - inner;
}

double bregman_information(const ConvexFunctional& phi, const DiscreteDistribution& dist) {
    dist.validate();
    for (std::size_t i = 0; i < dist.points.size(); ++i) {
        if (!phi.domain_contains(dist.points[i])) {
            throw DomainError("support point " + std::to_string(i) + " outside dom(" + phi.name + ")", i);
        }
    }
    const Point mu = dist.mean();
    if (!phi.interior_contains(mu)) {
        throw DomainError("mean " + point_str(mu) + " outside ri(dom(" + phi.name + "))");
    }
    double info = 0.0;
    for (std::size_t i = 0; i < dist.points.size(); ++i) {
        if (dist.weights[i] == 0.0) continue;
        info += dist.weights[i] * bregman_divergence(phi, dist.points[i], mu);
    }
    return info;
}

double jensen_gap(const ConvexFunctional& phi, const DiscreteDistribution& dist) {
    dist.validate();
    for (std::size_t i = 0; i < dist.points.size(); ++i) {
        if (!phi.domain_contains(dist.points[i])) {
            throw DomainError("support point " + std::to_string(i) + " outside dom(" + phi.name + ")", i);
        }
    }
    const Point mu = dist.mean();
    if (!phi.domain_contains(mu)) {
        throw DomainError("mean " + point_str(mu) + " outside dom(" + phi.name + ")");
    }
    double expected = 0.0;
    for (std::size_t i = 0; i < dist.points.size(); ++i) {
        if (dist.weights[i] == 0.0) continue;
        expected += dist.weights[i] * phi.value(dist.points[i]);
    }
    return expected - phi.value(mu);
}

double itakura_saito_log_domain(double log_p, double log_q) {
    return (log_q - log_p) + std::expm1(log_p - log_q);
}

}  // namespace dncc
