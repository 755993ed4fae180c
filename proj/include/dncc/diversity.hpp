#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dncc/data.hpp"
#include "dncc/model.hpp"
#include "dncc/tensor.hpp"

namespace dncc {

struct PairRecord {
    std::size_t i = 0;
    std::size_t j = 0;
    double diversity = 0.0;
    double mean_accuracy = 0.0;
};

struct DiversityReport {
    std::vector<PairRecord> pairs;  // lexicographic by (i, j), i < j
    double ensemble_accuracy = 0.0;
    std::vector<double> per_head_accuracy;

    double mean_diversity() const;
};

struct PairDelta {
    std::size_t i = 0;
    std::size_t j = 0;
    double accuracy_delta = 0.0;
    double diversity_delta = 0.0;
};

// (1/K) sum_k (1 - cos(W_i[k], W_j[k])) over {K, d} weight matrices. The
// head indices only label a DegenerateWeightError.
double pairwise_diversity(const Tensor& w_i, const Tensor& w_j, std::size_t head_i = 0, std::size_t head_j = 1);

DiversityReport pairwise_report(const EnsembleModel& model, const Dataset& eval_set);

// a - b per pair, in a's pair order. Throws ContractError when the reports
// come from ensembles of different size.
std::vector<PairDelta> compare_reports(const DiversityReport& a, const DiversityReport& b);

// CSV with header pair_i,pair_j,diversity,mean_accuracy.
std::string report_csv(const DiversityReport& report);
DiversityReport parse_report_csv(const std::string& text);
// {ensemble_accuracy, per_head_accuracy, mean_diversity}
std::string report_summary_json(const DiversityReport& report);
// CSV with header pair_i,pair_j,accuracy_delta,diversity_delta.
std::string deltas_csv(const std::vector<PairDelta>& deltas);

}  // namespace dncc
