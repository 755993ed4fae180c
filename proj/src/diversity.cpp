#include "dncc/diversity.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dncc/error.hpp"
#include "dncc/text.hpp"

namespace dncc {

double DiversityReport::mean_diversity() const {
    if (pairs.empty()) return 0.0;
    double s = 0.0;
    for (const auto& p : pairs) s += p.diversity;
    return s / static_cast<double>(pairs.size());
}

double pairwise_diversity(const Tensor& w_i, const Tensor& w_j, std::size_t head_i, std::size_t head_j) {
    if (w_i.shape() != w_j.shape() || w_i.ndim() != 2) {
        throw DimensionError("pairwise_diversity: shapes " + shape_str(w_i.shape()) + " and " +
                             shape_str(w_j.shape()) + " differ");
    }
    const std::size_t k = w_i.rows(), d = w_i.cols();
    const auto a = w_i.data();
    const auto b = w_j.data();
    double total = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (std::size_t t = 0; t < d; ++t) {
            const double x = a[c * d + t];
            const double y = b[c * d + t];
            dot += x * y;
            na += x * x;
            nb += y * y;
        }
        if (na == 0.0) throw DegenerateWeightError(head_i, c);
        if (nb == 0.0) throw DegenerateWeightError(head_j, c);
        // Symmetric in (a, b) term by term so d(A,B) == d(B,A) exactly.
        const double cosine = std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
        total += 1.0 - cosine;
    }
    return total / static_cast<double>(k);
}

namespace {

double accuracy(const std::vector<int>& predicted, const std::vector<int>& labels) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hit += predicted[i] == labels[i] ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(labels.size());
}

}  // namespace

DiversityReport pairwise_report(const EnsembleModel& model, const Dataset& eval_set) {
    if (eval_set.size() == 0) throw ContractError("pairwise_report: empty evaluation set");
    NoGradGuard no_grad;
    const std::vector<Tensor> logits = model.forward(eval_set.all_features());
    DiversityReport report;
    report.ensemble_accuracy = accuracy(predict_from_logits(logits).labels, eval_set.labels);
    for (const Tensor& l : logits) report.per_head_accuracy.push_back(accuracy(argmax_rows(l), eval_set.labels));

    const std::vector<Tensor> weights = head_weight_matrices(model);
    for (std::size_t i = 0; i < weights.size(); ++i) {
        for (std::size_t j = i + 1; j < weights.size(); ++j) {
            report.pairs.push_back({i, j, pairwise_diversity(weights[i], weights[j], i, j),
                                    0.5 * (report.per_head_accuracy[i] + report.per_head_accuracy[j])});
        }
    }
    return report;
}

std::vector<PairDelta> compare_reports(const DiversityReport& a, const DiversityReport& b) {
    if (a.per_head_accuracy.size() != b.per_head_accuracy.size() || a.pairs.size() != b.pairs.size()) {
        throw ContractError("compare_reports: ensembles of size " + std::to_string(a.per_head_accuracy.size()) +
                            " and " + std::to_string(b.per_head_accuracy.size()));
    }
    std::vector<PairDelta> out;
    for (std::size_t p = 0; p < a.pairs.size(); ++p) {
        const auto& x = a.pairs[p];
        const auto& y = b.pairs[p];
        if (x.i != y.i || x.j != y.j) throw ContractError("compare_reports: pair order differs");
        out.push_back({x.i, x.j, x.mean_accuracy - y.mean_accuracy, x.diversity - y.diversity});
    }
    return out;
}

std::string report_csv(const DiversityReport& report) {
    std::ostringstream out;
    out << "pair_i,pair_j,diversity,mean_accuracy\n";
    for (const auto& p : report.pairs) {
        out << p.i << ',' << p.j << ',' << format_double(p.diversity) << ',' << format_double(p.mean_accuracy)
            << '\n';
    }
    return out.str();
}

DiversityReport parse_report_csv(const std::string& text) {
    const auto lines = split_lines(text);
    if (lines.empty() || lines[0] != "pair_i,pair_j,diversity,mean_accuracy") {
        throw FormatError("diversity CSV header mismatch", 1);
    }
    DiversityReport r;
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
        const auto cells = split(lines[ln], ',');
        if (cells.size() != 4) throw FormatError("expected 4 cells", ln + 1);
        r.pairs.push_back({static_cast<std::size_t>(parse_int(cells[0], ln + 1)),
                           static_cast<std::size_t>(parse_int(cells[1], ln + 1)), parse_double(cells[2], ln + 1),
                           parse_double(cells[3], ln + 1)});
    }
    return r;
}

std::string report_summary_json(const DiversityReport& report) {
    nlohmann::json j;
    j["ensemble_accuracy"] = report.ensemble_accuracy;
    j["per_head_accuracy"] = report.per_head_accuracy;
    j["mean_diversity"] = report.mean_diversity();
    j["num_pairs"] = report.pairs.size();
    return j.dump(2) + "\n";
}

std::string deltas_csv(const std::vector<PairDelta>& deltas) {
    std::ostringstream out;
    out << "pair_i,pair_j,accuracy_delta,diversity_delta\n";
    for (const auto& d : deltas) {
        out << d.i << ',' << d.j << ',' << format_double(d.accuracy_delta) << ','
            << format_double(d.diversity_delta) << '\n';
    }
    return out.str();
}

}  // namespace dncc
