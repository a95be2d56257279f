#include "mildl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mildl {

ROCCurve roc(const std::vector<double>& scores,
             const std::vector<std::uint8_t>& labels) {
    if (scores.size() != labels.size())
        throw validation_error("roc: scores/labels length mismatch");
    Index n_pos = 0, n_neg = 0;
    for (auto l : labels) {
        if (l != 0 && l != 1) throw validation_error("roc: labels must be 0 or 1");
        (l ? n_pos : n_neg) += 1;
    }
    if (n_pos == 0 || n_neg == 0)
        throw validation_error("roc: need at least one positive and one negative label");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    ROCCurve curve;
    curve.thresholds.push_back(std::numeric_limits<double>::infinity());
    curve.fpr.push_back(0.0);
    curve.tpr.push_back(0.0);

    Index tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double s = scores[order[i]];
        // tied scores collapse into one step
        while (i < order.size() && scores[order[i]] == s) {
            (labels[order[i]] ? tp : fp) += 1;
            ++i;
        }
        curve.thresholds.push_back(s);
        curve.fpr.push_back(double(fp) / double(n_neg));
        curve.tpr.push_back(double(tp) / double(n_pos));
    }

    double auc = 0.0;
    for (std::size_t p = 1; p < curve.fpr.size(); ++p)
        auc += (curve.fpr[p] - curve.fpr[p - 1]) * (curve.tpr[p] + curve.tpr[p - 1]) / 2.0;
    curve.auc = auc;
    return curve;
}

double tpr_at_fpr(const ROCCurve& curve, double fpr) {
    if (fpr < 0.0 || fpr > 1.0)
        throw validation_error("tpr_at_fpr: fpr must be in [0, 1]");
    if (curve.fpr.empty()) throw validation_error("tpr_at_fpr: empty curve");

    // exact hit: take the highest TPR reached at that FPR (vertical runs)
    double best = -1.0;
    for (std::size_t p = 0; p < curve.fpr.size(); ++p)
        if (curve.fpr[p] == fpr) best = std::max(best, curve.tpr[p]);
    if (best >= 0.0) return best;

    for (std::size_t p = 1; p < curve.fpr.size(); ++p) {
        if (curve.fpr[p] > fpr) {
            const double f0 = curve.fpr[p - 1], f1 = curve.fpr[p];
            const double t0 = curve.tpr[p - 1], t1 = curve.tpr[p];
            return t0 + (t1 - t0) * (fpr - f0) / (f1 - f0);
        }
    }
    return curve.tpr.back();
}

ConfusionResult multiclass_accuracy(const std::vector<int>& predicted,
                                    const std::vector<int>& truth,
                                    int num_classes) {
    if (predicted.size() != truth.size())
        throw validation_error("accuracy: predicted/truth length mismatch");
    if (predicted.empty()) throw validation_error("accuracy: empty label vectors");
    ConfusionResult res;
    res.confusion = Eigen::MatrixXi::Zero(num_classes, num_classes);
    Index correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const int t = truth[i], p = predicted[i];
        if (t < 0 || t >= num_classes || p < 0 || p >= num_classes)
            throw validation_error("accuracy: label outside [0, " +
                                   std::to_string(num_classes) + ")");
        res.confusion(t, p) += 1;
        if (t == p) ++correct;
    }
    res.accuracy = double(correct) / double(truth.size());
    return res;
}

std::map<std::string, MetricSummary> average_runs(
    const std::vector<MetricTable>& runs) {
    if (runs.empty()) throw validation_error("average_runs: no runs");
    for (const auto& run : runs)
        if (run.size() != runs.front().size() ||
            !std::equal(run.begin(), run.end(), runs.front().begin(),
                        [](const auto& a, const auto& b) { return a.first == b.first; }))
            throw validation_error("average_runs: runs disagree on metric keys");

    std::map<std::string, MetricSummary> out;
    const double n = double(runs.size());
    for (const auto& [key, _] : runs.front()) {
        double mean = 0.0;
        for (const auto& run : runs) mean += run.at(key);
        mean /= n;
        double var = 0.0;
        if (runs.size() > 1) {
            for (const auto& run : runs) {
                const double d = run.at(key) - mean;
                var += d * d;
            }
            var /= (n - 1.0);
        }
        out[key] = MetricSummary{mean, std::sqrt(var)};
    }
    return out;
}

std::vector<double> matched_abs_cosines(const Matrix& estimated,
                                        const Matrix& truth) {
    if (estimated.rows() != truth.rows())
        throw validation_error("atom matching: dimension mismatch");
    const Index ne = estimated.cols(), nt = truth.cols();
    if (ne > nt) throw validation_error("atom matching: more estimates than truths");
    if (ne > 8) throw validation_error("atom matching: exhaustive matcher capped at 8 atoms");

    Matrix cosines(ne, nt);
    for (Index e = 0; e < ne; ++e)
        for (Index t = 0; t < nt; ++t) {
            const double d = estimated.col(e).norm() * truth.col(t).norm();
            cosines(e, t) = d > 0.0 ? std::abs(estimated.col(e).dot(truth.col(t))) / d : 0.0;
        }

    // enumerate injective assignments, maximize total |cosine|
    std::vector<Index> best;
    double best_sum = -1.0;
    std::vector<Index> cur;
    std::vector<bool> used(std::size_t(nt), false);
    auto rec = [&](auto&& self, Index e, double sum) -> void {
        if (e == ne) {
            if (sum > best_sum) {
                best_sum = sum;
                best = cur;
            }
            return;
        }
        for (Index t = 0; t < nt; ++t) {
            if (used[std::size_t(t)]) continue;
            used[std::size_t(t)] = true;
            cur.push_back(t);
            self(self, e + 1, sum + cosines(e, t));
            cur.pop_back();
            used[std::size_t(t)] = false;
        }
    };
    rec(rec, 0, 0.0);

    std::vector<double> out(static_cast<std::size_t>(ne));
    for (Index e = 0; e < ne; ++e)
        out[std::size_t(e)] = cosines(e, best[std::size_t(e)]);
    return out;
}

}  // namespace mildl
