#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mildl/types.hpp"

namespace mildl {

// Threshold sweep over unique score values, higher score = more target.
// Tied scores enter as a single step, so auc equals the Mann-Whitney
// U statistic divided by n+ n-.
struct ROCCurve {
    std::vector<double> thresholds;  // per point; +inf for the (0,0) anchor
    std::vector<double> fpr;
    std::vector<double> tpr;
    double auc = 0.0;
};

ROCCurve roc(const std::vector<double>& scores,
             const std::vector<std::uint8_t>& labels);

// TPR linearly interpolated at the requested FPR; vertical runs resolve to
// the highest TPR reached at that FPR.
double tpr_at_fpr(const ROCCurve& curve, double fpr);

struct ConfusionResult {
    double accuracy = 0.0;
    Eigen::MatrixXi confusion;  // rows = truth, cols = predicted
};

ConfusionResult multiclass_accuracy(const std::vector<int>& predicted,
                                    const std::vector<int>& truth,
                                    int num_classes);

using MetricTable = std::map<std::string, double>;

struct MetricSummary {
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation, 0 for a single run
};

std::map<std::string, MetricSummary> average_runs(
    const std::vector<MetricTable>& runs);

// |cosine| of each estimated atom against its optimally matched true atom
// (exhaustive assignment maximizing total |cosine|; columns are atoms).
// Result is indexed by estimated-atom column.
std::vector<double> matched_abs_cosines(const Matrix& estimated,
                                        const Matrix& truth);

}  // namespace mildl
