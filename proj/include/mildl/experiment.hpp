#pragma once

#include <cstdint>
#include <vector>

#include "mildl/eval.hpp"
#include "mildl/inference.hpp"
#include "mildl/mil_data.hpp"
#include "mildl/types.hpp"

namespace mildl {

// Bag construction protocol for experiments over a labeled instance table.
struct BagProtocol {
    int pos_bags = 50;
    int pos_bag_size = 4;
    int targets_per_pos_bag = 1;
    int neg_bags = 50;
    int neg_bag_size = 50;
};

// One-vs-rest multi-class run: per class, build bags with that class as
// target, train a dictionary, then label each test instance by the class
// whose dictionary yields the largest detection confidence.
struct MulticlassRunConfig {
    std::vector<int> classes;
    BagProtocol protocol;
    Hyperparams hp;
    Index test_instances = 0;  // 0 = score the whole test table
    int coding_iters = 100;
    int threads = 1;  // parallel per-class trainings
};

struct MulticlassRunResult {
    double accuracy = 0.0;
    Eigen::MatrixXi confusion;
    MulticlassModel model;
    std::vector<int> predicted;
    std::vector<int> truth;
};

MulticlassRunResult run_multiclass(const LabeledInstances& train_table,
                                   const LabeledInstances& test_table,
                                   const MulticlassRunConfig& config,
                                   std::uint64_t seed);

// Synthetic detection run: generate, fit, score every instance with the
// confidence ratio, evaluate against the ground-truth z flags.
struct SynthDetectionResult {
    double auc = 0.0;
    ROCCurve curve;
    std::vector<double> tpr_at;  // aligned with the requested fpr grid
};

SynthDetectionResult run_synth_detection(const SynthSpec& spec,
                                         const Hyperparams& hp,
                                         const std::vector<double>& fpr_grid,
                                         int coding_iters = 100);

}  // namespace mildl
