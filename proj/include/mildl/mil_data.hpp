#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mildl/types.hpp"

namespace mildl {

// A bag is a multi-set of instances (columns) under one binary label.
// Positive bags (label 1) contain at least one target instance; negative
// bags contain none.
struct Bag {
    Matrix instances;  // d x n, one instance per column
    int label = 0;     // 0 or 1

    Index size() const { return instances.cols(); }
};

struct MILDataset {
    std::vector<Bag> bags;
    Index feature_dim = 0;

    Index num_instances() const;
    Index num_positive_instances() const;
    Index num_negative_instances() const;

    // require_both_labels: training needs at least one bag of each label.
    void validate(bool require_both_labels = true) const;
};

// Flat instance table with per-instance class labels, as produced by the
// file loaders; bag construction samples from this.
struct LabeledInstances {
    Matrix features;          // d x n
    std::vector<int> labels;  // class id per column

    Index size() const { return features.cols(); }
};

// Generative description of a synthetic problem. Instances are sparse
// nonnegative combinations of `sparsity` random background atoms plus
// Gaussian noise; target instances carry one extra nonzero target-atom
// coefficient. Coefficients are uniform on [0.5, 1.5] so a "nonzero target
// weight" is unambiguous.
struct SynthSpec {
    int d = 20;
    int T_true = 2;
    int M_true = 5;
    int bags_pos = 10;
    int bags_neg = 10;
    int bag_size = 8;
    int targets_per_pos_bag = 1;
    double noise_sigma = 0.0;
    int sparsity = 2;  // nonzero background coefficients per instance
    std::uint64_t seed = 0;

    void validate() const;
};

struct SynthProblem {
    MILDataset data;
    Matrix target_atoms;      // d x T_true, unit-norm columns
    Matrix background_atoms;  // d x M_true, unit-norm columns
    std::vector<std::uint8_t> z;  // ground-truth flag per instance, bag order
};

// USPS ASCII rows: class label followed by 256 gray values, whitespace
// separated. Gray values are rescaled to [0, 1] by an affine map from the
// file's own min/max so beta keeps a usable range regardless of the export's
// gray scale. `digits` nonempty keeps only those classes.
LabeledInstances load_usps(const std::string& path,
                           const std::vector<int>& digits = {});

// Generic ingestion: one instance per CSV row.
LabeledInstances load_csv_instances(const std::string& path);

// Instances CSV plus sidecar bag-assignment CSV with columns
// row_index, bag_id, bag_label. Bags are emitted in order of first
// appearance of their bag_id.
MILDataset load_csv_dataset(const std::string& instances_path,
                            const std::string& bags_path);

void save_csv_dataset(const std::string& instances_path,
                      const std::string& bags_path, const MILDataset& data);

// Bag construction over a labeled instance table. Each positive bag holds
// exactly targets_per_pos_bag instances of target_class plus fill from other
// classes; negative bags hold only non-target instances. Sampling is without
// replacement inside a bag and with replacement across bags. neg_bag_size 0
// means "same as bag_size".
MILDataset make_bags(const LabeledInstances& table, int target_class,
                     int pos_bags, int neg_bags, int bag_size,
                     int targets_per_pos_bag, std::uint64_t seed,
                     int neg_bag_size = 0);

SynthProblem synth_generate(const SynthSpec& spec);

}  // namespace mildl
