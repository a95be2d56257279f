#pragma once

#include <vector>

#include "mildl/types.hpp"

namespace mildl {

// Test-time sparse codes for one instance: a background-only lasso code on
// D- and a full-dictionary code warm-started from [0; a-]. Both are plain
// ISTA with a fixed iteration budget.
struct TestCodes {
    Vector full;        // length T+M
    Vector background;  // length M
};

TestCodes code_test_instance(const Vector& x, const Dictionary& dict,
                             double lambda, int iters = 100);

// Residuals are squared l2 norms. confidence is their ratio; values well
// above 1 mean the target atoms were needed to reconstruct the instance.
struct DetectionScore {
    Index id = 0;
    double confidence = 0.0;
    double background_residual = 0.0;
    double full_residual = 0.0;
    bool uninformative = false;  // both residuals below the 1e-12 floor
};

DetectionScore detect(const Vector& x, const Dictionary& dict, double lambda,
                      int iters = 100);
std::vector<DetectionScore> detect_batch(const Matrix& X,
                                         const Dictionary& dict,
                                         double lambda, int iters = 100);

// One dictionary per class; index in the vector is the class id.
struct MulticlassModel {
    std::vector<Dictionary> dictionaries;
    std::vector<Hyperparams> hyperparams;

    int num_classes() const { return int(dictionaries.size()); }
    void validate() const;
};

struct ClassifyResult {
    int label = 0;
    Vector confidences;  // one per class
};

// argmax over per-class confidences; ties go to the lowest class index.
// Test-time lambda is each class's training lambda unless overridden
// (lambda_override >= 0).
ClassifyResult classify(const Vector& x, const MulticlassModel& model,
                        int iters = 100, double lambda_override = -1.0);
std::vector<ClassifyResult> classify_batch(const Matrix& X,
                                           const MulticlassModel& model,
                                           int iters = 100,
                                           double lambda_override = -1.0);

// D * a, or D- * a- for a background-only code.
Vector reconstruct(const Dictionary& dict, const Vector& full_code);
Vector reconstruct_background(const Dictionary& dict, const Vector& bg_code);

}  // namespace mildl
