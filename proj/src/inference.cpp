#include "mildl/inference.hpp"

#include <cmath>

#include "mildl/solver.hpp"

namespace mildl {

namespace {

constexpr double kResidualFloor = 1e-12;

// Shared ISTA machinery; grams and step sizes are computed once per batch.
struct TestContext {
    Matrix gram_full, gram_bg;
    double eta_full = 0.0, eta_bg = 0.0;

    explicit TestContext(const Dictionary& dict) {
        const Matrix D = dict.full();
        gram_full = D.transpose() * D;
        gram_bg = gram_full.bottomRightCorner(dict.num_background(),
                                              dict.num_background());
        eta_full = step_size(dict, true);
        eta_bg = step_size(dict, false);
    }
};

Vector ista(const Vector& dtx, const Matrix& gram, double eta, double lambda,
            int iters, Vector a) {
    const double tau = lambda * eta;
    for (int it = 0; it < iters; ++it) {
        a = soft_threshold(Vector(a + eta * (dtx - gram * a)), tau);
    }
    return a;
}

TestCodes code_with_context(const Vector& x, const Dictionary& dict,
                            const TestContext& ctx, double lambda, int iters) {
    const Index T = dict.num_target(), M = dict.num_background();
    const Vector dtx_bg = dict.background_atoms.transpose() * x;
    TestCodes codes;
    codes.background =
        ista(dtx_bg, ctx.gram_bg, ctx.eta_bg, lambda, iters, Vector::Zero(M));
    Vector dtx(T + M);
    dtx.head(T) = dict.target_atoms.transpose() * x;
    dtx.tail(M) = dtx_bg;
    Vector warm = Vector::Zero(T + M);
    warm.tail(M) = codes.background;
    codes.full = ista(dtx, ctx.gram_full, ctx.eta_full, lambda, iters, warm);
    return codes;
}

DetectionScore score_with_context(const Vector& x, const Dictionary& dict,
                                  const TestContext& ctx, double lambda,
                                  int iters) {
    const TestCodes codes = code_with_context(x, dict, ctx, lambda, iters);
    DetectionScore s;
    s.background_residual =
        (x - dict.background_atoms * codes.background).squaredNorm();
    s.full_residual = (x - dict.full() * codes.full).squaredNorm();
    if (s.background_residual < kResidualFloor && s.full_residual < kResidualFloor) {
        s.confidence = 1.0;
        s.uninformative = true;
    } else {
        s.confidence = s.background_residual / std::max(s.full_residual, kResidualFloor);
    }
    return s;
}

void check_dims(const Vector& x, const Dictionary& dict) {
    if (x.size() != dict.dim())
        throw validation_error("instance dimension " + std::to_string(x.size()) +
                               " does not match dictionary dimension " +
                               std::to_string(dict.dim()));
}

}  // namespace

TestCodes code_test_instance(const Vector& x, const Dictionary& dict,
                             double lambda, int iters) {
    check_dims(x, dict);
    if (iters < 1) throw validation_error("code_test_instance: iters must be >= 1");
    return code_with_context(x, dict, TestContext(dict), lambda, iters);
}

DetectionScore detect(const Vector& x, const Dictionary& dict, double lambda,
                      int iters) {
    check_dims(x, dict);
    return score_with_context(x, dict, TestContext(dict), lambda, iters);
}

std::vector<DetectionScore> detect_batch(const Matrix& X, const Dictionary& dict,
                                         double lambda, int iters) {
    if (X.rows() != dict.dim())
        throw validation_error("detect_batch: instance dimension mismatch");
    const TestContext ctx(dict);
    std::vector<DetectionScore> out(std::size_t(X.cols()));
    for (Index i = 0; i < X.cols(); ++i) {
        out[std::size_t(i)] = score_with_context(X.col(i), dict, ctx, lambda, iters);
        out[std::size_t(i)].id = i;
    }
    return out;
}

void MulticlassModel::validate() const {
    if (dictionaries.empty())
        throw validation_error("multiclass model: no class dictionaries");
    if (hyperparams.size() != dictionaries.size())
        throw validation_error("multiclass model: hyperparams/dictionaries mismatch");
    for (const auto& d : dictionaries)
        if (d.dim() != dictionaries.front().dim())
            throw validation_error("multiclass model: class dictionaries disagree on "
                                   "feature dimension");
}

ClassifyResult classify(const Vector& x, const MulticlassModel& model, int iters,
                        double lambda_override) {
    model.validate();
    check_dims(x, model.dictionaries.front());
    ClassifyResult res;
    res.confidences.resize(model.num_classes());
    for (int c = 0; c < model.num_classes(); ++c) {
        const double lam = lambda_override >= 0.0
                               ? lambda_override
                               : model.hyperparams[std::size_t(c)].lambda;
        res.confidences[c] =
            detect(x, model.dictionaries[std::size_t(c)], lam, iters).confidence;
    }
    res.confidences.maxCoeff(&res.label);  // first maximum wins ties
    return res;
}

std::vector<ClassifyResult> classify_batch(const Matrix& X,
                                           const MulticlassModel& model,
                                           int iters, double lambda_override) {
    model.validate();
    if (X.rows() != model.dictionaries.front().dim())
        throw validation_error("classify_batch: instance dimension mismatch");

    std::vector<TestContext> ctx;
    ctx.reserve(std::size_t(model.num_classes()));
    for (const auto& d : model.dictionaries) ctx.emplace_back(d);

    std::vector<ClassifyResult> out(std::size_t(X.cols()));
    for (Index i = 0; i < X.cols(); ++i) {
        ClassifyResult& r = out[std::size_t(i)];
        r.confidences.resize(model.num_classes());
        for (int c = 0; c < model.num_classes(); ++c) {
            const double lam = lambda_override >= 0.0
                                   ? lambda_override
                                   : model.hyperparams[std::size_t(c)].lambda;
            r.confidences[c] = score_with_context(X.col(i),
                                                  model.dictionaries[std::size_t(c)],
                                                  ctx[std::size_t(c)], lam, iters)
                                   .confidence;
        }
        r.confidences.maxCoeff(&r.label);
    }
    return out;
}

Vector reconstruct(const Dictionary& dict, const Vector& full_code) {
    if (full_code.size() != dict.num_atoms())
        throw validation_error("reconstruct: code length mismatch");
    return dict.full() * full_code;
}

Vector reconstruct_background(const Dictionary& dict, const Vector& bg_code) {
    if (bg_code.size() != dict.num_background())
        throw validation_error("reconstruct: background code length mismatch");
    return dict.background_atoms * bg_code;
}

}  // namespace mildl
