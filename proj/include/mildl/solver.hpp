#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mildl/mil_data.hpp"
#include "mildl/types.hpp"

namespace mildl {

// ---------------------------------------------------------------------------
// EM dictionary learner. One EM iteration is: E-step posterior from the
// background-only residual, penalty refresh from the previous iteration's
// atoms, closed-form block-coordinate atom updates (each normalized in
// place), then `inner_iters` rounds of proximal-gradient code updates.
// ---------------------------------------------------------------------------

// Dataset flattened to solver layout: instance i is the i-th column of X in
// bag traversal order.
struct FlatView {
    Matrix X;  // d x N
    std::vector<std::uint8_t> positive;  // bag label per instance
    std::vector<Index> pos_idx, neg_idx;

    Index num_instances() const { return X.cols(); }
};

FlatView flatten(const MILDataset& data);

// Target atoms: means of T disjoint random subsets of the positive-bag
// instances. Background atoms: M k-means centroids (seeded k-means++ start,
// at most 50 Lloyd iterations) of the negative-bag instances. All columns
// unit-normalized.
Dictionary init_dictionary(const MILDataset& train, const Hyperparams& hp);

// gamma(k,t) = Gamma * <d_k-, d_t+> / (||d_k-|| ||d_t+||) on dict_old.
PenaltyMatrix compute_penalty(const Dictionary& dict_old, double Gamma);

// For positive-bag instances P(z=0) = exp(-beta * ||x - D- a-||^2) with the
// background block of the current code; p1 = 1 - P(z=0). Negative-bag
// instances have p1 = 0 identically.
Posterior e_step(const MILDataset& train, const Dictionary& dict,
                 const SparseCodes& codes, double beta);
Posterior e_step(const FlatView& view, const Dictionary& dict,
                 const SparseCodes& codes, double beta);

// Closed-form single-atom updates (pre-normalization). nullopt when the
// denominator vanishes (no instance uses the atom); the caller keeps the old
// atom in that case.
std::optional<Vector> update_target_atom(Index t, const MILDataset& train,
                                         const Dictionary& dict,
                                         const SparseCodes& codes,
                                         const Posterior& post);
std::optional<Vector> update_background_atom(Index k, const MILDataset& train,
                                             const Dictionary& dict,
                                             const SparseCodes& codes,
                                             const Posterior& post,
                                             const PenaltyMatrix& penalty,
                                             double psi);

// Gradient of the smooth part of the per-instance expected objective with
// respect to the stacked code [a+; a-]:
//   -[p1 D+, D-]^T x + (p1 D^T D + p0 [0 D-]^T [0 D-]) a
Vector code_gradient_pos(Index i, const MILDataset& train,
                         const Dictionary& dict, const SparseCodes& codes,
                         const Posterior& post);

// 1 / lambda_max of D^T D (positive bags) or D-^T D- (negative bags).
// lambda_max by power iteration, 200 iterations max, relative tolerance
// 1e-6, fixed deterministic start vector.
double step_size(const Dictionary& dict, bool positive);

// Elementwise sign(v) * max(|v| - tau, 0); the l1 proximal operator.
Vector soft_threshold(const Vector& v, double tau);
double soft_threshold(double v, double tau);

// One proximal-gradient step on a positive-bag instance: gradient step of
// length eta, then shrink the target block by lambda*p1*eta and the
// background block by lambda*eta.
Vector update_codes_pos(Index i, const MILDataset& train,
                        const Dictionary& dict, const SparseCodes& codes,
                        const Posterior& post, double lambda, double eta);

// Negative-bag ISTA step on the background block at eta = 1/lambda_max(D-^T D-),
// threshold lambda*eta; the target block is pinned to zero.
Vector update_codes_neg(Index i, const MILDataset& train,
                        const Dictionary& dict, const SparseCodes& codes,
                        double lambda);

// Complete-data objective at a fixed z assignment:
//   sum_i w_i [ 1/2 ||x_i - z_i D+ a_i+ - D- a_i-||^2
//               + lambda (z_i ||a_i+||_1 + ||a_i-||_1) ]
//   + sum_kt gamma_kt <d_k-, d_t_old+>
// with w_i = psi on positive bags and 1 on negative bags.
double objective(const MILDataset& train, const Dictionary& dict,
                 const SparseCodes& codes, const std::vector<std::uint8_t>& z,
                 const PenaltyMatrix& penalty, const Hyperparams& hp);

// Expectation of `objective` over z under the posterior; equals it when all
// posteriors are 0/1.
double expected_objective(const MILDataset& train, const Dictionary& dict,
                          const SparseCodes& codes, const Posterior& post,
                          const PenaltyMatrix& penalty, const Hyperparams& hp);
double expected_objective(const FlatView& view, const Dictionary& dict,
                          const SparseCodes& codes, const Posterior& post,
                          const PenaltyMatrix& penalty, double lambda,
                          double psi);

// ---------------------------------------------------------------------------
// Batched coding rounds. The dictionary is frozen across inner rounds, so
// Gram matrices, D^T X and the step sizes are computed once per M-step and
// reused.
// ---------------------------------------------------------------------------

struct CodingContext {
    Matrix gram_full;  // (T+M) x (T+M)
    Matrix gram_bg;    // M x M
    Matrix dtx;        // (T+M) x N
    double eta_pos = 0.0;
    double eta_neg = 0.0;
};

CodingContext make_coding_context(const FlatView& view, const Dictionary& dict);

// One update_codes_pos / update_codes_neg pass over the respective index
// set, in place.
void code_round_pos(const FlatView& view, const Dictionary& dict,
                    const CodingContext& ctx, const Posterior& post,
                    double lambda, SparseCodes& codes);
void code_round_neg(const FlatView& view, const Dictionary& dict,
                    const CodingContext& ctx, double lambda,
                    SparseCodes& codes);

// ---------------------------------------------------------------------------
// Full EM loop.
// ---------------------------------------------------------------------------

struct FitOptions {
    bool verbose = false;  // per-iteration line on stderr
};

struct FitResult {
    Dictionary dict;
    SparseCodes codes;
    Posterior posterior;
    std::vector<IterStats> trace;   // E[F] after each EM iteration
    int degenerate_atom_updates = 0;
    int iterations = 0;
    bool converged = false;
};

FitResult fit(const MILDataset& train, const Hyperparams& hp,
              const FitOptions& opts = {});

}  // namespace mildl
