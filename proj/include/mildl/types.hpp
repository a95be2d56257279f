#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace mildl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

// Bad user input: malformed files, inconsistent dimensions, invalid configs.
// The CLI maps this to exit code 1; numeric failures stay std::runtime_error
// and map to exit code 2.
struct validation_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// D = [D+ D-], target block first. Columns are atoms; every column is kept
// at unit Euclidean norm after each M-step.
struct Dictionary {
    Matrix target_atoms;      // d x T
    Matrix background_atoms;  // d x M

    Index dim() const { return target_atoms.rows(); }
    Index num_target() const { return target_atoms.cols(); }
    Index num_background() const { return background_atoms.cols(); }
    Index num_atoms() const { return num_target() + num_background(); }

    // [D+ D-] as one d x (T+M) matrix.
    Matrix full() const {
        Matrix d(dim(), num_atoms());
        d << target_atoms, background_atoms;
        return d;
    }

    void validate() const;
};

// Per-instance coefficients, split into the target block (length T) and the
// background block (length M). Column i belongs to the i-th instance in bag
// traversal order. Target columns of negative-bag instances are identically
// zero at all times.
struct SparseCodes {
    Matrix target;      // T x N
    Matrix background;  // M x N

    Index num_instances() const { return target.cols(); }

    Vector full_code(Index i) const {
        Vector a(target.rows() + background.rows());
        a << target.col(i), background.col(i);
        return a;
    }

    static SparseCodes zeros(Index T, Index M, Index N) {
        return SparseCodes{Matrix::Zero(T, N), Matrix::Zero(M, N)};
    }
};

// P(z_i = 1 | x_i, theta) per instance; zero for negative-bag instances.
// P(z_i = 0) = 1 - p1.
struct Posterior {
    Vector p1;

    double p0(Index i) const { return 1.0 - p1[i]; }
};

// gamma(k, t) = Gamma * cos(angle between d_k- and d_t+), both measured on
// the previous iteration's atoms. target_atoms_old is the snapshot those
// angles were taken against; the objective's coupling term pairs the current
// background atoms with this snapshot.
struct PenaltyMatrix {
    Matrix gamma;             // M x T
    Matrix target_atoms_old;  // d x T
};

struct Hyperparams {
    int T = 1;                 // target atoms
    int M = 1;                 // background atoms
    double lambda = 1e-3;      // l1 weight
    double Gamma = 0.0;        // discriminative penalty scale
    double beta = 30.0;        // E-step residual scale
    double psi = 0.0;          // positive-instance weight; <= 0 selects
                               // (#negative instances) / (#positive instances)
    int inner_iters = 5;       // coding rounds per EM iteration
    int max_em_iters = 100;
    double rel_tol = 1e-6;     // relative change of E[F] at which EM stops
    std::uint64_t seed = 0;

    void validate() const;
    double resolved_psi(Index num_pos_instances, Index num_neg_instances) const;
};

struct IterStats {
    int iteration = 0;
    double expected_objective = 0.0;
    double max_atom_change = 0.0;  // max over atoms of ||d_new - d_old||_2
};

}  // namespace mildl
