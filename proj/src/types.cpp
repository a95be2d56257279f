#include "mildl/types.hpp"

namespace mildl {

void Dictionary::validate() const {
    if (target_atoms.rows() != background_atoms.rows())
        throw validation_error("dictionary: target/background dimension mismatch");
    if (dim() <= 0 || num_target() < 1 || num_background() < 1)
        throw validation_error("dictionary: need d > 0 and at least one atom per block");
    if (!target_atoms.allFinite() || !background_atoms.allFinite())
        throw validation_error("dictionary: non-finite atom entry");
}

void Hyperparams::validate() const {
    if (T < 1 || M < 1) throw validation_error("hyperparams: T and M must be >= 1");
    if (lambda <= 0.0) throw validation_error("hyperparams: lambda must be > 0");
    if (Gamma < 0.0) throw validation_error("hyperparams: Gamma must be >= 0");
    if (beta <= 0.0) throw validation_error("hyperparams: beta must be > 0");
    if (inner_iters < 1) throw validation_error("hyperparams: inner_iters must be >= 1");
    if (max_em_iters < 1) throw validation_error("hyperparams: max_em_iters must be >= 1");
    if (rel_tol < 0.0) throw validation_error("hyperparams: rel_tol must be >= 0");
}

double Hyperparams::resolved_psi(Index num_pos_instances,
                                 Index num_neg_instances) const {
    if (psi > 0.0) return psi;
    if (num_pos_instances <= 0)
        throw validation_error("hyperparams: cannot derive psi without positive instances");
    return double(num_neg_instances) / double(num_pos_instances);
}

}  // namespace mildl
