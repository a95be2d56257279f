#include "mildl/solver.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

#include "mildl/random.hpp"

namespace mildl {

namespace {

// Denominators below this are treated as "no instance uses the atom";
// dividing by a subnormal would blow up the atom instead of flagging it.
constexpr double kDegenerateDenom = 1e-30;

constexpr int kPowerIters = 200;
constexpr double kPowerTol = 1e-6;
constexpr std::uint64_t kPowerSeed = 0x5eed0fdeadbeef01ULL;

void check_codes(const FlatView& view, const SparseCodes& codes) {
    if (codes.num_instances() != view.num_instances() ||
        codes.background.cols() != view.num_instances())
        throw validation_error("codes: instance count mismatch");
    for (Index i : view.neg_idx)
        if (codes.target.col(i).cwiseAbs().maxCoeff() != 0.0)
            throw validation_error(
                "codes: nonzero target coefficients on a negative-bag instance");
}

double power_iteration_lambda_max(const Matrix& gram) {
    const Index n = gram.rows();
    Rng rng(kPowerSeed);
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = rng.normal();
    v.normalize();

    double lam = 0.0;
    for (int it = 0; it < kPowerIters; ++it) {
        Vector w = gram * v;
        const double nw = w.norm();
        if (nw == 0.0) break;  // v in the null space; lam stays at the best estimate
        const double lam_new = v.dot(w);
        v = w / nw;
        if (it > 0 && std::abs(lam_new - lam) <= kPowerTol * std::max(std::abs(lam_new), 1e-300)) {
            lam = lam_new;
            break;
        }
        lam = lam_new;
    }
    return lam;
}

}  // namespace

FlatView flatten(const MILDataset& data) {
    FlatView view;
    const Index n = data.num_instances();
    view.X.resize(data.feature_dim, n);
    view.positive.resize(std::size_t(n));
    Index i = 0;
    for (const Bag& bag : data.bags) {
        for (Index c = 0; c < bag.size(); ++c, ++i) {
            view.X.col(i) = bag.instances.col(c);
            view.positive[std::size_t(i)] = std::uint8_t(bag.label);
            (bag.label ? view.pos_idx : view.neg_idx).push_back(i);
        }
    }
    return view;
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

namespace {

// Lloyd's algorithm with k-means++ seeding; at most max_iters sweeps.
Matrix kmeans(const Matrix& X, Index k, Rng& rng, int max_iters = 50) {
    const Index n = X.cols();
    Matrix centers(X.rows(), k);

    // k-means++ seeding
    std::vector<double> d2(std::size_t(n), std::numeric_limits<double>::infinity());
    Index first = Index(rng.next_below(std::uint64_t(n)));
    centers.col(0) = X.col(first);
    for (Index c = 1; c < k; ++c) {
        double total = 0.0;
        for (Index i = 0; i < n; ++i) {
            const double dd = (X.col(i) - centers.col(c - 1)).squaredNorm();
            d2[std::size_t(i)] = std::min(d2[std::size_t(i)], dd);
            total += d2[std::size_t(i)];
        }
        Index chosen = n - 1;
        if (total > 0.0) {
            const double r = rng.uniform01() * total;
            double acc = 0.0;
            for (Index i = 0; i < n; ++i) {
                acc += d2[std::size_t(i)];
                if (acc >= r) {
                    chosen = i;
                    break;
                }
            }
        } else {
            chosen = Index(rng.next_below(std::uint64_t(n)));
        }
        centers.col(c) = X.col(chosen);
    }

    std::vector<Index> assign(std::size_t(n), -1);
    for (int it = 0; it < max_iters; ++it) {
        bool changed = false;
        for (Index i = 0; i < n; ++i) {
            Index best = 0;
            double bd = (X.col(i) - centers.col(0)).squaredNorm();
            for (Index c = 1; c < k; ++c) {
                const double dd = (X.col(i) - centers.col(c)).squaredNorm();
                if (dd < bd) {
                    bd = dd;
                    best = c;
                }
            }
            if (assign[std::size_t(i)] != best) {
                assign[std::size_t(i)] = best;
                changed = true;
            }
        }
        if (!changed) break;
        for (Index c = 0; c < k; ++c) {
            Vector mean = Vector::Zero(X.rows());
            Index count = 0;
            for (Index i = 0; i < n; ++i)
                if (assign[std::size_t(i)] == c) {
                    mean += X.col(i);
                    ++count;
                }
            if (count > 0) centers.col(c) = mean / double(count);
            // empty cluster keeps its previous center
        }
    }
    return centers;
}

Index count_distinct_columns(const Matrix& X) {
    std::vector<Index> order(std::size_t(X.cols()));
    for (Index i = 0; i < X.cols(); ++i) order[std::size_t(i)] = i;
    auto cmp = [&](Index a, Index b) {
        for (Index r = 0; r < X.rows(); ++r) {
            if (X(r, a) < X(r, b)) return true;
            if (X(r, a) > X(r, b)) return false;
        }
        return false;
    };
    std::sort(order.begin(), order.end(), cmp);
    Index distinct = X.cols() > 0 ? 1 : 0;
    for (std::size_t i = 1; i < order.size(); ++i)
        if (cmp(order[i - 1], order[i])) ++distinct;
    return distinct;
}

}  // namespace

Dictionary init_dictionary(const MILDataset& train, const Hyperparams& hp) {
    hp.validate();
    train.validate();
    const FlatView view = flatten(train);
    const Index n_pos = Index(view.pos_idx.size());
    const Index n_neg = Index(view.neg_idx.size());
    if (Index(hp.T) > n_pos)
        throw validation_error("init: T exceeds the number of positive-bag instances");

    Matrix X_neg(train.feature_dim, n_neg);
    for (Index j = 0; j < n_neg; ++j) X_neg.col(j) = view.X.col(view.neg_idx[std::size_t(j)]);
    if (Index(hp.M) > count_distinct_columns(X_neg))
        throw validation_error("init: M exceeds the number of distinct negative instances");

    Rng rng(hp.seed);
    Dictionary dict;
    dict.target_atoms.resize(train.feature_dim, hp.T);
    dict.background_atoms.resize(train.feature_dim, hp.M);

    // Means of T disjoint random subsets of the positive-bag instances.
    const auto perm = rng.permutation(n_pos);
    const Index base = n_pos / hp.T, extra = n_pos % hp.T;
    Index at = 0;
    for (Index t = 0; t < hp.T; ++t) {
        const Index sz = base + (t < extra ? 1 : 0);
        Vector mean = Vector::Zero(train.feature_dim);
        for (Index s = 0; s < sz; ++s)
            mean += view.X.col(view.pos_idx[std::size_t(perm[std::size_t(at + s)])]);
        at += sz;
        mean /= double(sz);
        const double nrm = mean.norm();
        if (nrm == 0.0)
            throw std::runtime_error("init: a target subset mean is the zero vector");
        dict.target_atoms.col(t) = mean / nrm;
    }

    Matrix centers = kmeans(X_neg, hp.M, rng);
    for (Index k = 0; k < hp.M; ++k) {
        const double nrm = centers.col(k).norm();
        if (nrm == 0.0)
            throw std::runtime_error("init: a k-means centroid is the zero vector");
        dict.background_atoms.col(k) = centers.col(k) / nrm;
    }
    return dict;
}

// ---------------------------------------------------------------------------
// E-step and penalty
// ---------------------------------------------------------------------------

PenaltyMatrix compute_penalty(const Dictionary& dict_old, double Gamma) {
    dict_old.validate();
    PenaltyMatrix pen;
    pen.target_atoms_old = dict_old.target_atoms;
    pen.gamma.resize(dict_old.num_background(), dict_old.num_target());
    for (Index k = 0; k < dict_old.num_background(); ++k) {
        const double nk = dict_old.background_atoms.col(k).norm();
        if (nk == 0.0) throw std::runtime_error("penalty: zero-norm background atom");
        for (Index t = 0; t < dict_old.num_target(); ++t) {
            const double nt = dict_old.target_atoms.col(t).norm();
            if (nt == 0.0) throw std::runtime_error("penalty: zero-norm target atom");
            pen.gamma(k, t) =
                Gamma * dict_old.background_atoms.col(k).dot(dict_old.target_atoms.col(t)) /
                (nk * nt);
        }
    }
    return pen;
}

Posterior e_step(const FlatView& view, const Dictionary& dict,
                 const SparseCodes& codes, double beta) {
    check_codes(view, codes);
    const Index n = view.num_instances();
    Posterior post;
    post.p1 = Vector::Zero(n);
    for (Index i : view.pos_idx) {
        const double r2 =
            (view.X.col(i) - dict.background_atoms * codes.background.col(i)).squaredNorm();
        const double p0 = std::exp(-beta * r2);  // underflows to 0 for large residuals
        post.p1[i] = 1.0 - p0;
    }
    return post;
}

Posterior e_step(const MILDataset& train, const Dictionary& dict,
                 const SparseCodes& codes, double beta) {
    return e_step(flatten(train), dict, codes, beta);
}

// ---------------------------------------------------------------------------
// Atom updates
// ---------------------------------------------------------------------------

std::optional<Vector> update_target_atom(Index t, const MILDataset& train,
                                         const Dictionary& dict,
                                         const SparseCodes& codes,
                                         const Posterior& post) {
    const FlatView view = flatten(train);
    check_codes(view, codes);
    double denom = 0.0;
    Vector numer = Vector::Zero(dict.dim());
    for (Index i : view.pos_idx) {
        const double a = codes.target(t, i);
        const double p1 = post.p1[i];
        if (a == 0.0 || p1 == 0.0) continue;
        // x_i - sum_{l != t} a_il d_l+ - sum_k a_ik d_k-
        Vector r = view.X.col(i) - dict.target_atoms * codes.target.col(i) -
                   dict.background_atoms * codes.background.col(i) +
                   a * dict.target_atoms.col(t);
        numer += p1 * a * r;
        denom += p1 * a * a;
    }
    if (denom <= kDegenerateDenom) return std::nullopt;
    return numer / denom;
}

std::optional<Vector> update_background_atom(Index k, const MILDataset& train,
                                             const Dictionary& dict,
                                             const SparseCodes& codes,
                                             const Posterior& post,
                                             const PenaltyMatrix& penalty,
                                             double psi) {
    const FlatView view = flatten(train);
    check_codes(view, codes);
    double denom = 0.0;
    Vector numer = Vector::Zero(dict.dim());
    for (Index i = 0; i < view.num_instances(); ++i) {
        const double a = codes.background(k, i);
        if (a == 0.0) continue;
        // background-only residual with atom k removed
        Vector r_bg = view.X.col(i) - dict.background_atoms * codes.background.col(i) +
                      a * dict.background_atoms.col(k);
        if (view.positive[std::size_t(i)]) {
            const double p1 = post.p1[i];
            Vector r_full = r_bg - dict.target_atoms * codes.target.col(i);
            numer += psi * a * (p1 * r_full + (1.0 - p1) * r_bg);
            denom += psi * a * a;
        } else {
            numer += a * r_bg;
            denom += a * a;
        }
    }
    // discriminative pull toward orthogonality with the old target atoms
    numer -= penalty.target_atoms_old * penalty.gamma.row(k).transpose();
    if (denom <= kDegenerateDenom) return std::nullopt;
    return numer / denom;
}

// ---------------------------------------------------------------------------
// Sparse-code updates
// ---------------------------------------------------------------------------

double soft_threshold(double v, double tau) {
    const double m = std::abs(v) - tau;
    return m > 0.0 ? (v < 0.0 ? -m : m) : 0.0;
}

Vector soft_threshold(const Vector& v, double tau) {
    if (tau < 0.0) throw validation_error("soft_threshold: tau must be >= 0");
    Vector out(v.size());
    for (Index i = 0; i < v.size(); ++i) out[i] = soft_threshold(v[i], tau);
    return out;
}

double step_size(const Dictionary& dict, bool positive) {
    dict.validate();
    const Matrix gram = positive
                            ? Matrix(dict.full().transpose() * dict.full())
                            : Matrix(dict.background_atoms.transpose() * dict.background_atoms);
    const double lam = power_iteration_lambda_max(gram);
    if (!(lam > 0.0)) throw std::runtime_error("step_size: dictionary has no energy");
    return 1.0 / lam;
}

Vector code_gradient_pos(Index i, const MILDataset& train,
                         const Dictionary& dict, const SparseCodes& codes,
                         const Posterior& post) {
    const FlatView view = flatten(train);
    if (!view.positive[std::size_t(i)])
        throw validation_error("code_gradient_pos: instance is not in a positive bag");
    const Index T = dict.num_target(), M = dict.num_background();
    const double p1 = post.p1[i], p0 = 1.0 - p1;
    const Matrix D = dict.full();
    const Vector a = codes.full_code(i);
    const Vector x = view.X.col(i);

    Vector g = p1 * (D.transpose() * (D * a));
    g.tail(M) += p0 * (dict.background_atoms.transpose() *
                       (dict.background_atoms * a.tail(M)));
    g.head(T) -= p1 * (dict.target_atoms.transpose() * x);
    g.tail(M) -= dict.background_atoms.transpose() * x;
    return g;
}

Vector update_codes_pos(Index i, const MILDataset& train,
                        const Dictionary& dict, const SparseCodes& codes,
                        const Posterior& post, double lambda, double eta) {
    const Index T = dict.num_target(), M = dict.num_background();
    const double p1 = post.p1[i];
    Vector a = codes.full_code(i) - eta * code_gradient_pos(i, train, dict, codes, post);
    a.head(T) = soft_threshold(Vector(a.head(T)), lambda * p1 * eta);
    a.tail(M) = soft_threshold(Vector(a.tail(M)), lambda * eta);
    return a;
}

Vector update_codes_neg(Index i, const MILDataset& train,
                        const Dictionary& dict, const SparseCodes& codes,
                        double lambda) {
    const FlatView view = flatten(train);
    if (view.positive[std::size_t(i)])
        throw validation_error("update_codes_neg: instance is not in a negative bag");
    const Index T = dict.num_target(), M = dict.num_background();
    const double eta = step_size(dict, false);
    const Vector ab = codes.background.col(i);
    const Vector x = view.X.col(i);
    Vector step =
        ab + eta * (dict.background_atoms.transpose() * (x - dict.background_atoms * ab));
    Vector a = Vector::Zero(T + M);
    a.tail(M) = soft_threshold(step, lambda * eta);
    return a;
}

// ---------------------------------------------------------------------------
// Objectives
// ---------------------------------------------------------------------------

double objective(const MILDataset& train, const Dictionary& dict,
                 const SparseCodes& codes, const std::vector<std::uint8_t>& z,
                 const PenaltyMatrix& penalty, const Hyperparams& hp) {
    const FlatView view = flatten(train);
    check_codes(view, codes);
    if (Index(z.size()) != view.num_instances())
        throw validation_error("objective: z length mismatch");
    for (Index i : view.neg_idx)
        if (z[std::size_t(i)] != 0)
            throw validation_error("objective: z must be 0 on negative bags");
    const double psi =
        hp.resolved_psi(Index(view.pos_idx.size()), Index(view.neg_idx.size()));

    double f = 0.0;
    for (Index i = 0; i < view.num_instances(); ++i) {
        const double w = view.positive[std::size_t(i)] ? psi : 1.0;
        const double zi = double(z[std::size_t(i)]);
        const Vector r = view.X.col(i) - zi * (dict.target_atoms * codes.target.col(i)) -
                         dict.background_atoms * codes.background.col(i);
        const double l1 = zi * codes.target.col(i).lpNorm<1>() +
                          codes.background.col(i).lpNorm<1>();
        f += w * (0.5 * r.squaredNorm() + hp.lambda * l1);
    }
    f += (penalty.gamma.transpose() *
          (dict.background_atoms.transpose() * penalty.target_atoms_old))
             .trace();
    return f;
}

double expected_objective(const FlatView& view, const Dictionary& dict,
                          const SparseCodes& codes, const Posterior& post,
                          const PenaltyMatrix& penalty, double lambda,
                          double psi) {
    check_codes(view, codes);
    double f = 0.0;
    for (Index i = 0; i < view.num_instances(); ++i) {
        const Vector r_bg =
            view.X.col(i) - dict.background_atoms * codes.background.col(i);
        const double l1_bg = codes.background.col(i).lpNorm<1>();
        if (view.positive[std::size_t(i)]) {
            const double p1 = post.p1[i], p0 = 1.0 - p1;
            const Vector r_full = r_bg - dict.target_atoms * codes.target.col(i);
            const double term1 =
                0.5 * r_full.squaredNorm() +
                lambda * (codes.target.col(i).lpNorm<1>() + l1_bg);
            const double term0 = 0.5 * r_bg.squaredNorm() + lambda * l1_bg;
            f += psi * (p1 * term1 + p0 * term0);
        } else {
            f += 0.5 * r_bg.squaredNorm() + lambda * l1_bg;
        }
    }
    f += (penalty.gamma.transpose() *
          (dict.background_atoms.transpose() * penalty.target_atoms_old))
             .trace();
    return f;
}

double expected_objective(const MILDataset& train, const Dictionary& dict,
                          const SparseCodes& codes, const Posterior& post,
                          const PenaltyMatrix& penalty, const Hyperparams& hp) {
    const FlatView view = flatten(train);
    const double psi =
        hp.resolved_psi(Index(view.pos_idx.size()), Index(view.neg_idx.size()));
    return expected_objective(view, dict, codes, post, penalty, hp.lambda, psi);
}

// ---------------------------------------------------------------------------
// Batched coding rounds
// ---------------------------------------------------------------------------

CodingContext make_coding_context(const FlatView& view, const Dictionary& dict) {
    CodingContext ctx;
    const Matrix D = dict.full();
    ctx.gram_full = D.transpose() * D;
    const Index M = dict.num_background();
    ctx.gram_bg = ctx.gram_full.bottomRightCorner(M, M);
    ctx.dtx = D.transpose() * view.X;
    ctx.eta_pos = 1.0 / power_iteration_lambda_max(ctx.gram_full);
    ctx.eta_neg = 1.0 / power_iteration_lambda_max(ctx.gram_bg);
    return ctx;
}

void code_round_pos(const FlatView& view, const Dictionary& dict,
                    const CodingContext& ctx, const Posterior& post,
                    double lambda, SparseCodes& codes) {
    const Index T = dict.num_target(), M = dict.num_background();
    const double eta = ctx.eta_pos;
    Vector a(T + M), g(T + M);
    for (Index i : view.pos_idx) {
        const double p1 = post.p1[i], p0 = 1.0 - p1;
        a.head(T) = codes.target.col(i);
        a.tail(M) = codes.background.col(i);
        g = p1 * (ctx.gram_full * a);
        g.tail(M) += p0 * (ctx.gram_bg * a.tail(M));
        g.head(T) -= p1 * ctx.dtx.col(i).head(T);
        g.tail(M) -= ctx.dtx.col(i).tail(M);
        a -= eta * g;
        const double tau_t = lambda * p1 * eta, tau_b = lambda * eta;
        for (Index t = 0; t < T; ++t)
            codes.target(t, i) = soft_threshold(a[t], tau_t);
        for (Index k = 0; k < M; ++k)
            codes.background(k, i) = soft_threshold(a[T + k], tau_b);
    }
}

void code_round_neg(const FlatView& view, const Dictionary& dict,
                    const CodingContext& ctx, double lambda,
                    SparseCodes& codes) {
    const Index M = dict.num_background();
    const double eta = ctx.eta_neg, tau = lambda * eta;
    Vector step(M);
    for (Index i : view.neg_idx) {
        step = codes.background.col(i) +
               eta * (ctx.dtx.col(i).tail(M) - ctx.gram_bg * codes.background.col(i));
        for (Index k = 0; k < M; ++k)
            codes.background(k, i) = soft_threshold(step[k], tau);
        codes.target.col(i).setZero();
    }
}

// ---------------------------------------------------------------------------
// M-step atom sweep. Maintains the full residual matrix R = X - D A and the
// target reconstruction P = D+ A+ so each atom update costs O(d N).
// ---------------------------------------------------------------------------

namespace {

struct MStepStats {
    int degenerate = 0;
    double max_atom_change = 0.0;
};

MStepStats m_step_atoms(const FlatView& view, Dictionary& dict,
                        const SparseCodes& codes, const Posterior& post,
                        const PenaltyMatrix& penalty, double psi) {
    MStepStats stats;
    const Index n = view.num_instances();
    const Index T = dict.num_target(), M = dict.num_background();

    Matrix R = view.X - dict.target_atoms * codes.target -
               dict.background_atoms * codes.background;
    Matrix P = dict.target_atoms * codes.target;  // zero on negative columns

    // per-instance weights: psi on positive bags, 1 on negative bags
    Vector w(n), p0(n);
    for (Index i = 0; i < n; ++i) {
        w[i] = view.positive[std::size_t(i)] ? psi : 1.0;
        p0[i] = 1.0 - post.p1[i];
    }

    for (Index t = 0; t < T; ++t) {
        const auto a_t = codes.target.row(t).transpose();
        const Vector coef = post.p1.cwiseProduct(a_t);  // zero on negatives
        const double denom = coef.dot(a_t);
        if (denom <= kDegenerateDenom) {
            ++stats.degenerate;
            continue;
        }
        Vector raw = (R * coef) / denom + dict.target_atoms.col(t);
        const double nrm = raw.norm();
        if (nrm == 0.0) {
            ++stats.degenerate;
            continue;
        }
        raw /= nrm;
        const Vector delta = dict.target_atoms.col(t) - raw;
        stats.max_atom_change = std::max(stats.max_atom_change, delta.norm());
        R += delta * a_t.transpose();
        P -= delta * a_t.transpose();
        dict.target_atoms.col(t) = raw;
    }

    for (Index k = 0; k < M; ++k) {
        const auto a_k = codes.background.row(k).transpose();
        const Vector wa = w.cwiseProduct(a_k);
        const double denom = wa.dot(a_k);
        if (denom <= kDegenerateDenom) {
            ++stats.degenerate;
            continue;
        }
        // positive terms: w a (p1 r_full + p0 r_bg) = w a (r_full + p0 P);
        // negative columns of P are zero, so the P term is harmless there.
        Vector numer = R * wa + P * wa.cwiseProduct(p0) -
                       penalty.target_atoms_old * penalty.gamma.row(k).transpose();
        Vector raw = numer / denom + dict.background_atoms.col(k);
        const double nrm = raw.norm();
        if (nrm == 0.0) {
            ++stats.degenerate;
            continue;
        }
        raw /= nrm;
        const Vector delta = dict.background_atoms.col(k) - raw;
        stats.max_atom_change = std::max(stats.max_atom_change, delta.norm());
        R += delta * a_k.transpose();
        dict.background_atoms.col(k) = raw;
    }
    return stats;
}

}  // namespace

// ---------------------------------------------------------------------------
// EM loop
// ---------------------------------------------------------------------------

FitResult fit(const MILDataset& train, const Hyperparams& hp,
              const FitOptions& opts) {
    hp.validate();
    train.validate();
    const FlatView view = flatten(train);
    const Index n = view.num_instances();
    const double psi =
        hp.resolved_psi(Index(view.pos_idx.size()), Index(view.neg_idx.size()));

    FitResult res;
    res.dict = init_dictionary(train, hp);
    res.codes = SparseCodes::zeros(hp.T, hp.M, n);

    // Initial codes: lasso warm-up against the initial dictionary, treating
    // every positive-bag instance as target.
    {
        Posterior assume_target;
        assume_target.p1 = Vector::Zero(n);
        for (Index i : view.pos_idx) assume_target.p1[i] = 1.0;
        const CodingContext ctx = make_coding_context(view, res.dict);
        for (int q = 0; q < hp.inner_iters; ++q) {
            code_round_pos(view, res.dict, ctx, assume_target, hp.lambda, res.codes);
            code_round_neg(view, res.dict, ctx, hp.lambda, res.codes);
        }
    }

    double prev_ef = std::numeric_limits<double>::quiet_NaN();
    for (int l = 1; l <= hp.max_em_iters; ++l) {
        res.posterior = e_step(view, res.dict, res.codes, hp.beta);
        const PenaltyMatrix penalty = compute_penalty(res.dict, hp.Gamma);

        const auto mstats =
            m_step_atoms(view, res.dict, res.codes, res.posterior, penalty, psi);
        res.degenerate_atom_updates += mstats.degenerate;

        const CodingContext ctx = make_coding_context(view, res.dict);
        for (int q = 0; q < hp.inner_iters; ++q) {
            code_round_pos(view, res.dict, ctx, res.posterior, hp.lambda, res.codes);
            code_round_neg(view, res.dict, ctx, hp.lambda, res.codes);
        }

        const double ef = expected_objective(view, res.dict, res.codes,
                                             res.posterior, penalty, hp.lambda, psi);
        if (!std::isfinite(ef))
            throw std::runtime_error("fit: expected objective became non-finite at "
                                     "iteration " + std::to_string(l));
        res.trace.push_back({l, ef, mstats.max_atom_change});
        res.iterations = l;
        if (opts.verbose)
            std::cerr << "iter " << l << "  E[F] " << ef << "  max atom change "
                      << mstats.max_atom_change << "\n";

        if (l > 1 &&
            std::abs(ef - prev_ef) / std::max(std::abs(prev_ef), 1e-12) < hp.rel_tol) {
            res.converged = true;
            break;
        }
        prev_ef = ef;
    }
    if (res.degenerate_atom_updates > 0)
        std::cerr << "fit: " << res.degenerate_atom_updates
                  << " atom update(s) skipped (no instance used the atom)\n";
    return res;
}

}  // namespace mildl
