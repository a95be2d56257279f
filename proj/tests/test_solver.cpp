#include <doctest.h>

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "mildl/eval.hpp"
#include "mildl/solver.hpp"

#include "oracles.hpp"
#include "test_util.hpp"

using namespace mildl;
using testing_util::RandomProblem;
using testing_util::random_problem;
using testing_util::random_unit_columns;
using testing_util::to_oracle;

namespace {

MILDataset single_instance_dataset(const Vector& x, int label) {
    MILDataset data;
    data.feature_dim = x.size();
    Bag bag;
    bag.label = label;
    bag.instances = x;
    data.bags.push_back(bag);
    return data;
}

}  // namespace

TEST_CASE("compute_penalty: cosine cases") {
    Dictionary d;
    d.target_atoms = Matrix::Zero(3, 1);
    d.target_atoms(0, 0) = 1.0;
    d.background_atoms = Matrix::Zero(3, 3);
    d.background_atoms(1, 0) = 1.0;   // orthogonal
    d.background_atoms(0, 1) = 1.0;   // equal
    d.background_atoms(0, 2) = -1.0;  // negated

    const double Gamma = 0.7;
    const PenaltyMatrix pen = compute_penalty(d, Gamma);
    CHECK(pen.gamma(0, 0) == doctest::Approx(0.0));
    CHECK(pen.gamma(1, 0) == doctest::Approx(Gamma));
    CHECK(pen.gamma(2, 0) == doctest::Approx(-Gamma));
    // sign(gamma) = sign(<d_k-, d_t+>) makes the coupling nonnegative
    const double inner = d.background_atoms.col(2).dot(d.target_atoms.col(0));
    CHECK(pen.gamma(2, 0) * inner == doctest::Approx(Gamma));
}

TEST_CASE("compute_penalty: coupling term is never negative") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const RandomProblem p = random_problem(seed);
        const PenaltyMatrix pen = compute_penalty(p.dict, p.hp.Gamma);
        for (Index k = 0; k < p.dict.num_background(); ++k)
            for (Index t = 0; t < p.dict.num_target(); ++t) {
                const double inner = p.dict.background_atoms.col(k).dot(
                    pen.target_atoms_old.col(t));
                CHECK(pen.gamma(k, t) * inner >= -1e-15);
            }
    }
}

TEST_CASE("e_step: piecewise cases") {
    Rng rng(1);
    const Index d = 4;
    MILDataset data;
    data.feature_dim = d;
    Bag pos, neg;
    pos.label = 1;
    pos.instances = Matrix::Zero(d, 2);
    pos.instances.col(0) << 1, 2, 0, 0;  // ||x||^2 = 5
    neg.label = 0;
    neg.instances = Matrix::Zero(d, 1);
    neg.instances.col(0) << 3, 0, 0, 0;
    data.bags = {pos, neg};

    Dictionary dict;
    dict.target_atoms = random_unit_columns(rng, d, 1);
    dict.background_atoms = Matrix::Identity(d, d).leftCols(2);
    SparseCodes codes = SparseCodes::zeros(1, 2, 3);

    const double beta = 30.0;
    SUBCASE("negative instances pinned to zero") {
        const Posterior post = e_step(data, dict, codes, beta);
        CHECK(post.p1[2] == 0.0);
    }
    SUBCASE("zero residual gives p1 = 0") {
        // make instance 1 perfectly reconstructed by the background atoms
        data.bags[0].instances.col(1) << 0.3, 0.4, 0, 0;
        codes.background.col(1) << 0.3, 0.4;
        const Posterior post = e_step(data, dict, codes, beta);
        CHECK(post.p1[1] == doctest::Approx(0.0));
    }
    SUBCASE("known residual matches a scalar evaluation") {
        const Posterior post = e_step(data, dict, codes, beta);
        // codes are zero, so the residual is x itself
        const double r2 = 1.0 * 1 + 2.0 * 2;
        CHECK(post.p1[0] == doctest::Approx(1.0 - std::exp(-beta * r2)).epsilon(1e-14));
    }
    SUBCASE("p0 and p1 sum to one exactly") {
        const Posterior post = e_step(data, dict, codes, beta);
        for (Index i = 0; i < 3; ++i)
            CHECK((1.0 - post.p1[i]) + post.p1[i] == 1.0);
    }
}

TEST_CASE("update_target_atom: single-instance collapse") {
    Vector x(3);
    x << 1, 2, 3;
    MILDataset data = single_instance_dataset(x, 1);
    Dictionary dict;
    Rng rng(2);
    dict.target_atoms = random_unit_columns(rng, 3, 1);
    dict.background_atoms = random_unit_columns(rng, 3, 2);
    SparseCodes codes = SparseCodes::zeros(1, 2, 1);
    codes.target(0, 0) = 1.0;
    Posterior post;
    post.p1 = Vector::Ones(1);

    const auto atom = update_target_atom(0, data, dict, codes, post);
    REQUIRE(atom.has_value());
    CHECK((*atom - x).norm() == doctest::Approx(0.0));
}

TEST_CASE("update_target_atom: zero posterior flags degeneracy") {
    const RandomProblem p = random_problem(3);
    Posterior dead;
    dead.p1 = Vector::Zero(p.data.num_instances());
    const auto atom = update_target_atom(0, p.data, p.dict, p.codes, dead);
    CHECK(!atom.has_value());
}

TEST_CASE("update_background_atom: least-squares collapse on one negative instance") {
    Vector x(3);
    x << -1, 0.5, 2;
    MILDataset data = single_instance_dataset(x, 0);
    Dictionary dict;
    Rng rng(4);
    dict.target_atoms = random_unit_columns(rng, 3, 1);
    dict.background_atoms = random_unit_columns(rng, 3, 2);
    SparseCodes codes = SparseCodes::zeros(1, 2, 1);
    codes.background(0, 0) = 1.0;
    Posterior post;
    post.p1 = Vector::Zero(1);
    const PenaltyMatrix pen = compute_penalty(dict, 0.0);

    const auto atom = update_background_atom(0, data, dict, codes, post, pen, 1.0);
    REQUIRE(atom.has_value());
    CHECK((*atom - x).norm() == doctest::Approx(0.0));
}

TEST_CASE("update_background_atom: matches a stacked least-squares solve when "
          "Gamma = 0 and posteriors are hard") {
    for (std::uint64_t seed = 10; seed < 15; ++seed) {
        RandomProblem p = random_problem(seed, 6, 2, 3);
        // hard posteriors, no penalty
        for (Index i = 0; i < p.post.p1.size(); ++i)
            if (p.post.p1[i] > 0.0) p.post.p1[i] = p.post.p1[i] > 0.5 ? 1.0 : 0.0;
        const PenaltyMatrix pen = compute_penalty(p.dict_old, 0.0);
        const Index k = 0;
        const auto atom = update_background_atom(k, p.data, p.dict, p.codes,
                                                 p.post, pen, p.hp.psi);
        if (!atom.has_value()) continue;

        // direct normal-equation route: stack sqrt(w_i) a_ik rows against
        // sqrt(w_i) a_ik-weighted residuals-without-atom-k
        const FlatView view = flatten(p.data);
        const Index d = view.X.rows();
        double ata = 0.0;
        Vector atb = Vector::Zero(d);
        for (Index i = 0; i < view.num_instances(); ++i) {
            const double a = p.codes.background(k, i);
            if (a == 0.0) continue;
            const double w = view.positive[std::size_t(i)] ? p.hp.psi : 1.0;
            const int z = view.positive[std::size_t(i)] && p.post.p1[i] == 1.0 ? 1 : 0;
            Vector r = view.X.col(i) -
                       p.dict.background_atoms * p.codes.background.col(i) +
                       a * p.dict.background_atoms.col(k);
            if (z) r -= p.dict.target_atoms * p.codes.target.col(i);
            ata += w * a * a;
            atb += w * a * r;
        }
        const Vector direct = atb / ata;
        CHECK((*atom - direct).norm() < 1e-10);
    }
}

TEST_CASE("atom updates: finite-difference stationarity on random problems") {
    int tested_t = 0, tested_b = 0;
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        RandomProblem p = random_problem(seed, 7, 3, 3);
        oracle::Problem o = to_oracle(p);
        const double h = 1e-5;

        const auto t_atom = update_target_atom(0, p.data, p.dict, p.codes, p.post);
        if (t_atom.has_value()) {
            ++tested_t;
            auto f = [&](const std::vector<double>& v) {
                oracle::Problem q = o;
                q.dplus[0] = v;
                return oracle::expected_objective(q);
            };
            std::vector<double> v(t_atom->data(), t_atom->data() + t_atom->size());
            const auto g = oracle::fd_gradient(f, v, h);
            double norm = 0.0;
            for (double gj : g) norm += gj * gj;
            CHECK(std::sqrt(norm) < 1e-6);
        }

        const auto b_atom = update_background_atom(0, p.data, p.dict, p.codes,
                                                   p.post, p.penalty, p.hp.psi);
        if (b_atom.has_value()) {
            ++tested_b;
            auto f = [&](const std::vector<double>& v) {
                oracle::Problem q = o;
                q.dminus[0] = v;
                return oracle::expected_objective(q);
            };
            std::vector<double> v(b_atom->data(), b_atom->data() + b_atom->size());
            const auto g = oracle::fd_gradient(f, v, h);
            double norm = 0.0;
            for (double gj : g) norm += gj * gj;
            CHECK(std::sqrt(norm) < 1e-6);
        }
    }
    CHECK(tested_t >= 5);
    CHECK(tested_b >= 5);
}

TEST_CASE("code_gradient_pos: hard-posterior limits") {
    RandomProblem p = random_problem(21, 6, 2, 3);
    const FlatView view = flatten(p.data);
    const Index i = view.pos_idx.front();
    const Index T = p.dict.num_target(), M = p.dict.num_background();

    SUBCASE("p1 = 1 is the plain least-squares gradient") {
        p.post.p1[i] = 1.0;
        const Vector g = code_gradient_pos(i, p.data, p.dict, p.codes, p.post);
        const Matrix D = p.dict.full();
        const Vector ref = D.transpose() * (D * p.codes.full_code(i) - view.X.col(i));
        CHECK((g - ref).norm() < 1e-12);
    }
    SUBCASE("p1 = 0 removes the data pull from the target block") {
        p.post.p1[i] = 0.0;
        const Vector g = code_gradient_pos(i, p.data, p.dict, p.codes, p.post);
        CHECK(g.head(T).cwiseAbs().maxCoeff() == 0.0);
        const Vector ref = p.dict.background_atoms.transpose() *
                           (p.dict.background_atoms * p.codes.background.col(i) -
                            view.X.col(i));
        CHECK((g.tail(M) - ref).norm() < 1e-12);
    }
}

TEST_CASE("code_gradient_pos: matches finite differences of the smooth part") {
    for (std::uint64_t seed = 30; seed < 40; ++seed) {
        RandomProblem p = random_problem(seed, 10, 3, 4, {0.0, 0.3, 1.0});
        const FlatView view = flatten(p.data);
        const Index i = view.pos_idx.front();
        const Index T = p.dict.num_target(), M = p.dict.num_background();
        const Vector g = code_gradient_pos(i, p.data, p.dict, p.codes, p.post);

        oracle::Problem o = to_oracle(p);
        auto f = [&](const std::vector<double>& v) {
            oracle::Problem q = o;
            for (Index t = 0; t < T; ++t) q.aplus[std::size_t(i)][std::size_t(t)] = v[std::size_t(t)];
            for (Index k = 0; k < M; ++k)
                q.aminus[std::size_t(i)][std::size_t(k)] = v[std::size_t(T + k)];
            return oracle::expected_objective(q, /*include_l1=*/false);
        };
        const Vector a = p.codes.full_code(i);
        std::vector<double> v(a.data(), a.data() + a.size());
        const auto fd = oracle::fd_gradient(f, v, 1e-5);
        Vector fd_v(g.size());
        for (Index j = 0; j < g.size(); ++j) fd_v[j] = fd[std::size_t(j)] / p.hp.psi;
        CHECK((g - fd_v).norm() / std::max(fd_v.norm(), 1e-8) < 1e-6);
    }
}

TEST_CASE("step_size: closed cases and dense-eigensolver oracle") {
    SUBCASE("orthonormal columns give eta = 1") {
        Dictionary d;
        d.target_atoms = Matrix::Identity(8, 2);
        d.background_atoms = Matrix::Identity(8, 8).middleCols(2, 3);
        CHECK(step_size(d, true) == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(step_size(d, false) == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("single atom gives eta = 1 after normalization") {
        Rng rng(7);
        Dictionary d;
        d.target_atoms = random_unit_columns(rng, 5, 1);
        d.background_atoms = random_unit_columns(rng, 5, 1);
        CHECK(step_size(d, false) == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("random 10x6 dictionary vs dense eigensolver") {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            Rng rng(100 + seed);
            Dictionary d;
            d.target_atoms = random_unit_columns(rng, 10, 2);
            d.background_atoms = random_unit_columns(rng, 10, 4);
            const Matrix D = d.full();
            Eigen::SelfAdjointEigenSolver<Matrix> eig(D.transpose() * D);
            const double ref = 1.0 / eig.eigenvalues().maxCoeff();
            CHECK(std::abs(step_size(d, true) - ref) / ref < 1e-5);
        }
    }
}

TEST_CASE("soft_threshold: formula cases and prox oracle") {
    CHECK(soft_threshold(1.2, 0.5) == doctest::Approx(0.7));
    CHECK(soft_threshold(-0.3, 0.5) == 0.0);
    Vector v(4);
    v << -2.0, -0.1, 0.4, 3.0;
    CHECK((soft_threshold(v, 0.0) - v).norm() == 0.0);
    CHECK_THROWS_AS(soft_threshold(v, -1.0), validation_error);

    Rng rng(9);
    for (int i = 0; i < 50; ++i) {
        const double x = 6.0 * rng.uniform01() - 3.0;
        const double tau = 2.0 * rng.uniform01();
        CHECK(std::abs(soft_threshold(x, tau) - oracle::prox_bruteforce(x, tau)) < 1e-8);
    }
}

TEST_CASE("update_codes_pos: structural cases") {
    RandomProblem p = random_problem(50, 6, 2, 3);
    const FlatView view = flatten(p.data);
    const Index i = view.pos_idx.front();
    const double eta = step_size(p.dict, true);

    SUBCASE("lambda = 0 is a pure gradient step") {
        const Vector g = code_gradient_pos(i, p.data, p.dict, p.codes, p.post);
        const Vector expected = p.codes.full_code(i) - eta * g;
        const Vector got = update_codes_pos(i, p.data, p.dict, p.codes, p.post, 0.0, eta);
        CHECK((got - expected).norm() < 1e-14);
    }
    SUBCASE("zero posterior keeps an all-zero target block at zero") {
        p.post.p1[i] = 0.0;
        p.codes.target.col(i).setZero();
        const Vector got =
            update_codes_pos(i, p.data, p.dict, p.codes, p.post, p.hp.lambda, eta);
        CHECK(got.head(p.dict.num_target()).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("update_codes_pos: per-step objective never increases on a toy problem") {
    RandomProblem p = random_problem(51, 5, 2, 1);
    const FlatView view = flatten(p.data);
    const Index i = view.pos_idx.front();
    const double eta = step_size(p.dict, true);
    double prev = expected_objective(p.data, p.dict, p.codes, p.post, p.penalty, p.hp);
    for (int q = 0; q < 10; ++q) {
        const Vector a =
            update_codes_pos(i, p.data, p.dict, p.codes, p.post, p.hp.lambda, eta);
        p.codes.target.col(i) = a.head(p.dict.num_target());
        p.codes.background.col(i) = a.tail(p.dict.num_background());
        const double cur =
            expected_objective(p.data, p.dict, p.codes, p.post, p.penalty, p.hp);
        CHECK(cur <= prev + 1e-12);
        prev = cur;
    }
}

TEST_CASE("update_codes_neg: fixed point, pinned target block, lasso oracle") {
    Rng rng(60);
    const Index d = 8, M = 3;
    Dictionary dict;
    dict.target_atoms = random_unit_columns(rng, d, 2);
    // orthonormal background atoms so lambda_max(D-^T D-) is exactly 1
    Matrix gauss(d, M);
    for (Index c = 0; c < M; ++c)
        for (Index r = 0; r < d; ++r) gauss(r, c) = rng.normal();
    Eigen::HouseholderQR<Matrix> qr(gauss);
    dict.background_atoms = Matrix(qr.householderQ()).leftCols(M);

    Vector alpha_true(M);
    alpha_true << 0.8, -0.5, 0.3;
    const Vector x = dict.background_atoms * alpha_true;
    MILDataset data = single_instance_dataset(x, 0);

    SUBCASE("exact solution is a fixed point at lambda = 0") {
        SparseCodes codes = SparseCodes::zeros(2, M, 1);
        codes.background.col(0) = alpha_true;
        const Vector a = update_codes_neg(0, data, dict, codes, 0.0);
        CHECK((a.tail(M) - alpha_true).norm() < 1e-12);
    }
    SUBCASE("target block stays zero across steps") {
        SparseCodes codes = SparseCodes::zeros(2, M, 1);
        for (int q = 0; q < 7; ++q) {
            const Vector a = update_codes_neg(0, data, dict, codes, 0.05);
            CHECK(a.head(2).cwiseAbs().maxCoeff() == 0.0);
            codes.target.col(0) = a.head(2);
            codes.background.col(0) = a.tail(M);
        }
    }
    SUBCASE("matches the reference lasso solver at matched iteration counts") {
        SparseCodes codes = SparseCodes::zeros(2, M, 1);
        const double lambda = 0.07;
        const int iters = 25;
        for (int q = 0; q < iters; ++q) {
            const Vector a = update_codes_neg(0, data, dict, codes, lambda);
            codes.background.col(0) = a.tail(M);
        }
        std::vector<std::vector<double>> D(static_cast<std::size_t>(M), std::vector<double>(static_cast<std::size_t>(d)));
        for (Index k = 0; k < M; ++k)
            for (Index r = 0; r < d; ++r)
                D[std::size_t(k)][std::size_t(r)] = dict.background_atoms(r, k);
        const std::vector<double> xs(x.data(), x.data() + d);
        const auto ref = oracle::lasso_ista(xs, D, lambda, 1.0, iters,
                                            std::vector<double>(std::size_t(M), 0.0));
        for (Index k = 0; k < M; ++k)
            CHECK(std::abs(codes.background(k, 0) - ref[std::size_t(k)]) < 1e-10);
    }
}

TEST_CASE("objective: closed-form cases") {
    SUBCASE("perfect reconstruction with lambda -> 0 and Gamma = 0") {
        Rng rng(70);
        Dictionary dict;
        dict.target_atoms = random_unit_columns(rng, 4, 1);
        dict.background_atoms = random_unit_columns(rng, 4, 2);
        MILDataset data;
        data.feature_dim = 4;
        Bag pos, neg;
        pos.label = 1;
        pos.instances = dict.target_atoms.col(0) + dict.background_atoms.col(1);
        neg.label = 0;
        neg.instances = 0.5 * dict.background_atoms.col(0);
        data.bags = {pos, neg};
        SparseCodes codes = SparseCodes::zeros(1, 2, 2);
        codes.target(0, 0) = 1.0;
        codes.background(1, 0) = 1.0;
        codes.background(0, 1) = 0.5;
        Hyperparams hp;
        hp.T = 1;
        hp.M = 2;
        hp.lambda = 0.0;
        hp.Gamma = 0.0;
        hp.psi = 1.0;
        const PenaltyMatrix pen = compute_penalty(dict, 0.0);
        const std::vector<std::uint8_t> z = {1, 0};
        CHECK(objective(data, dict, codes, z, pen, hp) == doctest::Approx(0.0));
    }
    SUBCASE("single negative instance with a zero code") {
        Vector x(3);
        x << 2, 0, 1;
        MILDataset data = single_instance_dataset(x, 0);
        Rng rng(71);
        Dictionary dict;
        dict.target_atoms = random_unit_columns(rng, 3, 1);
        dict.background_atoms = random_unit_columns(rng, 3, 1);
        SparseCodes codes = SparseCodes::zeros(1, 1, 1);
        Hyperparams hp;
        hp.psi = 1.0;
        const PenaltyMatrix pen = compute_penalty(dict, 0.0);
        CHECK(objective(data, dict, codes, {0}, pen, hp) ==
              doctest::Approx(0.5 * x.squaredNorm()));
    }
}

TEST_CASE("objective and expected_objective match the literal transcriptions") {
    Rng zrng(80);
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        RandomProblem p = random_problem(seed);
        const oracle::Problem o = to_oracle(p);
        const FlatView view = flatten(p.data);

        std::vector<std::uint8_t> z(std::size_t(view.num_instances()), 0);
        std::vector<int> z_int(z.size(), 0);
        for (Index i : view.pos_idx) {
            z[std::size_t(i)] = std::uint8_t(zrng.next_below(2));
            z_int[std::size_t(i)] = z[std::size_t(i)];
        }
        const double f = objective(p.data, p.dict, p.codes, z, p.penalty, p.hp);
        const double f_ref = oracle::objective(o, z_int);
        CHECK(std::abs(f - f_ref) / std::max(std::abs(f_ref), 1e-12) < 1e-10);

        const double ef =
            expected_objective(p.data, p.dict, p.codes, p.post, p.penalty, p.hp);
        const double ef_ref = oracle::expected_objective(o);
        CHECK(std::abs(ef - ef_ref) / std::max(std::abs(ef_ref), 1e-12) < 1e-10);
    }
}

TEST_CASE("expected_objective: degenerate and two-point expectations") {
    RandomProblem p = random_problem(90);
    const FlatView view = flatten(p.data);

    SUBCASE("hard posteriors reduce to the objective at that z") {
        std::vector<std::uint8_t> z(std::size_t(view.num_instances()), 0);
        for (Index i : view.pos_idx) {
            p.post.p1[i] = p.post.p1[i] > 0.5 ? 1.0 : 0.0;
            z[std::size_t(i)] = std::uint8_t(p.post.p1[i]);
        }
        CHECK(expected_objective(p.data, p.dict, p.codes, p.post, p.penalty, p.hp) ==
              doctest::Approx(objective(p.data, p.dict, p.codes, z, p.penalty, p.hp))
                  .epsilon(1e-12));
    }
    SUBCASE("p1 = 0.5 averages the two completions of that instance") {
        for (Index i : view.pos_idx) p.post.p1[i] = 0.0;
        const Index i = view.pos_idx.front();
        std::vector<std::uint8_t> z0(std::size_t(view.num_instances()), 0);
        std::vector<std::uint8_t> z1 = z0;
        z1[std::size_t(i)] = 1;
        p.post.p1[i] = 0.5;
        const double ef =
            expected_objective(p.data, p.dict, p.codes, p.post, p.penalty, p.hp);
        const double f0 = objective(p.data, p.dict, p.codes, z0, p.penalty, p.hp);
        const double f1 = objective(p.data, p.dict, p.codes, z1, p.penalty, p.hp);
        CHECK(ef == doctest::Approx(0.5 * (f0 + f1)).epsilon(1e-12));
    }
}

TEST_CASE("codes with a nonzero target block on a negative instance are rejected") {
    RandomProblem p = random_problem(95);
    const FlatView view = flatten(p.data);
    p.codes.target(0, view.neg_idx.front()) = 0.5;
    CHECK_THROWS_AS(
        expected_objective(p.data, p.dict, p.codes, p.post, p.penalty, p.hp),
        validation_error);
}

TEST_CASE("fit: one EM iteration equals the per-op sequence") {
    SynthSpec spec;
    spec.seed = 11;
    spec.noise_sigma = 0.02;
    const SynthProblem prob = synth_generate(spec);
    Hyperparams hp;
    hp.T = 2;
    hp.M = 5;
    hp.lambda = 0.01;
    hp.Gamma = 0.2;
    hp.beta = 20.0;
    hp.inner_iters = 3;
    hp.max_em_iters = 1;
    hp.seed = 5;

    const FitResult got = fit(prob.data, hp);

    // replay: init, lasso warm-up, E-step, penalty, sequential atom updates
    // with immediate normalization, then inner code rounds
    const FlatView view = flatten(prob.data);
    const double psi = hp.resolved_psi(Index(view.pos_idx.size()),
                                       Index(view.neg_idx.size()));
    Dictionary dict = init_dictionary(prob.data, hp);
    SparseCodes codes = SparseCodes::zeros(hp.T, hp.M, view.num_instances());
    Posterior ones;
    ones.p1 = Vector::Zero(view.num_instances());
    for (Index i : view.pos_idx) ones.p1[i] = 1.0;
    {
        const CodingContext ctx = make_coding_context(view, dict);
        for (int q = 0; q < hp.inner_iters; ++q) {
            code_round_pos(view, dict, ctx, ones, hp.lambda, codes);
            code_round_neg(view, dict, ctx, hp.lambda, codes);
        }
    }
    const Posterior post = e_step(prob.data, dict, codes, hp.beta);
    const PenaltyMatrix pen = compute_penalty(dict, hp.Gamma);
    for (Index t = 0; t < hp.T; ++t) {
        const auto atom = update_target_atom(t, prob.data, dict, codes, post);
        if (atom.has_value()) dict.target_atoms.col(t) = atom->normalized();
    }
    for (Index k = 0; k < hp.M; ++k) {
        const auto atom =
            update_background_atom(k, prob.data, dict, codes, post, pen, psi);
        if (atom.has_value()) dict.background_atoms.col(k) = atom->normalized();
    }
    for (int q = 0; q < hp.inner_iters; ++q) {
        for (Index i : view.pos_idx) {
            const double eta = step_size(dict, true);
            const Vector a =
                update_codes_pos(i, prob.data, dict, codes, post, hp.lambda, eta);
            codes.target.col(i) = a.head(hp.T);
            codes.background.col(i) = a.tail(hp.M);
        }
        for (Index i : view.neg_idx) {
            const Vector a = update_codes_neg(i, prob.data, dict, codes, hp.lambda);
            codes.background.col(i) = a.tail(hp.M);
        }
    }

    CHECK((got.dict.target_atoms - dict.target_atoms).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((got.dict.background_atoms - dict.background_atoms).cwiseAbs().maxCoeff() <
          1e-9);
    CHECK((got.codes.target - codes.target).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((got.codes.background - codes.background).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("fit: invariants and determinism") {
    SynthSpec spec;
    spec.seed = 3;
    spec.noise_sigma = 0.01;
    spec.targets_per_pos_bag = 2;
    const SynthProblem prob = synth_generate(spec);
    Hyperparams hp;
    hp.T = 2;
    hp.M = 5;
    hp.lambda = 1e-3;
    hp.Gamma = 0.1;
    hp.beta = 25.0;
    hp.max_em_iters = 30;
    hp.seed = 42;

    const FitResult a = fit(prob.data, hp);
    const FitResult b = fit(prob.data, hp);
    CHECK((a.dict.full() - b.dict.full()).cwiseAbs().maxCoeff() == 0.0);

    for (Index c = 0; c < a.dict.num_target(); ++c)
        CHECK(std::abs(a.dict.target_atoms.col(c).norm() - 1.0) < 1e-12);
    for (Index c = 0; c < a.dict.num_background(); ++c)
        CHECK(std::abs(a.dict.background_atoms.col(c).norm() - 1.0) < 1e-12);

    const FlatView view = flatten(prob.data);
    for (Index i : view.neg_idx) {
        CHECK(a.posterior.p1[i] == 0.0);
        CHECK(a.codes.target.col(i).cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK(a.trace.size() == std::size_t(a.iterations));
}

TEST_CASE("fit: recovers planted target atoms on a noiseless problem") {
    SynthSpec spec;
    spec.seed = 1;
    spec.targets_per_pos_bag = 2;
    Hyperparams hp;
    hp.T = 2;
    hp.M = 5;
    hp.lambda = 1e-3;
    hp.Gamma = 0.1;
    hp.beta = 25.0;
    hp.inner_iters = 5;
    hp.max_em_iters = 60;
    hp.seed = 1;

    const SynthProblem prob = synth_generate(spec);
    const FitResult res = fit(prob.data, hp);
    const auto cosines =
        matched_abs_cosines(res.dict.target_atoms, prob.target_atoms);
    for (double c : cosines) CHECK(c > 0.95);
}

TEST_CASE("fit: E[F] is non-increasing over inner rounds at a frozen posterior") {
    SynthSpec spec;
    spec.seed = 8;
    spec.noise_sigma = 0.05;
    const SynthProblem prob = synth_generate(spec);
    Hyperparams hp;
    hp.T = 2;
    hp.M = 5;
    hp.seed = 8;
    Hyperparams warm_hp = hp;
    warm_hp.max_em_iters = 3;
    const FitResult warm = fit(prob.data, warm_hp);

    const FlatView view = flatten(prob.data);
    Dictionary dict = warm.dict;
    SparseCodes codes = warm.codes;
    const Posterior post = e_step(view, dict, codes, hp.beta);
    const PenaltyMatrix pen = compute_penalty(dict, hp.Gamma);
    const double psi = hp.resolved_psi(Index(view.pos_idx.size()),
                                       Index(view.neg_idx.size()));
    const CodingContext ctx = make_coding_context(view, dict);
    double prev =
        expected_objective(view, dict, codes, post, pen, hp.lambda, psi);
    for (int q = 0; q < 8; ++q) {
        code_round_pos(view, dict, ctx, post, hp.lambda, codes);
        code_round_neg(view, dict, ctx, hp.lambda, codes);
        const double cur =
            expected_objective(view, dict, codes, post, pen, hp.lambda, psi);
        CHECK(cur <= prev + 1e-9);
        prev = cur;
    }
}
