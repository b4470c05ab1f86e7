#include <doctest.h>

#include "mechsparse/latent_models.hpp"
#include "mechsparse/metrics.hpp"
#include "oracles.hpp"

#include <filesystem>
#include <random>

using namespace mechsparse;

namespace {

Eigen::MatrixXd randn(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
    std::normal_distribution<double> n01;
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n01(rng);
    return m;
}

// Column j of the result is column perm[j] of m.
Eigen::MatrixXd gather_cols(const Eigen::MatrixXd& m, const Permutation& perm) {
    Eigen::MatrixXd out(m.rows(), m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) out.col(j) = m.col(perm[static_cast<std::size_t>(j)]);
    return out;
}

BinaryGraph full_graph(int d) { return BinaryGraph(BinMat::Ones(d, d), BinMat::Ones(d, d)); }
BinaryGraph diag_graph(int d) { return BinaryGraph(BinMat::Identity(d, d), BinMat::Identity(d, d)); }

}  // namespace

TEST_CASE("MCC of the truth and of its negated reversal") {
    std::mt19937_64 rng(1);
    const Eigen::MatrixXd Z = randn(2000, 4, rng);
    const MccResult same = mcc(Z, Z);
    CHECK(same.score == doctest::Approx(1.0));
    CHECK(same.perm == Permutation{0, 1, 2, 3});
    const Eigen::MatrixXd rev = -Z.rowwise().reverse();
    const MccResult r = mcc(Z, rev);
    CHECK(r.score == doctest::Approx(1.0));
    CHECK(r.perm == Permutation{3, 2, 1, 0});
}

TEST_CASE("correlation matrix matches the explicit Pearson oracle") {
    std::mt19937_64 rng(2);
    const Eigen::MatrixXd Z = randn(500, 3, rng);
    const Eigen::MatrixXd Zh = Z * randn(3, 4, rng) + 0.3 * randn(500, 4, rng);
    CHECK(correlation_matrix(Z, Zh).isApprox(oracle::pearson(Z, Zh), 1e-10));
    CHECK_THROWS(correlation_matrix(Z, Eigen::MatrixXd::Ones(500, 3)));
    CHECK_THROWS(mcc(Z, Zh.leftCols(3).topRows(400)));
}

TEST_CASE("assignment equals the exhaustive permutation oracle") {
    std::mt19937_64 rng(3);
    for (int d = 1; d <= 6; ++d)
        for (int trial = 0; trial < 25; ++trial) {
            const Eigen::MatrixXd W = randn(d, d, rng).cwiseAbs();
            const Permutation p = max_weight_assignment(W);
            REQUIRE(is_permutation(p, d));
            double s = 0;
            for (int i = 0; i < d; ++i) s += W(i, p[static_cast<std::size_t>(i)]);
            CHECK(s == doctest::Approx(oracle::best_assignment(W)).epsilon(1e-12));
        }
    SUBCASE("random mixing in four dimensions") {
        const Eigen::MatrixXd Z = randn(3000, 4, rng);
        const Eigen::MatrixXd Zh = Z * randn(4, 4, rng);
        const MccResult r = mcc(Z, Zh);
        CHECK(r.score * 4 == doctest::Approx(oracle::best_assignment(oracle::pearson(Z, Zh))).epsilon(1e-10));
    }
    SUBCASE("ties resolve deterministically") {
        const Permutation p = max_weight_assignment(Eigen::MatrixXd::Ones(4, 4));
        CHECK(p == max_weight_assignment(Eigen::MatrixXd::Ones(4, 4)));
        CHECK(is_permutation(p, 4));
    }
}

TEST_CASE("R score") {
    std::mt19937_64 rng(4);
    const Eigen::MatrixXd Z = randn(5000, 3, rng);
    SUBCASE("identity") {
        const RResult r = r_score(Z, Z);
        CHECK(r.score == doctest::Approx(1.0));
        CHECK(r.L.isApprox(Eigen::MatrixXd::Identity(3, 3), 1e-9));
    }
    SUBCASE("invertible linear mix") {
        Eigen::MatrixXd C = randn(3, 3, rng);
        C.diagonal().array() += 3.0;
        CHECK(r_score(Z, Z * C).score == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("unit-variance noise gives one over root two") {
        std::mt19937_64 big(44);
        const Eigen::MatrixXd Zb = randn(100000, 3, big);
        const RResult r = r_score(Zb, Zb + randn(100000, 3, big));
        CHECK(std::abs(r.score - 1.0 / std::sqrt(2.0)) < 0.02);
    }
    SUBCASE("duplicated code columns fall back to ridge") {
        Eigen::MatrixXd Zh(Z.rows(), 3);
        Zh << Z.col(0), Z.col(0), Z.col(1);
        const RResult r = r_score(Z, Zh);
        CHECK(r.ridge);
        CHECK(r.per_coordinate[0] == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(std::isfinite(r.score));
    }
}

TEST_CASE("R_con edge cases") {
    std::mt19937_64 rng(5);
    const Eigen::MatrixXd Z = randn(4000, 4, rng);
    Eigen::MatrixXd C = randn(4, 4, rng);
    C.diagonal().array() += 2.0;
    const Eigen::MatrixXd Zh = Z * C + 0.2 * randn(4000, 4, rng);

    SUBCASE("full mask equals R") {
        const RConResult rc = r_con(Z, Zh, full_graph(4), Consistency::AZ);
        CHECK(rc.mask == BinMat::Ones(4, 4));
        CHECK(rc.score == doctest::Approx(r_score(Z, Zh).score).epsilon(1e-10));
    }
    SUBCASE("identity mask equals MCC at the same permutation") {
        const MccResult m = mcc(Z, Zh);
        const RConResult rc = r_con(Z, Zh, diag_graph(4), Consistency::AZ, m.perm);
        CHECK(rc.mask == BinMat::Identity(4, 4));
        CHECK(rc.score == doctest::Approx(m.score).epsilon(1e-10));
        for (int i = 0; i < 4; ++i) CHECK(rc.features[static_cast<std::size_t>(i)] == std::vector<int>{i});
    }
    SUBCASE("bad inputs") {
        CHECK_THROWS(r_con(Z, Zh, diag_graph(3), Consistency::AZ));
        CHECK_THROWS(r_con(Z, Zh, diag_graph(4), Consistency::AZ, Permutation{0, 0, 1, 2}));
    }
}

TEST_CASE("mixing within the block mask keeps R_con high while MCC drops") {
    const TransitionSpec spec = make_spec(Family::ACTION_BLOCK_DIAG, 6, 6, 0);
    const BinMat mask = entanglement_mask(spec.graph, Consistency::A).mask;
    REQUIRE(mask != BinMat::Identity(6, 6));
    std::mt19937_64 rng(6);
    const Eigen::MatrixXd Z = randn(20000, 6, rng);
    // Rows of C mix only within the allowed coordinates; the code is its own permutation.
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(6, 6);
    std::normal_distribution<double> n01;
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j)
            if (mask(i, j)) C(i, j) = 1.0 + 0.3 * n01(rng);
    for (int i = 0; i < 6; i += 2) C(i, i + 1) = -C(i, i + 1);
    REQUIRE(std::abs(C.determinant()) > 1e-3);
    const Eigen::MatrixXd Zh = Z * C.transpose();
    const MccResult m = mcc(Z, Zh);
    const RConResult rc = r_con(Z, Zh, spec.graph, Consistency::A, m.perm);
    CHECK(m.score < 0.95);
    CHECK(rc.score >= 0.99);
}

TEST_CASE("ordering MCC <= R_con <= R and invariances") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        const int d = 3 + trial % 3;
        const Eigen::MatrixXd Z = randn(3000, d, rng);
        const Eigen::MatrixXd Zh = (Z * randn(d, d, rng)).array().tanh().matrix() + 0.3 * randn(3000, d, rng);
        BinMat gz = BinMat::Identity(d, d);
        gz(0, d - 1) = 1;
        const BinaryGraph g(gz, BinMat::Identity(d, d));
        const MccResult m = mcc(Z, Zh);
        const double rcon = r_con(Z, Zh, g, Consistency::AZ).score;
        const double r = r_score(Z, Zh).score;
        CHECK(m.score <= rcon + 1e-6);
        CHECK(rcon <= r + 1e-6);
        CHECK(r <= 1.0 + 1e-12);

        // Affine rescaling with sign flips leaves every score unchanged.
        Eigen::RowVectorXd s = Eigen::RowVectorXd::LinSpaced(d, -3.0, 2.0);
        s(0) = 0.5;
        const Eigen::MatrixXd Zs = (Zh.array().rowwise() * s.array()).rowwise() + Eigen::RowVectorXd::Constant(d, 7.0).array();
        CHECK(mcc(Z, Zs).score == doctest::Approx(m.score).epsilon(1e-9));
        CHECK(r_score(Z, Zs).score == doctest::Approx(r).epsilon(1e-9));
        CHECK(r_con(Z, Zs, g, Consistency::AZ).score == doctest::Approx(rcon).epsilon(1e-9));

        // Permuting the code columns composes with the assignment.
        Permutation p(static_cast<std::size_t>(d));
        std::iota(p.begin(), p.end(), 0);
        std::shuffle(p.begin(), p.end(), rng);
        const Eigen::MatrixXd Zp = gather_cols(Zh, p);
        const MccResult mp = mcc(Z, Zp);
        CHECK(mp.score == doctest::Approx(m.score).epsilon(1e-12));
        for (int i = 0; i < d; ++i)
            CHECK(p[static_cast<std::size_t>(mp.perm[static_cast<std::size_t>(i)])] == m.perm[static_cast<std::size_t>(i)]);
    }
}

TEST_CASE("structural Hamming distance") {
    std::mt19937_64 rng(8);
    const int d = 10;
    BinMat gz(d, d), ga(d, d);
    std::bernoulli_distribution coin(0.4);
    for (Eigen::Index k = 0; k < gz.size(); ++k) gz.data()[k] = coin(rng);
    for (Eigen::Index k = 0; k < ga.size(); ++k) ga.data()[k] = coin(rng);
    const BinaryGraph g(gz, ga);
    Permutation id(d);
    std::iota(id.begin(), id.end(), 0);
    CHECK(shd(g, g, id) == 0.0);
    const BinaryGraph comp(BinMat(1 - gz.array()), BinMat(1 - ga.array()));
    CHECK(shd(g, comp, id) == 1.0);
    BinMat flipped = gz;
    flipped(3, 4) = 1 - flipped(3, 4);
    CHECK(shd(g, BinaryGraph(flipped, ga), id) == doctest::Approx(1.0 / 200.0));

    // A relabelled copy is at distance zero under the matching permutation.
    Permutation p = id;
    std::shuffle(p.begin(), p.end(), rng);
    BinMat lz(d, d), la(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) lz(p[i], p[j]) = gz(i, j);
        for (int l = 0; l < d; ++l) la(p[i], l) = ga(i, l);
    }
    const BinaryGraph relabelled(lz, la);
    CHECK(shd(g, relabelled, p) == 0.0);
    CHECK(permute_graph(relabelled, p).gz == gz);
    CHECK_THROWS(shd(g, BinaryGraph(BinMat::Zero(3, 3), BinMat::Zero(3, 3)), id));
}

TEST_CASE("UDR") {
    std::mt19937_64 rng(9);
    const Eigen::MatrixXd base = randn(10000, 5, rng);
    SUBCASE("identical codes score one") {
        const UdrResult u = udr({base, base, base}, {5, 6, 7}, 5);
        CHECK(u.admissible);
        CHECK(u.score == doctest::Approx(1.0));
    }
    SUBCASE("independent codes are near chance") {
        const UdrResult u = udr({base, randn(10000, 5, rng)}, {5, 5}, 5);
        CHECK(u.admissible);
        CHECK(u.score < 0.35);
    }
    SUBCASE("exclusion uses the threshold inclusively") {
        const UdrResult u = udr({base, base, randn(10000, 5, rng)}, {5, 5, 4.99}, 5);
        CHECK(u.selected == std::vector<bool>{true, true, false});
        CHECK(u.score == doctest::Approx(1.0));
        CHECK(std::isnan(u.pairwise(0, 2)));
    }
    SUBCASE("every run excluded") {
        const UdrResult u = udr({base, base}, {1, 2}, 5);
        CHECK(!u.admissible);
        CHECK(std::isnan(u.score));
        CHECK(u.message.find("no admissible runs") != std::string::npos);
    }
    SUBCASE("fewer than two runs is an error") {
        CHECK_THROWS(udr({base}, {5}, 5));
    }
}

TEST_CASE("evaluation report and dumps") {
    std::mt19937_64 rng(10);
    const Eigen::MatrixXd Z = randn(3000, 3, rng);
    const Permutation p{2, 0, 1};
    Eigen::MatrixXd Zh(3000, 3);
    for (int i = 0; i < 3; ++i) Zh.col(p[static_cast<std::size_t>(i)]) = 2.0 * Z.col(i);
    const BinaryGraph truth(BinMat::Zero(3, 3), BinMat::Identity(3, 3));
    BinMat la = BinMat::Zero(3, 3);
    for (int i = 0; i < 3; ++i) la(p[static_cast<std::size_t>(i)], i) = 1;
    const EvalReport r = evaluate(Z, Zh, truth, BinaryGraph(BinMat::Zero(3, 3), la), Consistency::A);
    CHECK(r.mcc == doctest::Approx(1.0));
    CHECK(r.r_con == doctest::Approx(1.0));
    CHECK(r.shd == 0.0);
    CHECK(r.p_hat == p);
    CHECK(aligned_abs_coefficients(r).isApprox(Eigen::MatrixXd::Identity(3, 3), 1e-6));
    const auto j = to_json(r);
    CHECK(j.at("mcc").get<double>() == doctest::Approx(1.0));
    const auto dir = std::filesystem::temp_directory_path() / "mechsparse_metrics_dump";
    std::filesystem::remove_all(dir);
    dump_report(r, truth, dir);
    for (const char* f : {"report.json", "K.csv", "LP.csv", "gz_perm.csv", "ga_perm.csv"}) {
        CAPTURE(f);
        CHECK(std::filesystem::exists(dir / f));
    }
    std::filesystem::remove_all(dir);
}
