#include "mechsparse/metrics.hpp"
#include "mechsparse/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace mechsparse {

namespace {

constexpr double kRidge = 1e-8;

void check_pair(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& Zhat) {
    if (Z.rows() != Zhat.rows()) throw std::invalid_argument("metrics: Z and Zhat have different sample counts");
    if (Z.rows() < 2) throw std::invalid_argument("metrics: need at least 2 samples");
    if (Z.cols() != Zhat.cols() || Z.cols() < 1) throw std::invalid_argument("metrics: Z and Zhat must share d_z >= 1");
}

Eigen::MatrixXd standardize(const Eigen::MatrixXd& M, const char* what) {
    const Eigen::RowVectorXd mu = M.colwise().mean();
    Eigen::MatrixXd C = M.rowwise() - mu;
    const Eigen::RowVectorXd sd = (C.colwise().squaredNorm() / static_cast<double>(M.rows())).cwiseSqrt();
    for (Eigen::Index j = 0; j < M.cols(); ++j)
        if (!(sd(j) > 0) || !std::isfinite(sd(j)))
            throw std::invalid_argument(std::string("metrics: zero-variance column ") + std::to_string(j) + " in " + what);
    return C.array().rowwise() / sd.array();
}

struct Fit {
    Eigen::VectorXd coef;
    double corr = 0.0;
    bool ridge = false;
};

// Least squares of standardized y on standardized columns of X; corr(prediction, y).
Fit fit_standardized(const Eigen::VectorXd& y, const Eigen::MatrixXd& X) {
    Fit f;
    if (X.cols() == 0) {
        f.coef.resize(0);
        return f;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() == X.cols()) {
        f.coef = qr.solve(y);
    } else {
        const Eigen::MatrixXd G = X.transpose() * X + kRidge * static_cast<double>(X.rows()) *
                                                          Eigen::MatrixXd::Identity(X.cols(), X.cols());
        f.coef = G.ldlt().solve(X.transpose() * y);
        f.ridge = true;
    }
    const Eigen::VectorXd pred = X * f.coef;
    const Eigen::VectorXd pc = pred.array() - pred.mean();
    const double denom = pc.norm() * (y.array() - y.mean()).matrix().norm();
    f.corr = denom > 0 ? pc.dot(y) / denom : 0.0;
    return f;
}

}  // namespace

Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& Zhat) {
    if (Z.rows() != Zhat.rows()) throw std::invalid_argument("correlation_matrix: sample counts differ");
    if (Z.rows() < 2) throw std::invalid_argument("correlation_matrix: need at least 2 samples");
    const Eigen::MatrixXd a = standardize(Z, "Z"), b = standardize(Zhat, "Zhat");
    return a.transpose() * b / static_cast<double>(Z.rows());
}

Permutation max_weight_assignment(const Eigen::MatrixXd& W) {
    const int n = static_cast<int>(W.rows());
    if (W.cols() != n) throw std::invalid_argument("max_weight_assignment: matrix must be square");
    if (n == 0) return {};
    if (!W.allFinite()) throw std::invalid_argument("max_weight_assignment: non-finite weights");
    // Shortest augmenting path with potentials on cost = max(W) - W; 1-based rows and columns.
    const double top = W.maxCoeff();
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> match(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = match[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = (top - W(i0 - 1, j - 1)) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    Permutation sigma(static_cast<std::size_t>(n));
    for (int j = 1; j <= n; ++j) sigma[static_cast<std::size_t>(match[j] - 1)] = j - 1;
    return sigma;
}

MccResult mcc(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& Zhat) {
    check_pair(Z, Zhat);
    MccResult r;
    r.K = correlation_matrix(Z, Zhat);
    const Eigen::MatrixXd absK = r.K.cwiseAbs();
    r.perm = max_weight_assignment(absK);
    double s = 0.0;
    for (Eigen::Index i = 0; i < absK.rows(); ++i) s += absK(i, r.perm[static_cast<std::size_t>(i)]);
    r.score = s / static_cast<double>(absK.rows());
    return r;
}

RResult r_score(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& Zhat) {
    check_pair(Z, Zhat);
    const Eigen::MatrixXd zs = standardize(Z, "Z"), hs = standardize(Zhat, "Zhat");
    RResult r;
    const Eigen::Index d = Z.cols();
    r.L = Eigen::MatrixXd::Zero(d, hs.cols());
    double total = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
        const Fit f = fit_standardized(zs.col(i), hs);
        r.L.row(i) = f.coef.transpose();
        r.per_coordinate.push_back(f.corr);
        r.ridge = r.ridge || f.ridge;
        total += f.corr;
    }
    r.score = total / static_cast<double>(d);
    return r;
}

RConResult r_con(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& Zhat, const BinaryGraph& graph, Consistency mode,
                 const std::optional<Permutation>& perm) {
    check_pair(Z, Zhat);
    const Eigen::Index d = Z.cols();
    if (graph.dz() != d) throw std::invalid_argument("r_con: graph d_z does not match the codes");
    RConResult r;
    r.perm = perm ? *perm : mcc(Z, Zhat).perm;
    if (!is_permutation(r.perm, static_cast<int>(d))) throw std::invalid_argument("r_con: invalid permutation");
    r.mask = entanglement_mask(graph, mode).mask;

    const Eigen::MatrixXd zs = standardize(Z, "Z"), hs = standardize(Zhat, "Zhat");
    Eigen::MatrixXd permuted(hs.rows(), d);
    for (Eigen::Index j = 0; j < d; ++j) permuted.col(j) = hs.col(r.perm[static_cast<std::size_t>(j)]);

    double total = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
        std::vector<int> feats;
        for (Eigen::Index j = 0; j < d; ++j)
            if (r.mask(i, j)) feats.push_back(static_cast<int>(j));
        Eigen::MatrixXd X(hs.rows(), static_cast<Eigen::Index>(feats.size()));
        for (std::size_t k = 0; k < feats.size(); ++k) X.col(static_cast<Eigen::Index>(k)) = permuted.col(feats[k]);
        const Fit f = fit_standardized(zs.col(i), X);
        r.per_coordinate.push_back(f.corr);
        r.features.push_back(std::move(feats));
        r.ridge = r.ridge || f.ridge;
        total += f.corr;
    }
    r.score = total / static_cast<double>(d);
    return r;
}

BinaryGraph permute_graph(const BinaryGraph& learned, const Permutation& perm) {
    const int d = learned.dz();
    if (!is_permutation(perm, d)) throw std::invalid_argument("permute_graph: invalid permutation");
    BinMat gz(d, d), ga(d, learned.da());
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) gz(i, j) = learned.gz(perm[i], perm[j]);
        for (int l = 0; l < learned.da(); ++l) ga(i, l) = learned.ga(perm[i], l);
    }
    return BinaryGraph(gz, ga);
}

double shd(const BinaryGraph& truth, const BinaryGraph& learned, const Permutation& perm) {
    if (truth.dz() != learned.dz() || truth.da() != learned.da())
        throw std::invalid_argument("shd: graph dimensions differ");
    const BinaryGraph aligned = permute_graph(learned, perm);
    const double diff = static_cast<double>((truth.ga.array() != aligned.ga.array()).count() +
                                            (truth.gz.array() != aligned.gz.array()).count());
    const double denom = static_cast<double>(truth.da()) * truth.dz() + static_cast<double>(truth.dz()) * truth.dz();
    return diff / denom;
}

UdrResult udr(const std::vector<Eigen::MatrixXd>& codes, const std::vector<double>& edge_counts, double min_edges) {
    if (codes.size() < 2) throw std::invalid_argument("udr: >= 2 runs required");
    if (edge_counts.size() != codes.size()) throw std::invalid_argument("udr: one edge count per run required");
    const auto n = static_cast<Eigen::Index>(codes.size());
    UdrResult r;
    r.pairwise = Eigen::MatrixXd::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t k = 0; k < codes.size(); ++k) r.selected.push_back(edge_counts[k] >= min_edges);
    std::vector<double> scores;
    for (Eigen::Index a = 0; a < n; ++a) {
        if (!r.selected[static_cast<std::size_t>(a)]) continue;
        r.pairwise(a, a) = 1.0;
        for (Eigen::Index b = a + 1; b < n; ++b) {
            if (!r.selected[static_cast<std::size_t>(b)]) continue;
            const double s = mcc(codes[static_cast<std::size_t>(a)], codes[static_cast<std::size_t>(b)]).score;
            r.pairwise(a, b) = r.pairwise(b, a) = s;
            scores.push_back(s);
        }
    }
    if (scores.empty()) {
        r.message = "no admissible runs: fewer than two runs have at least " + std::to_string(min_edges) + " edges";
        r.score = std::numeric_limits<double>::quiet_NaN();
        return r;
    }
    std::sort(scores.begin(), scores.end());
    const std::size_t m = scores.size();
    r.score = m % 2 ? scores[m / 2] : 0.5 * (scores[m / 2 - 1] + scores[m / 2]);
    r.admissible = true;
    return r;
}

EvalReport evaluate(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& Zhat, const BinaryGraph& truth,
                    const BinaryGraph& learned, Consistency mode) {
    EvalReport rep;
    const MccResult m = mcc(Z, Zhat);
    const RResult r = r_score(Z, Zhat);
    const RConResult rc = r_con(Z, Zhat, truth, mode, m.perm);
    rep.mcc = m.score;
    rep.K = m.K;
    rep.p_hat = m.perm;
    rep.r = r.score;
    rep.l_hat = r.L;
    rep.r_con = rc.score;
    rep.ridge = r.ridge || rc.ridge;
    rep.mode = mode;
    rep.graph = learned;
    rep.shd = shd(truth, learned, m.perm);
    return rep;
}

Eigen::MatrixXd aligned_abs_coefficients(const EvalReport& r) {
    const Eigen::Index d = r.l_hat.rows();
    Eigen::MatrixXd out(d, d);
    for (Eigen::Index j = 0; j < d; ++j) out.col(j) = r.l_hat.col(r.p_hat[static_cast<std::size_t>(j)]).cwiseAbs();
    const double top = out.maxCoeff();
    if (top > 0) out /= top;
    return out;
}

nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json j;
    j["mcc"] = r.mcc;
    j["r"] = r.r;
    j["r_con"] = r.r_con;
    j["shd"] = r.shd;
    j["p_hat"] = r.p_hat;
    j["mode"] = to_string(r.mode);
    j["ridge_fallback"] = r.ridge;
    auto mat = [](const Eigen::MatrixXd& m) {
        nlohmann::json rows = nlohmann::json::array();
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            std::vector<double> row(m.cols());
            for (Eigen::Index k = 0; k < m.cols(); ++k) row[static_cast<std::size_t>(k)] = m(i, k);
            rows.push_back(row);
        }
        return rows;
    };
    j["l_hat"] = mat(r.l_hat);
    j["K"] = mat(r.K);
    j["graph"] = {{"gz", binmat_to_json(r.graph.gz)}, {"ga", binmat_to_json(r.graph.ga)}};
    return j;
}

void dump_report(const EvalReport& r, const BinaryGraph& truth, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream os(dir / "report.json", std::ios::trunc);
        if (!os) throw std::runtime_error("cannot write " + (dir / "report.json").string());
        os << to_json(r).dump(2) << "\n";
    }
    write_matrix_csv(r.K, dir / "K.csv");
    write_matrix_csv(aligned_abs_coefficients(r), dir / "LP.csv");
    const BinaryGraph aligned = permute_graph(r.graph, r.p_hat);
    write_binmat_csv(aligned.gz, dir / "gz_perm.csv");
    if (truth.da() > 0) write_binmat_csv(aligned.ga, dir / "ga_perm.csv");
}

}  // namespace mechsparse
