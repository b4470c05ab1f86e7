#include "mechsparse/latent_models.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mechsparse {

namespace {

struct FamilyName {
    Family f;
    const char* name;
};

constexpr FamilyName kFamilyNames[] = {
    {Family::ACTION_DIAG, "ActionDiag"},
    {Family::ACTION_NONDIAG, "ActionNonDiag"},
    {Family::ACTION_NONDIAG_LINEAR, "ActionNonDiag_NoSuffInf"},
    {Family::ACTION_NONDIAG_HETERO, "ActionNonDiag_k2"},
    {Family::TIME_DIAG, "TimeDiag"},
    {Family::TIME_NONDIAG, "TimeNonDiag"},
    {Family::TIME_NONDIAG_LINEAR, "TimeNonDiag_NoSuffInf"},
    {Family::TIME_NONDIAG_HETERO, "TimeNonDiag_k2"},
    {Family::ACTION_BLOCK_DIAG, "ActionBlockDiag"},
    {Family::ACTION_BLOCK_NONDIAG, "ActionBlockNonDiag"},
    {Family::TIME_BLOCK_DIAG, "TimeBlockDiag"},
    {Family::TIME_BLOCK_NONDIAG, "TimeBlockNonDiag"},
    {Family::RANDOM_GRAPH_ACTION, "ActionRandomGraph"},
    {Family::RANDOM_GRAPH_TIME, "TimeRandomGraph"},
    {Family::EX_SINGLE_TARGET_INTERV, "SingleTargetInterv"},
    {Family::EX_MULTI_TARGET_INTERV_TIME, "MultiTargetIntervTime"},
    {Family::EX_NONMARKOV_W, "NonMarkovW"},
    {Family::EX_MARKOV_POLY, "MarkovPoly"},
};

// Row i (0-based) uses frequency (i+3)/pi and phase i.
double row_freq(Eigen::Index i) { return static_cast<double>(i + 3) / std::numbers::pi; }
double row_phase(Eigen::Index i) { return static_cast<double>(i); }

template <typename Fn>
Eigen::VectorXd masked_rows(const BinMat& g, const Eigen::VectorXd& v, Fn fn) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(g.rows());
    for (Eigen::Index i = 0; i < g.rows(); ++i)
        for (Eigen::Index j = 0; j < g.cols(); ++j)
            if (g(i, j)) out(i) += fn(row_freq(i) * v(j) + row_phase(i));
    return out;
}

Eigen::VectorXd sin_rows(const BinMat& g, const Eigen::VectorXd& v) {
    return masked_rows(g, v, [](double x) { return std::sin(x); });
}
Eigen::VectorXd cos_rows(const BinMat& g, const Eigen::VectorXd& v) {
    return masked_rows(g, v, [](double x) { return std::cos(x); });
}

// Exponent of entry (i,j) in the polynomial examples; distinct along every row and every column.
int poly_power(Eigen::Index i, Eigen::Index j, Eigen::Index d) {
    return static_cast<int>(j <= i ? i - j + 1 : d + (j - i) + 1);
}

bool is_example(Family f) {
    return f == Family::EX_SINGLE_TARGET_INTERV || f == Family::EX_MULTI_TARGET_INTERV_TIME ||
           f == Family::EX_NONMARKOV_W || f == Family::EX_MARKOV_POLY;
}

bool is_hetero(Family f) { return f == Family::ACTION_NONDIAG_HETERO || f == Family::TIME_NONDIAG_HETERO; }

Eigen::VectorXd lag_column(const TransitionSpec& spec, const Eigen::MatrixXd& z_prev, int lag) {
    if (lag < 1 || lag > z_prev.cols())
        throw std::invalid_argument("missing lag " + std::to_string(lag) + " for family " + to_string(spec.family));
    if (z_prev.rows() != spec.dz()) throw std::invalid_argument("z_prev has wrong dimension");
    return z_prev.col(lag - 1);
}

void check_inputs(const TransitionSpec& spec, const Eigen::MatrixXd& z_prev, const Eigen::VectorXd& a_prev) {
    if (uses_time(spec.family)) {
        if (z_prev.rows() != spec.dz()) throw std::invalid_argument("z_prev has wrong dimension");
        if (z_prev.cols() < lags(spec.family))
            throw std::invalid_argument("missing lag for family " + to_string(spec.family));
    }
    if (uses_actions(spec.family) && a_prev.size() != spec.da())
        throw std::invalid_argument("a_prev has wrong dimension");
}

Eigen::MatrixXd random_normal(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) m(i, j) = n01(rng);
    return m;
}

Eigen::VectorXd random_uniform(Eigen::Index n, double lo, double hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(lo, hi);
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = u(rng);
    return v;
}

std::vector<std::pair<Eigen::Index, Eigen::Index>> support_of(const BinMat& g) {
    std::vector<std::pair<Eigen::Index, Eigen::Index>> s;
    for (Eigen::Index i = 0; i < g.rows(); ++i)
        for (Eigen::Index j = 0; j < g.cols(); ++j)
            if (g(i, j)) s.emplace_back(i, j);
    return s;
}

// A conditioning draw matching the data-generating marginals.
struct ProbeSampler {
    const TransitionSpec& spec;
    std::mt19937_64& rng;
    ActionSet actions;

    ProbeSampler(const TransitionSpec& s, std::mt19937_64& r) : spec(s), rng(r) {
        if (discrete_actions(spec.family)) actions = default_action_set(spec.da());
    }

    Eigen::MatrixXd z_prev() {
        const int L = std::max(1, lags(spec.family));
        return random_normal(spec.dz(), L, rng);
    }

    Eigen::VectorXd action() {
        if (spec.da() == 0) return Eigen::VectorXd();
        if (!actions.empty()) {
            std::uniform_int_distribution<std::size_t> pick(0, actions.size() - 1);
            return actions[pick(rng)];
        }
        return random_uniform(spec.da(), -2.0, 2.0, rng);
    }
};

}  // namespace

std::string to_string(Family f) {
    for (const auto& fn : kFamilyNames)
        if (fn.f == f) return fn.name;
    return "?";
}

Family parse_family(const std::string& s) {
    for (const auto& fn : kFamilyNames)
        if (s == fn.name) return fn.f;
    throw std::invalid_argument("unknown family: " + s);
}

std::vector<Family> all_families() {
    std::vector<Family> out;
    for (const auto& fn : kFamilyNames) out.push_back(fn.f);
    return out;
}

bool uses_time(Family f) {
    switch (f) {
        case Family::TIME_DIAG:
        case Family::TIME_NONDIAG:
        case Family::TIME_NONDIAG_LINEAR:
        case Family::TIME_NONDIAG_HETERO:
        case Family::TIME_BLOCK_DIAG:
        case Family::TIME_BLOCK_NONDIAG:
        case Family::RANDOM_GRAPH_TIME:
        case Family::EX_MULTI_TARGET_INTERV_TIME:
        case Family::EX_NONMARKOV_W:
        case Family::EX_MARKOV_POLY:
            return true;
        default:
            return false;
    }
}

bool uses_actions(Family f) {
    switch (f) {
        case Family::ACTION_DIAG:
        case Family::ACTION_NONDIAG:
        case Family::ACTION_NONDIAG_LINEAR:
        case Family::ACTION_NONDIAG_HETERO:
        case Family::ACTION_BLOCK_DIAG:
        case Family::ACTION_BLOCK_NONDIAG:
        case Family::RANDOM_GRAPH_ACTION:
        case Family::EX_SINGLE_TARGET_INTERV:
        case Family::EX_MULTI_TARGET_INTERV_TIME:
            return true;
        default:
            return false;
    }
}

bool discrete_actions(Family f) {
    return f == Family::EX_SINGLE_TARGET_INTERV || f == Family::EX_MULTI_TARGET_INTERV_TIME;
}

int lags(Family f) {
    if (!uses_time(f)) return 0;
    return f == Family::EX_NONMARKOV_W ? 2 : 1;
}

int suff_stat_dim(const TransitionSpec& spec) {
    if (is_hetero(spec.family)) return 2;
    if (spec.family == Family::EX_SINGLE_TARGET_INTERV && spec.interv_shift.size() > 0 &&
        spec.interv_shift.cwiseAbs().maxCoeff() > 0.0)
        return 2;
    return 1;
}

void TransitionSpec::validate() const {
    graph.validate();
    if (!(base_variance > 0.0)) throw std::invalid_argument("TransitionSpec: base_variance must be positive");
    const int d = dz();
    const Family f = family;
    if (uses_time(f)) {
        if ((graph.gz.diagonal().array() != 1).any())
            throw std::invalid_argument("TransitionSpec: time families need self-loops on every latent");
    } else if (graph.gz.sum() != 0) {
        throw std::invalid_argument("TransitionSpec: gz must be empty for action-only families");
    }
    if (uses_actions(f)) {
        if (da() < 1) throw std::invalid_argument("TransitionSpec: action family needs d_a >= 1");
    } else if (graph.ga.sum() != 0) {
        throw std::invalid_argument("TransitionSpec: ga must be empty for time-only families");
    }
    if (f == Family::ACTION_DIAG && (da() != d || graph.ga != graphs::identity(d)))
        throw std::invalid_argument("TransitionSpec: ActionDiag needs ga = I");
    if (f == Family::TIME_DIAG && graph.gz != graphs::identity(d))
        throw std::invalid_argument("TransitionSpec: TimeDiag needs gz = I");
    if (f == Family::ACTION_NONDIAG_LINEAR && (weight.rows() != d || weight.cols() != da()))
        throw std::invalid_argument("TransitionSpec: weight must be d_z x d_a");
    if ((f == Family::TIME_NONDIAG_LINEAR || f == Family::EX_MULTI_TARGET_INTERV_TIME) &&
        (weight.rows() != d || weight.cols() != d))
        throw std::invalid_argument("TransitionSpec: weight must be d_z x d_z");
    if (f == Family::EX_MULTI_TARGET_INTERV_TIME) {
        for (Eigen::Index i = 0; i < d; ++i)
            for (Eigen::Index j = 0; j < d; ++j)
                if (!graph.gz(i, j) && weight(i, j) != 0.0)
                    throw std::invalid_argument("TransitionSpec: weight must respect gz");
    }
    if (f == Family::EX_SINGLE_TARGET_INTERV) {
        if (interv_mean.size() != d || interv_shift.size() != d)
            throw std::invalid_argument("TransitionSpec: intervention mean/shift must have d_z entries");
        if (((1.0 + interv_shift.array()) <= 0.0).any())
            throw std::invalid_argument("TransitionSpec: 1 + shift must be positive");
    }
}

namespace graphs {

BinMat identity(int d) { return BinMat::Identity(d, d); }

BinMat double_diagonal(int d) {
    if (d < 2) throw std::invalid_argument("double_diagonal: d must be >= 2");
    BinMat g = BinMat::Identity(d, d);
    for (int i = 1; i < d; ++i) g(i, i - 1) = 1;
    g(0, d - 1) = 1;
    return g;
}

BinMat lower_triangular(int d) {
    BinMat g = BinMat::Zero(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j <= i; ++j) g(i, j) = 1;
    return g;
}

BinMat action_block(int da, bool nondiag) {
    if (da < 2) throw std::invalid_argument("action_block: d_a must be >= 2");
    BinMat g = BinMat::Zero(2 * da, da);
    for (int l = 0; l < da; ++l) g(2 * l, l) = g(2 * l + 1, l) = 1;
    if (nondiag) g(2 * da - 2, 0) = g(2 * da - 1, 0) = 1;
    return g;
}

BinMat time_block(int dz, bool nondiag) {
    if (dz % 2 != 0) throw std::invalid_argument("time_block: d_z must be even");
    const int nb = dz / 2;
    if (nondiag && nb < 3) throw std::invalid_argument("time_block: nondiag variant needs d_z >= 6");
    BinMat g = BinMat::Zero(dz, dz);
    auto fill = [&](int br, int bc) { g.block(2 * br, 2 * bc, 2, 2).setOnes(); };
    for (int b = 0; b < nb; ++b) fill(b, b);
    if (nondiag) {
        fill(0, nb - 1);
        fill(nb - 1, 0);
        fill(nb - 1, nb - 3);
    }
    return g;
}

BinMat multi_target3() {
    BinMat g(3, 3);
    g << 1, 1, 0, 1, 0, 1, 0, 1, 1;
    return g;
}

}  // namespace graphs

TransitionSpec make_spec(Family f, int dz, int da, std::uint64_t seed, const FamilyOptions& opt) {
    if (dz < 1) throw std::invalid_argument("make_spec: d_z must be positive");
    std::mt19937_64 rng(seed);
    TransitionSpec s;
    s.family = f;
    s.base_variance = opt.base_variance.value_or(is_example(f) ? 1.0 : 1e-4);
    s.edge_prob = opt.edge_prob;
    BinMat gz = BinMat::Zero(dz, dz);
    BinMat ga;
    switch (f) {
        case Family::ACTION_DIAG:
            ga = graphs::identity(dz);
            break;
        case Family::ACTION_NONDIAG:
        case Family::ACTION_NONDIAG_LINEAR:
        case Family::ACTION_NONDIAG_HETERO:
            ga = graphs::double_diagonal(dz);
            break;
        case Family::ACTION_BLOCK_DIAG:
        case Family::ACTION_BLOCK_NONDIAG:
            if (dz % 2 != 0) throw std::invalid_argument("make_spec: block action families need even d_z");
            ga = graphs::action_block(dz / 2, f == Family::ACTION_BLOCK_NONDIAG);
            break;
        case Family::RANDOM_GRAPH_ACTION: {
            if (da < 1) throw std::invalid_argument("make_spec: random action graph needs d_a >= 1");
            std::bernoulli_distribution ber(opt.edge_prob);
            ga = BinMat::Zero(dz, da);
            for (int j = 0; j < da; ++j)
                for (int i = 0; i < dz; ++i) ga(i, j) = ber(rng) ? 1 : 0;
            break;
        }
        case Family::TIME_DIAG:
            gz = graphs::identity(dz);
            break;
        case Family::TIME_NONDIAG:
        case Family::TIME_NONDIAG_LINEAR:
        case Family::TIME_NONDIAG_HETERO:
        case Family::EX_NONMARKOV_W:
        case Family::EX_MARKOV_POLY:
            gz = graphs::lower_triangular(dz);
            break;
        case Family::TIME_BLOCK_DIAG:
        case Family::TIME_BLOCK_NONDIAG:
            gz = graphs::time_block(dz, f == Family::TIME_BLOCK_NONDIAG);
            break;
        case Family::RANDOM_GRAPH_TIME: {
            std::bernoulli_distribution ber(opt.edge_prob);
            for (int j = 0; j < dz; ++j)
                for (int i = 0; i < dz; ++i) gz(i, j) = (i == j || ber(rng)) ? 1 : 0;
            break;
        }
        case Family::EX_SINGLE_TARGET_INTERV:
            ga = graphs::identity(dz);
            break;
        case Family::EX_MULTI_TARGET_INTERV_TIME:
            gz = graphs::lower_triangular(dz);
            ga = (dz == 3) ? graphs::multi_target3() : graphs::double_diagonal(dz);
            break;
    }
    if (ga.size() == 0 && ga.rows() != dz) ga = BinMat::Zero(dz, 0);
    s.graph = opt.graph ? *opt.graph : BinaryGraph(gz, ga);
    s.graph.validate();
    const int d = s.dz();

    if (f == Family::ACTION_NONDIAG_LINEAR) s.weight = random_normal(d, s.da(), rng);
    if (f == Family::TIME_NONDIAG_LINEAR) s.weight = random_normal(d, d, rng);
    if (f == Family::EX_MULTI_TARGET_INTERV_TIME) {
        // Masked Gaussian with a dominant diagonal, so W is invertible for lower-triangular gz
        // and well conditioned for most others.
        Eigen::MatrixXd w = random_normal(d, d, rng);
        std::uniform_real_distribution<double> mag(1.0, 2.0);
        for (int i = 0; i < d; ++i) w(i, i) = (w(i, i) < 0 ? -1.0 : 1.0) * (mag(rng) + static_cast<double>(d));
        s.weight = w.cwiseProduct(s.graph.gz.cast<double>());
    }
    if (f == Family::EX_SINGLE_TARGET_INTERV) {
        std::uniform_real_distribution<double> mag(0.5, 1.5);
        std::bernoulli_distribution coin(0.5);
        s.interv_mean.resize(d);
        for (int i = 0; i < d; ++i) s.interv_mean(i) = (coin(rng) ? 1.0 : -1.0) * mag(rng);
        s.interv_shift = Eigen::VectorXd::Zero(d);
    }
    s.validate();
    return s;
}

Eigen::VectorXd mean(const TransitionSpec& spec, const Eigen::MatrixXd& z_prev, const Eigen::VectorXd& a_prev) {
    check_inputs(spec, z_prev, a_prev);
    const BinMat& gz = spec.graph.gz;
    const BinMat& ga = spec.graph.ga;
    const Eigen::Index d = spec.dz();
    switch (spec.family) {
        case Family::ACTION_DIAG:
            return a_prev.array().sin();
        case Family::ACTION_NONDIAG:
        case Family::ACTION_NONDIAG_HETERO:
        case Family::ACTION_BLOCK_DIAG:
        case Family::ACTION_BLOCK_NONDIAG:
        case Family::RANDOM_GRAPH_ACTION:
            return sin_rows(ga, a_prev);
        case Family::ACTION_NONDIAG_LINEAR:
            return ga.cast<double>().cwiseProduct(spec.weight) * a_prev;
        case Family::TIME_DIAG: {
            const Eigen::VectorXd z = lag_column(spec, z_prev, 1);
            return z.array() + 0.5 * z.array().sin();
        }
        case Family::TIME_NONDIAG:
        case Family::TIME_NONDIAG_HETERO:
        case Family::TIME_BLOCK_DIAG:
        case Family::TIME_BLOCK_NONDIAG:
        case Family::RANDOM_GRAPH_TIME: {
            const Eigen::VectorXd z = lag_column(spec, z_prev, 1);
            return z + 0.5 * sin_rows(gz, z);
        }
        case Family::TIME_NONDIAG_LINEAR: {
            const Eigen::VectorXd z = lag_column(spec, z_prev, 1);
            return z + 0.5 * (gz.cast<double>().cwiseProduct(spec.weight) * z);
        }
        case Family::EX_SINGLE_TARGET_INTERV:
            return spec.interv_mean.cwiseProduct(ga.cast<double>() * a_prev);
        case Family::EX_MULTI_TARGET_INTERV_TIME: {
            const Eigen::VectorXd z = lag_column(spec, z_prev, 1);
            const Eigen::VectorXd keep = Eigen::VectorXd::Ones(d) - ga.cast<double>() * a_prev;
            return z + keep.cwiseProduct(spec.weight * z);
        }
        case Family::EX_NONMARKOV_W: {
            const Eigen::VectorXd z1 = lag_column(spec, z_prev, 1);
            const Eigen::VectorXd z2 = lag_column(spec, z_prev, 2);
            Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d, d);
            for (Eigen::Index i = 0; i < d; ++i)
                for (Eigen::Index j = 0; j < d; ++j)
                    if (gz(i, j)) w(i, j) = std::pow(z2(i), poly_power(i, j, d));
            return z1 + w * z1;
        }
        case Family::EX_MARKOV_POLY: {
            const Eigen::VectorXd z = lag_column(spec, z_prev, 1);
            Eigen::VectorXd mu = z;
            for (Eigen::Index i = 0; i < d; ++i)
                for (Eigen::Index j = 0; j < d; ++j)
                    if (gz(i, j)) {
                        const int p = poly_power(i, j, d) + 1;
                        mu(i) += std::pow(z(j), p) / p;
                    }
            return mu;
        }
    }
    throw std::logic_error("mean: unhandled family");
}

Eigen::VectorXd variance(const TransitionSpec& spec, const Eigen::MatrixXd& z_prev, const Eigen::VectorXd& a_prev) {
    check_inputs(spec, z_prev, a_prev);
    const Eigen::Index d = spec.dz();
    switch (spec.family) {
        case Family::ACTION_NONDIAG_HETERO:
            return cos_rows(spec.graph.ga, a_prev).array().exp() / (10.0 * spec.da());
        case Family::TIME_NONDIAG_HETERO:
            return cos_rows(spec.graph.gz, lag_column(spec, z_prev, 1)).array().exp() / (10.0 * d);
        case Family::EX_SINGLE_TARGET_INTERV: {
            const Eigen::VectorXd scale =
                Eigen::VectorXd::Ones(d) + spec.interv_shift.cwiseProduct(spec.graph.ga.cast<double>() * a_prev);
            if ((scale.array() <= 0.0).any()) throw std::invalid_argument("variance: nonpositive variance");
            return spec.base_variance * scale;
        }
        default:
            return Eigen::VectorXd::Constant(d, spec.base_variance);
    }
}

double log_density(const TransitionSpec& spec, const Eigen::VectorXd& z, const Eigen::MatrixXd& z_prev,
                   const Eigen::VectorXd& a_prev) {
    const Eigen::VectorXd mu = mean(spec, z_prev, a_prev);
    const Eigen::VectorXd var = variance(spec, z_prev, a_prev);
    const Eigen::ArrayXd r = (z - mu).array();
    return (-0.5 * (2.0 * std::numbers::pi * var.array()).log() - 0.5 * r.square() / var.array()).sum();
}

Eigen::VectorXd log_density_grad_z(const TransitionSpec& spec, const Eigen::VectorXd& z,
                                   const Eigen::MatrixXd& z_prev, const Eigen::VectorXd& a_prev) {
    if (z.size() != spec.dz()) throw std::invalid_argument("z has wrong dimension");
    const Eigen::VectorXd mu = mean(spec, z_prev, a_prev);
    const Eigen::VectorXd var = variance(spec, z_prev, a_prev);
    return -((z - mu).array() / var.array()).matrix();
}

Eigen::MatrixXd hessian_z_a(const TransitionSpec& spec, const Eigen::VectorXd& z, const Eigen::MatrixXd& z_prev,
                            const Eigen::VectorXd& a_prev, double step) {
    if (!uses_actions(spec.family) || discrete_actions(spec.family))
        throw std::invalid_argument("hessian_z_a: family " + to_string(spec.family) + " has no continuous actions");
    if (!(step > 0)) throw std::invalid_argument("hessian_z_a: step must be positive");
    Eigen::MatrixXd H(spec.dz(), spec.da());
    for (int l = 0; l < spec.da(); ++l) {
        Eigen::VectorXd ap = a_prev, am = a_prev;
        ap(l) += step;
        am(l) -= step;
        H.col(l) = (log_density_grad_z(spec, z, z_prev, ap) - log_density_grad_z(spec, z, z_prev, am)) / (2 * step);
    }
    return H;
}

Eigen::MatrixXd hessian_z_zprev(const TransitionSpec& spec, const Eigen::VectorXd& z, const Eigen::MatrixXd& z_prev,
                                const Eigen::VectorXd& a_prev, int lag, double step) {
    if (!uses_time(spec.family))
        throw std::invalid_argument("hessian_z_zprev: family " + to_string(spec.family) + " has no time dependence");
    if (lag < 1 || lag > lags(spec.family)) throw std::invalid_argument("hessian_z_zprev: lag out of range");
    if (!(step > 0)) throw std::invalid_argument("hessian_z_zprev: step must be positive");
    Eigen::MatrixXd H(spec.dz(), spec.dz());
    for (int j = 0; j < spec.dz(); ++j) {
        Eigen::MatrixXd zp = z_prev, zm = z_prev;
        zp(j, lag - 1) += step;
        zm(j, lag - 1) -= step;
        H.col(j) = (log_density_grad_z(spec, z, zp, a_prev) - log_density_grad_z(spec, z, zm, a_prev)) / (2 * step);
    }
    return H;
}

Eigen::MatrixXd mean_jacobian_zprev(const TransitionSpec& spec, const Eigen::MatrixXd& z_prev,
                                    const Eigen::VectorXd& a_prev, int lag, double step) {
    if (!uses_time(spec.family))
        throw std::invalid_argument("mean_jacobian_zprev: family has no time dependence");
    if (lag < 1 || lag > lags(spec.family)) throw std::invalid_argument("mean_jacobian_zprev: lag out of range");
    Eigen::MatrixXd J(spec.dz(), spec.dz());
    for (int j = 0; j < spec.dz(); ++j) {
        Eigen::MatrixXd zp = z_prev, zm = z_prev;
        zp(j, lag - 1) += step;
        zm(j, lag - 1) -= step;
        J.col(j) = (mean(spec, zp, a_prev) - mean(spec, zm, a_prev)) / (2 * step);
    }
    return J;
}

ActionSet default_action_set(int da) {
    ActionSet s;
    s.push_back(Eigen::VectorXd::Zero(da));
    for (int l = 0; l < da; ++l) s.push_back(Eigen::VectorXd::Unit(da, l));
    return s;
}

namespace {

bool in_set(const ActionSet& set, const Eigen::VectorXd& a) {
    return std::any_of(set.begin(), set.end(), [&](const Eigen::VectorXd& b) {
        return b.size() == a.size() && (b - a).cwiseAbs().maxCoeff() <= 1e-12;
    });
}

}  // namespace

Eigen::VectorXd partial_difference_grad(const TransitionSpec& spec, const Eigen::VectorXd& z,
                                        const Eigen::MatrixXd& z_prev, const Eigen::VectorXd& a_base, int l,
                                        double eps, const ActionSet& action_set) {
    if (l < 0 || l >= spec.da()) throw std::invalid_argument("partial_difference_grad: action index out of range");
    if (!in_set(action_set, a_base)) throw std::invalid_argument("partial_difference_grad: a_base not admissible");
    Eigen::VectorXd a_shift = a_base;
    a_shift(l) += eps;
    if (!in_set(action_set, a_shift))
        throw std::invalid_argument("partial_difference_grad: a_base + eps e_l not admissible");
    if (eps == 0.0) return Eigen::VectorXd::Zero(spec.dz());
    return log_density_grad_z(spec, z, z_prev, a_shift) - log_density_grad_z(spec, z, z_prev, a_base);
}

UnitRank span_rank(const Eigen::MatrixXd& rows, int required, double tol, std::string label) {
    UnitRank u;
    u.label = std::move(label);
    u.required = required;
    if (rows.cols() == 0 || rows.rows() == 0) {
        u.pass = required == 0;
        u.margin = u.pass ? std::numeric_limits<double>::infinity() : 0.0;
        return u;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(rows);
    const Eigen::VectorXd s = svd.singularValues();
    u.singular_values.assign(s.data(), s.data() + s.size());
    const double smax = s.size() ? s(0) : 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (smax > 0 && s(i) > tol * smax) ++u.rank;
    if (required == 0) {
        u.margin = std::numeric_limits<double>::infinity();
    } else if (smax > 0 && required <= s.size()) {
        u.margin = (s(required - 1) / smax) / tol;
    }
    u.pass = u.rank >= required;
    return u;
}

nlohmann::json to_json(const InfluenceReport& r) {
    nlohmann::json j;
    j["target"] = r.target;
    j["pass"] = r.pass;
    j["n_probe"] = r.n_probe;
    j["tol"] = r.tol;
    j["probe_distribution"] = "z, z_prev ~ N(0, I); continuous a ~ U[-2, 2]; discrete a uniform over action set";
    j["units"] = nlohmann::json::array();
    for (const auto& u : r.units) {
        nlohmann::json ju;
        ju["label"] = u.label;
        ju["rank"] = u.rank;
        ju["required"] = u.required;
        ju["pass"] = u.pass;
        ju["margin"] = std::isfinite(u.margin) ? nlohmann::json(u.margin) : nlohmann::json("inf");
        ju["singular_values"] = u.singular_values;
        j["units"].push_back(ju);
    }
    return j;
}

namespace {

InfluenceReport finish(std::string target, std::vector<UnitRank> units, int n_probe, double tol) {
    InfluenceReport r;
    r.target = std::move(target);
    r.units = std::move(units);
    r.n_probe = n_probe;
    r.tol = tol;
    r.pass = std::all_of(r.units.begin(), r.units.end(), [](const UnitRank& u) { return u.pass; });
    return r;
}

std::vector<Eigen::Index> children_of_action(const TransitionSpec& spec, int l) {
    std::vector<Eigen::Index> ch;
    for (Eigen::Index i = 0; i < spec.dz(); ++i)
        if (spec.graph.ga(i, l)) ch.push_back(i);
    return ch;
}

int max_children(const TransitionSpec& spec) {
    int m = 1;
    for (int l = 0; l < spec.da(); ++l) m = std::max(m, static_cast<int>(spec.graph.ga.col(l).sum()));
    return m;
}

Eigen::MatrixXd restrict_rows(const std::vector<Eigen::VectorXd>& vecs, const std::vector<Eigen::Index>& idx) {
    Eigen::MatrixXd M(vecs.size(), idx.size());
    for (std::size_t r = 0; r < vecs.size(); ++r)
        for (std::size_t c = 0; c < idx.size(); ++c) M(r, c) = vecs[r](idx[c]);
    return M;
}

Eigen::MatrixXd vectorize_on_support(const std::vector<Eigen::MatrixXd>& mats, const BinMat& g) {
    const auto supp = support_of(g);
    Eigen::MatrixXd M(mats.size(), supp.size());
    for (std::size_t r = 0; r < mats.size(); ++r)
        for (std::size_t c = 0; c < supp.size(); ++c) M(r, c) = mats[r](supp[c].first, supp[c].second);
    return M;
}

}  // namespace

InfluenceReport check_influence_a_cont(const TransitionSpec& spec, int n_probe, double tol, std::uint64_t seed) {
    spec.validate();
    if (!uses_actions(spec.family) || discrete_actions(spec.family))
        throw std::invalid_argument("check_influence_a_cont: needs a continuous-action family");
    const int n = n_probe > 0 ? n_probe : 4 * max_children(spec);
    std::mt19937_64 rng(seed);
    ProbeSampler sampler(spec, rng);
    const Eigen::VectorXd z = random_normal(spec.dz(), 1, rng);
    std::vector<Eigen::MatrixXd> hs;
    for (int r = 0; r < n; ++r) {
        const Eigen::MatrixXd zp = sampler.z_prev();
        const Eigen::VectorXd a = sampler.action();
        hs.push_back(hessian_z_a(spec, z, zp, a));
    }
    std::vector<UnitRank> units;
    for (int l = 0; l < spec.da(); ++l) {
        const auto ch = children_of_action(spec, l);
        std::vector<Eigen::VectorXd> cols;
        for (const auto& h : hs) cols.push_back(h.col(l));
        units.push_back(span_rank(restrict_rows(cols, ch), static_cast<int>(ch.size()), tol,
                                  "action " + std::to_string(l)));
    }
    return finish("a-cont", std::move(units), n, tol);
}

InfluenceReport check_influence_a_disc(const TransitionSpec& spec, const ActionSet& action_set, int n_probe,
                                       double tol, std::uint64_t seed) {
    spec.validate();
    if (!uses_actions(spec.family)) throw std::invalid_argument("check_influence_a_disc: family has no actions");
    const int n = n_probe > 0 ? n_probe : 4 * max_children(spec);
    std::mt19937_64 rng(seed);
    ProbeSampler sampler(spec, rng);
    const Eigen::VectorXd z = random_normal(spec.dz(), 1, rng);
    std::vector<Eigen::MatrixXd> zps;
    for (int r = 0; r < n; ++r) zps.push_back(sampler.z_prev());

    std::vector<UnitRank> units;
    for (int l = 0; l < spec.da(); ++l) {
        std::vector<Eigen::VectorXd> diffs;
        for (const auto& zp : zps)
            for (const auto& base : action_set)
                for (const auto& target : action_set) {
                    if (base.size() != spec.da() || target.size() != spec.da()) continue;
                    Eigen::VectorXd delta = target - base;
                    const double eps = delta(l);
                    delta(l) = 0.0;
                    if (eps == 0.0 || delta.cwiseAbs().maxCoeff() > 0.0) continue;
                    diffs.push_back(partial_difference_grad(spec, z, zp, base, l, eps, action_set));
                }
        const auto ch = children_of_action(spec, l);
        units.push_back(span_rank(restrict_rows(diffs, ch), static_cast<int>(ch.size()), tol,
                                  "action " + std::to_string(l)));
    }
    return finish("a-disc", std::move(units), n, tol);
}

InfluenceReport check_influence_z(const TransitionSpec& spec, int n_probe, double tol, std::uint64_t seed) {
    spec.validate();
    if (!uses_time(spec.family)) throw std::invalid_argument("check_influence_z: family has no time dependence");
    const int required = spec.graph.gz.sum();
    const int n = n_probe > 0 ? n_probe : 4 * std::max(1, required);
    std::mt19937_64 rng(seed);
    ProbeSampler sampler(spec, rng);
    const Eigen::VectorXd z = random_normal(spec.dz(), 1, rng);
    std::vector<Eigen::MatrixXd> hs;
    for (int r = 0; r < n; ++r) {
        Eigen::MatrixXd zp = sampler.z_prev();
        zp.col(0) = z;  // the conditioning lag coincides with the current value
        const Eigen::VectorXd a = sampler.action();
        hs.push_back(hessian_z_zprev(spec, z, zp, a, 1));
    }
    std::vector<UnitRank> units{span_rank(vectorize_on_support(hs, spec.graph.gz), required, tol, "gz support")};
    return finish("z", std::move(units), n, tol);
}

InfluenceReport check_influence_z_expfam(const TransitionSpec& spec, int n_probe, double tol, std::uint64_t seed) {
    spec.validate();
    if (!uses_time(spec.family))
        throw std::invalid_argument("check_influence_z_expfam: family has no time dependence");
    if (suff_stat_dim(spec) != 1)
        throw std::invalid_argument("check_influence_z_expfam: only constant-variance (k=1) families");
    const int required = spec.graph.gz.sum();
    const int n = n_probe > 0 ? n_probe : 4 * std::max(1, required);
    std::mt19937_64 rng(seed);
    ProbeSampler sampler(spec, rng);
    std::vector<Eigen::MatrixXd> js;
    for (int r = 0; r < n; ++r) {
        const Eigen::MatrixXd zp = sampler.z_prev();
        const Eigen::VectorXd a = sampler.action();
        // With lambda = mu/sigma and s(z) = z/sigma the sigma factors cancel.
        js.push_back(mean_jacobian_zprev(spec, zp, a, 1));
    }
    std::vector<UnitRank> units{span_rank(vectorize_on_support(js, spec.graph.gz), required, tol, "gz support")};
    return finish("z-expfam", std::move(units), n, tol);
}

Eigen::VectorXd natural_params(const TransitionSpec& spec, const ProbePoint& p) {
    const Eigen::VectorXd mu = mean(spec, p.z_prev, p.a_prev);
    const Eigen::VectorXd var = variance(spec, p.z_prev, p.a_prev);
    if (suff_stat_dim(spec) == 1) return mu.array() / var.array().sqrt();
    Eigen::VectorXd lam(2 * spec.dz());
    lam << (mu.array() / var.array()).matrix(), (-0.5 / var.array()).matrix();
    return lam;
}

InfluenceReport check_sufficient_variability(const TransitionSpec& spec, const std::vector<ProbePoint>& probe_points,
                                             double tol) {
    spec.validate();
    const int k = suff_stat_dim(spec);
    const int required = k * spec.dz();
    std::vector<UnitRank> units;
    if (probe_points.size() < 2) {
        units.push_back(span_rank(Eigen::MatrixXd(0, required), required, tol, "lambda differences"));
    } else {
        const Eigen::VectorXd ref = natural_params(spec, probe_points.front());
        Eigen::MatrixXd rows(probe_points.size() - 1, required);
        for (std::size_t r = 1; r < probe_points.size(); ++r)
            rows.row(r - 1) = (natural_params(spec, probe_points[r]) - ref).transpose();
        units.push_back(span_rank(rows, required, tol, "lambda differences"));
    }
    return finish("variability", std::move(units), static_cast<int>(probe_points.size()), tol);
}

std::vector<ProbePoint> default_variability_probes(const TransitionSpec& spec, std::uint64_t seed) {
    const Eigen::Index L = std::max(1, lags(spec.family));
    std::vector<ProbePoint> pts;
    if (discrete_actions(spec.family)) {
        for (const auto& a : default_action_set(spec.da()))
            pts.push_back({Eigen::MatrixXd::Zero(spec.dz(), L), a});
        return pts;
    }
    std::mt19937_64 rng(seed);
    ProbeSampler sampler(spec, rng);
    pts.push_back({Eigen::MatrixXd::Zero(spec.dz(), L), Eigen::VectorXd::Zero(spec.da())});
    const int n = 4 * suff_stat_dim(spec) * spec.dz();
    for (int r = 0; r < n; ++r) {
        Eigen::MatrixXd zp = sampler.z_prev();
        Eigen::VectorXd a = sampler.action();
        pts.push_back({zp, a});
    }
    return pts;
}

Eigen::VectorXd sample_transition(const TransitionSpec& spec, const Eigen::MatrixXd& z_prev,
                                  const Eigen::VectorXd& a_prev, std::mt19937_64& rng) {
    const Eigen::VectorXd mu = mean(spec, z_prev, a_prev);
    const Eigen::VectorXd sd = variance(spec, z_prev, a_prev).array().sqrt();
    return mu + sd.cwiseProduct(random_normal(spec.dz(), 1, rng));
}

nlohmann::json binmat_to_json(const BinMat& g) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
        std::vector<int> r(g.cols());
        for (Eigen::Index j = 0; j < g.cols(); ++j) r[j] = g(i, j);
        rows.push_back(r);
    }
    return rows;
}

BinMat binmat_from_json(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
        throw std::invalid_argument("graph JSON: wrong number of rows");
    BinMat g(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        if (static_cast<Eigen::Index>(j[i].size()) != cols) throw std::invalid_argument("graph JSON: ragged row");
        for (Eigen::Index k = 0; k < cols; ++k) g(i, k) = j[i][k].get<int>();
    }
    if (!is_binary(g)) throw std::invalid_argument("graph JSON: entries must be 0/1");
    return g;
}

namespace {

nlohmann::json dense_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::vector<double> r(m.cols());
        for (Eigen::Index j = 0; j < m.cols(); ++j) r[j] = m(i, j);
        rows.push_back(r);
    }
    return rows;
}

Eigen::MatrixXd dense_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.empty()) return Eigen::MatrixXd();
    Eigen::MatrixXd m(j.size(), j[0].size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (j[i].size() != static_cast<std::size_t>(m.cols())) throw std::invalid_argument("matrix JSON: ragged row");
        for (std::size_t k = 0; k < j[i].size(); ++k) m(i, k) = j[i][k].get<double>();
    }
    return m;
}

}  // namespace

nlohmann::json spec_to_json(const TransitionSpec& spec) {
    nlohmann::json j;
    j["family"] = to_string(spec.family);
    j["d_z"] = spec.dz();
    j["d_a"] = spec.da();
    j["gz"] = binmat_to_json(spec.graph.gz);
    j["ga"] = binmat_to_json(spec.graph.ga);
    j["base_variance"] = spec.base_variance;
    j["edge_prob"] = spec.edge_prob;
    if (spec.weight.size()) j["weight"] = dense_to_json(spec.weight);
    if (spec.interv_mean.size())
        j["interv_mean"] = std::vector<double>(spec.interv_mean.data(), spec.interv_mean.data() + spec.interv_mean.size());
    if (spec.interv_shift.size())
        j["interv_shift"] =
            std::vector<double>(spec.interv_shift.data(), spec.interv_shift.data() + spec.interv_shift.size());
    return j;
}

TransitionSpec spec_from_json(const nlohmann::json& j) {
    TransitionSpec s;
    s.family = parse_family(j.at("family").get<std::string>());
    const int dz = j.at("d_z").get<int>();
    const int da = j.at("d_a").get<int>();
    s.graph.gz = binmat_from_json(j.at("gz"), dz, dz);
    s.graph.ga = da > 0 ? binmat_from_json(j.at("ga"), dz, da) : BinMat::Zero(dz, 0);
    s.base_variance = j.at("base_variance").get<double>();
    s.edge_prob = j.value("edge_prob", 0.5);
    if (j.contains("weight")) s.weight = dense_from_json(j["weight"]);
    if (j.contains("interv_mean")) {
        auto v = j["interv_mean"].get<std::vector<double>>();
        s.interv_mean = Eigen::Map<Eigen::VectorXd>(v.data(), v.size());
    }
    if (j.contains("interv_shift")) {
        auto v = j["interv_shift"].get<std::vector<double>>();
        s.interv_shift = Eigen::Map<Eigen::VectorXd>(v.data(), v.size());
    }
    s.validate();
    return s;
}

}  // namespace mechsparse
