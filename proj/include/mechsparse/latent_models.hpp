#pragma once

#include "mechsparse/graph_algebra.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace mechsparse {

enum class Family {
    ACTION_DIAG,
    ACTION_NONDIAG,
    ACTION_NONDIAG_LINEAR,
    ACTION_NONDIAG_HETERO,
    TIME_DIAG,
    TIME_NONDIAG,
    TIME_NONDIAG_LINEAR,
    TIME_NONDIAG_HETERO,
    ACTION_BLOCK_DIAG,
    ACTION_BLOCK_NONDIAG,
    TIME_BLOCK_DIAG,
    TIME_BLOCK_NONDIAG,
    RANDOM_GRAPH_ACTION,
    RANDOM_GRAPH_TIME,
    EX_SINGLE_TARGET_INTERV,
    EX_MULTI_TARGET_INTERV_TIME,
    EX_NONMARKOV_W,
    EX_MARKOV_POLY,
};

std::string to_string(Family f);
Family parse_family(const std::string& s);
std::vector<Family> all_families();

struct TransitionSpec {
    Family family = Family::ACTION_DIAG;
    BinaryGraph graph;
    double base_variance = 1e-4;
    Eigen::MatrixXd weight;        // linear variants (d_z x d_a or d_z x d_z); the map g of the time intervention example
    Eigen::VectorXd interv_mean;   // per-target shift of the intervention example
    Eigen::VectorXd interv_shift;  // per-target variance shift of the intervention example
    double edge_prob = 0.5;        // random-graph families

    int dz() const { return graph.dz(); }
    int da() const { return graph.da(); }
    void validate() const;
};

// Family traits.
bool uses_time(Family f);            // mean depends on z_prev
bool uses_actions(Family f);         // mean depends on a_prev
bool discrete_actions(Family f);     // actions drawn from a finite set
int lags(Family f);                  // number of past latent lags consumed
int suff_stat_dim(const TransitionSpec& spec);  // k: 1 if variance is constant, else 2

struct FamilyOptions {
    std::optional<double> base_variance;  // unset: 1e-4 for dataset families, 1 for worked examples
    double edge_prob = 0.5;
    std::optional<BinaryGraph> graph;  // override the family's default graph
};

// Default graph and parameters for a family. d_a is ignored by families that fix it.
TransitionSpec make_spec(Family f, int dz, int da, std::uint64_t seed, const FamilyOptions& opt = {});

// Canonical graphs.
namespace graphs {
BinMat identity(int d);
BinMat double_diagonal(int d);
BinMat lower_triangular(int d);
BinMat action_block(int da, bool nondiag);
BinMat time_block(int dz, bool nondiag);
BinMat multi_target3();
}  // namespace graphs

// z_prev holds one lag per column, column 0 the most recent; a plain vector is a single lag.
Eigen::VectorXd mean(const TransitionSpec& spec, const Eigen::MatrixXd& z_prev, const Eigen::VectorXd& a_prev);
Eigen::VectorXd variance(const TransitionSpec& spec, const Eigen::MatrixXd& z_prev, const Eigen::VectorXd& a_prev);
double log_density(const TransitionSpec& spec, const Eigen::VectorXd& z, const Eigen::MatrixXd& z_prev,
                   const Eigen::VectorXd& a_prev);
Eigen::VectorXd log_density_grad_z(const TransitionSpec& spec, const Eigen::VectorXd& z,
                                   const Eigen::MatrixXd& z_prev, const Eigen::VectorXd& a_prev);

Eigen::MatrixXd hessian_z_a(const TransitionSpec& spec, const Eigen::VectorXd& z, const Eigen::MatrixXd& z_prev,
                            const Eigen::VectorXd& a_prev, double step = 1e-4);
// lag = 1 differentiates w.r.t. z^{t-1}, lag = 2 w.r.t. z^{t-2}.
Eigen::MatrixXd hessian_z_zprev(const TransitionSpec& spec, const Eigen::VectorXd& z, const Eigen::MatrixXd& z_prev,
                                const Eigen::VectorXd& a_prev, int lag = 1, double step = 1e-4);
// Jacobian of the mean w.r.t. one lag, by central differences.
Eigen::MatrixXd mean_jacobian_zprev(const TransitionSpec& spec, const Eigen::MatrixXd& z_prev,
                                    const Eigen::VectorXd& a_prev, int lag = 1, double step = 1e-4);

using ActionSet = std::vector<Eigen::VectorXd>;
// {0, e_1, ..., e_{d_a}}
ActionSet default_action_set(int da);

Eigen::VectorXd partial_difference_grad(const TransitionSpec& spec, const Eigen::VectorXd& z,
                                        const Eigen::MatrixXd& z_prev, const Eigen::VectorXd& a_base, int l,
                                        double eps, const ActionSet& action_set);

struct UnitRank {
    std::string label;
    int rank = 0;
    int required = 0;
    std::vector<double> singular_values;  // descending, unnormalized
    double margin = 0.0;  // (sigma_required / sigma_max) / tol; > 1 means the needed direction clears tol
    bool pass = false;
};

struct InfluenceReport {
    std::string target;
    std::vector<UnitRank> units;
    int n_probe = 0;
    double tol = 1e-6;
    bool pass = false;
};

nlohmann::json to_json(const InfluenceReport& r);

// Rank of the row space of M: singular values above tol * sigma_max.
UnitRank span_rank(const Eigen::MatrixXd& rows, int required, double tol, std::string label);

InfluenceReport check_influence_a_cont(const TransitionSpec& spec, int n_probe = 0, double tol = 1e-6,
                                       std::uint64_t seed = 0);
InfluenceReport check_influence_a_disc(const TransitionSpec& spec, const ActionSet& action_set, int n_probe = 0,
                                       double tol = 1e-6, std::uint64_t seed = 0);
InfluenceReport check_influence_z(const TransitionSpec& spec, int n_probe = 0, double tol = 1e-6,
                                  std::uint64_t seed = 0);
InfluenceReport check_influence_z_expfam(const TransitionSpec& spec, int n_probe = 0, double tol = 1e-6,
                                         std::uint64_t seed = 0);

struct ProbePoint {
    Eigen::MatrixXd z_prev;
    Eigen::VectorXd a_prev;
};

// Natural parameters: k=1 gives mu/sigma, k=2 gives (mu/sigma^2, -1/(2 sigma^2)) stacked.
Eigen::VectorXd natural_params(const TransitionSpec& spec, const ProbePoint& p);

// probe_points[0] is the reference point.
InfluenceReport check_sufficient_variability(const TransitionSpec& spec, const std::vector<ProbePoint>& probe_points,
                                             double tol = 1e-6);

// Default probe set: the action set for discrete families, else 1 + k*d_z random draws.
std::vector<ProbePoint> default_variability_probes(const TransitionSpec& spec, std::uint64_t seed);

// One transition draw.
Eigen::VectorXd sample_transition(const TransitionSpec& spec, const Eigen::MatrixXd& z_prev,
                                  const Eigen::VectorXd& a_prev, std::mt19937_64& rng);

nlohmann::json spec_to_json(const TransitionSpec& spec);
TransitionSpec spec_from_json(const nlohmann::json& j);
nlohmann::json binmat_to_json(const BinMat& g);
BinMat binmat_from_json(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols);

}  // namespace mechsparse
