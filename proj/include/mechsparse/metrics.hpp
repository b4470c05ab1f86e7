#pragma once
// Disentanglement scores between ground-truth latents Z and learned codes Zhat (rows are samples).

#include "mechsparse/graph_algebra.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mechsparse {

// Pearson correlations, K(i, j) = corr(Z_i, Zhat_j). Throws on a zero-variance column.
Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& Zhat);

// Assignment sigma maximising sum_i W(i, sigma(i)) for a square W (Hungarian method).
Permutation max_weight_assignment(const Eigen::MatrixXd& W);

struct MccResult {
    double score = 0.0;
    Permutation perm;   // true coordinate i is matched with learned coordinate perm[i]
    Eigen::MatrixXd K;
};
MccResult mcc(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& Zhat);

struct RResult {
    double score = 0.0;
    Eigen::MatrixXd L;                   // standardized coefficients, row i predicts Z_i from Zhat
    std::vector<double> per_coordinate;
    bool ridge = false;                  // a rank-deficient design fell back to ridge
};
RResult r_score(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& Zhat);

struct RConResult {
    double score = 0.0;
    std::vector<double> per_coordinate;
    std::vector<std::vector<int>> features;  // allowed indices into the permuted codes, per true coordinate
    BinMat mask;
    Permutation perm;
    bool ridge = false;
};
// perm defaults to the MCC assignment.
RConResult r_con(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& Zhat, const BinaryGraph& graph, Consistency mode,
                 const std::optional<Permutation>& perm = std::nullopt);

// Normalised structural Hamming distance after aligning the learned graph with perm.
double shd(const BinaryGraph& truth, const BinaryGraph& learned, const Permutation& perm);
// The learned graph expressed in ground-truth coordinates: gz(i, j) = learned.gz(perm[i], perm[j]).
BinaryGraph permute_graph(const BinaryGraph& learned, const Permutation& perm);

struct UdrResult {
    bool admissible = false;          // false: fewer than two runs survive the edge filter
    std::string message;
    double score = 0.0;               // median pairwise MCC among admitted runs
    std::vector<bool> selected;       // per run: admitted by the edge filter
    Eigen::MatrixXd pairwise;         // pairwise MCC (NaN where a run was excluded)
};
UdrResult udr(const std::vector<Eigen::MatrixXd>& codes, const std::vector<double>& edge_counts, double min_edges);

struct EvalReport {
    double mcc = 0.0, r = 0.0, r_con = 0.0, shd = 0.0;
    Permutation p_hat;
    Eigen::MatrixXd l_hat;
    Eigen::MatrixXd K;
    Consistency mode = Consistency::AZ;
    BinaryGraph graph;  // learned graph, unpermuted
    bool ridge = false;
};

EvalReport evaluate(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& Zhat, const BinaryGraph& truth,
                    const BinaryGraph& learned, Consistency mode);

nlohmann::json to_json(const EvalReport& r);
// |L P| normalised by its largest entry: column j holds the learned coordinate matched to j.
Eigen::MatrixXd aligned_abs_coefficients(const EvalReport& r);
// Writes report.json, K.csv, LP.csv, gz_perm.csv, ga_perm.csv.
void dump_report(const EvalReport& r, const BinaryGraph& truth, const std::filesystem::path& dir);

}  // namespace mechsparse
