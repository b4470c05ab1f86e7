#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace mechsparse {

// 0/1 adjacency pattern. Kept as int so it composes with Eigen reductions.
using BinMat = Eigen::MatrixXi;
using Permutation = std::vector<int>;

// gz(i,j)=1 : z_j at t-1 drives z_i at t.  ga(i,l)=1 : a_l at t-1 drives z_i at t.
struct BinaryGraph {
    BinMat gz;
    BinMat ga;

    BinaryGraph() = default;
    BinaryGraph(BinMat gz_, BinMat ga_) : gz(std::move(gz_)), ga(std::move(ga_)) { validate(); }

    int dz() const { return static_cast<int>(gz.rows()); }
    int da() const { return static_cast<int>(ga.cols()); }
    int edges() const { return gz.sum() + ga.sum(); }
    void validate() const;
};

enum class Consistency { A, Z, AZ };

Consistency parse_consistency(const std::string& s);
std::string to_string(Consistency c);

struct EntanglementMask {
    BinMat mask;
    Consistency mode;
};

bool is_binary(const BinMat& g);

// mask(i,j) = 1 iff row i of g is a subset of row j of g.
BinMat maximal_preserving_mask(const BinMat& g);

EntanglementMask entanglement_mask(const BinaryGraph& graph, Consistency mode);

template <typename Derived>
bool is_preserving(const Eigen::MatrixBase<Derived>& c, const BinMat& g, double tol = 1e-9) {
    if (tol < 0) throw std::invalid_argument("is_preserving: tol must be nonnegative");
    if (c.rows() != g.rows() || c.cols() != g.rows())
        throw std::invalid_argument("is_preserving: c must be m x m with m = rows(g)");
    const BinMat mask = maximal_preserving_mask(g);
    for (Eigen::Index i = 0; i < c.rows(); ++i)
        for (Eigen::Index j = 0; j < c.cols(); ++j)
            if (!mask(i, j) && std::abs(static_cast<double>(c(i, j))) > tol) return false;
    return true;
}

struct CriterionResult {
    bool holds = false;
    // Full intersection set per node (0-based indices).
    std::vector<std::vector<int>> witness;
};

CriterionResult check_graphical_criterion(const BinaryGraph& graph);

bool two_cycle_sufficient(const BinMat& gz);

// sigma with L(i, sigma[i]) != 0 for all i, via bipartite matching on the nonzero pattern.
Permutation contained_permutation(const Eigen::MatrixXd& L, double det_floor = 1e-12);

// All sigma with mask(i, sigma[i]) = 1 for every i, enumerated lexicographically (m <= 10).
std::vector<Permutation> permutations_in_mask(const BinMat& mask);
// Permutations inside the maximal preserving mask of g.
std::vector<Permutation> preserving_permutations(const BinMat& g);

// Permutation matrix P with P(sigma[i], i) = 1, so (P^T v)_i = v_{sigma[i]}.
Eigen::MatrixXd permutation_matrix(const Permutation& sigma);

bool is_permutation(const Permutation& sigma, int n);

}  // namespace mechsparse
