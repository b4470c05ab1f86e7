#include "mechsparse/graph_algebra.hpp"

#include <algorithm>
#include <numeric>

namespace mechsparse {

bool is_binary(const BinMat& g) {
    return ((g.array() == 0) || (g.array() == 1)).all();
}

void BinaryGraph::validate() const {
    if (gz.rows() != gz.cols()) throw std::invalid_argument("BinaryGraph: gz must be square");
    if (ga.rows() != gz.rows())
        throw std::invalid_argument("BinaryGraph: ga must have d_z rows");
    if (gz.rows() < 1) throw std::invalid_argument("BinaryGraph: d_z must be positive");
    if (!is_binary(gz) || !is_binary(ga)) throw std::invalid_argument("BinaryGraph: entries must be 0/1");
}

Consistency parse_consistency(const std::string& s) {
    if (s == "a" || s == "A") return Consistency::A;
    if (s == "z" || s == "Z") return Consistency::Z;
    if (s == "az" || s == "AZ") return Consistency::AZ;
    throw std::invalid_argument("unknown consistency mode: " + s);
}

std::string to_string(Consistency c) {
    switch (c) {
        case Consistency::A: return "a";
        case Consistency::Z: return "z";
        case Consistency::AZ: return "az";
    }
    return "?";
}

BinMat maximal_preserving_mask(const BinMat& g) {
    const Eigen::Index m = g.rows();
    BinMat mask(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) {
            // row_i subset of row_j  <=>  no column where g_i = 1 and g_j = 0
            bool subset = true;
            for (Eigen::Index k = 0; k < g.cols() && subset; ++k)
                if (g(i, k) && !g(j, k)) subset = false;
            mask(i, j) = subset ? 1 : 0;
        }
    return mask;
}

EntanglementMask entanglement_mask(const BinaryGraph& graph, Consistency mode) {
    graph.validate();
    const int d = graph.dz();
    BinMat mask = BinMat::Ones(d, d);
    auto z_part = [&] {
        return maximal_preserving_mask(graph.gz).cwiseProduct(
            maximal_preserving_mask(graph.gz.transpose()));
    };
    switch (mode) {
        case Consistency::A:
            if (graph.da() == 0) throw std::invalid_argument("entanglement_mask: A mode needs d_a >= 1");
            mask = maximal_preserving_mask(graph.ga);
            break;
        case Consistency::Z:
            mask = z_part();
            break;
        case Consistency::AZ:
            mask = z_part();
            if (graph.da() > 0) mask = mask.cwiseProduct(maximal_preserving_mask(graph.ga));
            break;
    }
    return {mask, mode};
}

CriterionResult check_graphical_criterion(const BinaryGraph& graph) {
    graph.validate();
    const int d = graph.dz();
    CriterionResult out;
    out.holds = true;
    out.witness.resize(d);
    for (int i = 0; i < d; ++i) {
        std::vector<char> keep(d, 1);
        auto intersect_with = [&](auto member) {
            for (int k = 0; k < d; ++k)
                if (!member(k)) keep[k] = 0;
        };
        for (int j = 0; j < d; ++j) {
            // child j of z_i: intersect with parents of z_j
            if (graph.gz(j, i)) intersect_with([&](int k) { return graph.gz(j, k) != 0; });
            // parent j of z_i: intersect with children of z_j
            if (graph.gz(i, j)) intersect_with([&](int k) { return graph.gz(k, j) != 0; });
        }
        for (int l = 0; l < graph.da(); ++l)
            if (graph.ga(i, l)) intersect_with([&](int k) { return graph.ga(k, l) != 0; });
        for (int k = 0; k < d; ++k)
            if (keep[k]) out.witness[i].push_back(k);
        if (out.witness[i] != std::vector<int>{i}) out.holds = false;
    }
    return out;
}

bool two_cycle_sufficient(const BinMat& gz) {
    if (gz.rows() != gz.cols()) throw std::invalid_argument("two_cycle_sufficient: gz must be square");
    for (Eigen::Index i = 0; i < gz.rows(); ++i) {
        if (!gz(i, i)) return false;
        for (Eigen::Index j = i + 1; j < gz.cols(); ++j)
            if (gz(i, j) && gz(j, i)) return false;
    }
    return true;
}

namespace {

bool augment(int row, const std::vector<std::vector<int>>& adj, std::vector<int>& col_owner,
             std::vector<char>& seen) {
    for (int c : adj[row]) {
        if (seen[c]) continue;
        seen[c] = 1;
        if (col_owner[c] < 0 || augment(col_owner[c], adj, col_owner, seen)) {
            col_owner[c] = row;
            return true;
        }
    }
    return false;
}

}  // namespace

Permutation contained_permutation(const Eigen::MatrixXd& L, double det_floor) {
    if (L.rows() != L.cols()) throw std::invalid_argument("contained_permutation: L must be square");
    const int m = static_cast<int>(L.rows());
    if (m == 0) return {};
    if (std::abs(L.fullPivLu().determinant()) <= det_floor)
        throw std::invalid_argument("contained_permutation: L is singular");
    std::vector<std::vector<int>> adj(m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            if (L(i, j) != 0.0) adj[i].push_back(j);
    std::vector<int> col_owner(m, -1);
    for (int i = 0; i < m; ++i) {
        std::vector<char> seen(m, 0);
        if (!augment(i, adj, col_owner, seen))
            throw std::runtime_error("contained_permutation: no perfect matching on nonzero pattern");
    }
    Permutation sigma(m);
    for (int c = 0; c < m; ++c) sigma[col_owner[c]] = c;
    return sigma;
}

std::vector<Permutation> permutations_in_mask(const BinMat& mask) {
    const int m = static_cast<int>(mask.rows());
    if (mask.cols() != m) throw std::invalid_argument("permutations_in_mask: mask must be square");
    if (m > 10) throw std::invalid_argument("permutations_in_mask: m must be <= 10");
    std::vector<Permutation> out;
    Permutation sigma(m);
    std::iota(sigma.begin(), sigma.end(), 0);
    do {
        bool ok = true;
        for (int i = 0; i < m && ok; ++i) ok = mask(i, sigma[i]) != 0;
        if (ok) out.push_back(sigma);
    } while (std::next_permutation(sigma.begin(), sigma.end()));
    return out;
}

std::vector<Permutation> preserving_permutations(const BinMat& g) {
    if (g.rows() > 10) throw std::invalid_argument("preserving_permutations: m must be <= 10");
    return permutations_in_mask(maximal_preserving_mask(g));
}

Eigen::MatrixXd permutation_matrix(const Permutation& sigma) {
    const int m = static_cast<int>(sigma.size());
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) P(sigma[i], i) = 1.0;
    return P;
}

bool is_permutation(const Permutation& sigma, int n) {
    if (static_cast<int>(sigma.size()) != n) return false;
    std::vector<char> hit(n, 0);
    for (int s : sigma) {
        if (s < 0 || s >= n || hit[s]) return false;
        hit[s] = 1;
    }
    return true;
}

}  // namespace mechsparse
