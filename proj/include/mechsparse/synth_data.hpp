#pragma once

#include "mechsparse/latent_models.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mechsparse {

// Rows indexed by n*T + t, columns by feature: the [n][t][dim] order of the on-disk layout.
using Array3f = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct DecoderOptions {
    int hidden_width = 0;        // 0: use d_x, so every layer keeps orthonormal columns
    int hidden_layers = 3;
    bool standardize_output = true;
    int standardize_probes = 10000;
};

struct DecoderSpec {
    std::vector<int> widths;              // [d_z, h, h, h, d_x]
    std::vector<Eigen::MatrixXd> weights;  // layer k maps widths[k] -> widths[k+1]; stored out x in
    double negative_slope = 0.2;
    std::uint64_t seed = 0;
    // Per-output affine standardisation applied after the last layer (identity when disabled).
    Eigen::VectorXd out_shift;
    Eigen::VectorXd out_scale;
    DecoderOptions options;

    int dz() const { return widths.front(); }
    int dx() const { return widths.back(); }
};

double decoder_layer_scale(int d_in, int d_out, double negative_slope = 0.2);

DecoderSpec build_decoder(int dz, int dx, std::uint64_t seed, const DecoderOptions& opt = {});

// Rows are latent points.
Eigen::MatrixXd decode(const DecoderSpec& dec, const Eigen::MatrixXd& Z);
// d_x x d_z Jacobian at one point, through the active LeakyReLU pieces.
Eigen::MatrixXd decoder_jacobian(const DecoderSpec& dec, const Eigen::VectorXd& z);

struct Dataset {
    Array3f X, A, Z;
    int N = 0, T = 0;
    int dx = 0, dz = 0, da = 0;
    TransitionSpec spec;
    std::uint64_t seed = 0;
    std::uint64_t decoder_seed = 0;
    double obs_sigma = 0.01;
    nlohmann::json decoder_meta;

    Eigen::Index row(int n, int t) const { return static_cast<Eigen::Index>(n) * T + t; }
    void validate() const;
};

Dataset sample_dataset(const TransitionSpec& spec, const DecoderSpec& dec, int N, int T, double obs_sigma,
                       std::uint64_t seed);

void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

nlohmann::json decoder_to_json(const DecoderSpec& dec);
// Rebuilds the decoder from its seed and options.
DecoderSpec decoder_from_json(const nlohmann::json& j);

// CSV rows of 0/1.
void write_binmat_csv(const BinMat& g, const std::filesystem::path& file);
BinMat read_binmat_csv(const std::filesystem::path& file);
void write_matrix_csv(const Eigen::MatrixXd& m, const std::filesystem::path& file);

}  // namespace mechsparse
