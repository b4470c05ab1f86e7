#include "mechsparse/synth_data.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace mechsparse {

static_assert(std::endian::native == std::endian::little, "raw dataset files assume a little-endian host");

namespace {

Eigen::MatrixXd leaky(const Eigen::MatrixXd& h, double slope) {
    return h.unaryExpr([slope](double v) { return v > 0 ? v : slope * v; });
}

Eigen::MatrixXd thin_q(const Eigen::MatrixXd& w) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(w);
    return qr.householderQ() * Eigen::MatrixXd::Identity(w.rows(), w.cols());
}

}  // namespace

double decoder_layer_scale(int d_in, int d_out, double negative_slope) {
    return std::sqrt(2.0 / (1.0 + negative_slope * negative_slope)) * std::sqrt(2.0 / (d_in + d_out));
}

DecoderSpec build_decoder(int dz, int dx, std::uint64_t seed, const DecoderOptions& opt) {
    if (dz < 1 || dx < 1) throw std::invalid_argument("build_decoder: dimensions must be positive");
    if (dz > dx) throw std::invalid_argument("build_decoder: d_z must not exceed d_x");
    DecoderSpec dec;
    dec.seed = seed;
    dec.options = opt;
    const int h = opt.hidden_width > 0 ? opt.hidden_width : dx;
    dec.widths.push_back(dz);
    for (int k = 0; k < opt.hidden_layers; ++k) dec.widths.push_back(h);
    dec.widths.push_back(dx);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01;
    for (std::size_t k = 0; k + 1 < dec.widths.size(); ++k) {
        const int din = dec.widths[k], dout = dec.widths[k + 1];
        Eigen::MatrixXd w(dout, din);
        for (Eigen::Index j = 0; j < w.cols(); ++j)
            for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = n01(rng);
        // Orthonormal columns when the layer widens; orthonormal rows when a custom width narrows it.
        w = dout >= din ? thin_q(w) : Eigen::MatrixXd(thin_q(w.transpose()).transpose());
        dec.weights.push_back(w * decoder_layer_scale(din, dout, dec.negative_slope));
    }

    dec.out_shift = Eigen::VectorXd::Zero(dx);
    dec.out_scale = Eigen::VectorXd::Ones(dx);
    if (opt.standardize_output) {
        std::mt19937_64 probe_rng(seed ^ 0x9e3779b97f4a7c15ULL);
        Eigen::MatrixXd Z(opt.standardize_probes, dz);
        for (Eigen::Index j = 0; j < Z.cols(); ++j)
            for (Eigen::Index i = 0; i < Z.rows(); ++i) Z(i, j) = n01(probe_rng);
        const Eigen::MatrixXd X = decode(dec, Z);
        const Eigen::RowVectorXd mu = X.colwise().mean();
        const Eigen::RowVectorXd sd = ((X.rowwise() - mu).array().square().colwise().mean()).sqrt();
        dec.out_shift = mu.transpose();
        dec.out_scale = sd.transpose().cwiseInverse();
    }
    return dec;
}

Eigen::MatrixXd decode(const DecoderSpec& dec, const Eigen::MatrixXd& Z) {
    if (Z.cols() != dec.dz()) throw std::invalid_argument("decode: latent dimension mismatch");
    Eigen::MatrixXd h = Z;
    for (std::size_t k = 0; k < dec.weights.size(); ++k) {
        h = h * dec.weights[k].transpose();
        if (k + 1 < dec.weights.size()) h = leaky(h, dec.negative_slope);
    }
    h.rowwise() -= dec.out_shift.transpose();
    return h.array().rowwise() * dec.out_scale.transpose().array();
}

Eigen::MatrixXd decoder_jacobian(const DecoderSpec& dec, const Eigen::VectorXd& z) {
    Eigen::VectorXd h = z;
    Eigen::MatrixXd J = Eigen::MatrixXd::Identity(dec.dz(), dec.dz());
    for (std::size_t k = 0; k < dec.weights.size(); ++k) {
        h = dec.weights[k] * h;
        J = dec.weights[k] * J;
        if (k + 1 < dec.weights.size()) {
            for (Eigen::Index i = 0; i < h.size(); ++i)
                if (h(i) <= 0) {
                    h(i) *= dec.negative_slope;
                    J.row(i) *= dec.negative_slope;
                }
        }
    }
    return dec.out_scale.asDiagonal() * J;
}

void Dataset::validate() const {
    const Eigen::Index rows = static_cast<Eigen::Index>(N) * T;
    if (N < 1 || T < 1) throw std::invalid_argument("Dataset: N and T must be positive");
    if (X.rows() != rows || X.cols() != dx) throw std::invalid_argument("Dataset: X shape mismatch");
    if (Z.rows() != rows || Z.cols() != dz) throw std::invalid_argument("Dataset: Z shape mismatch");
    if (A.rows() != rows || A.cols() != da) throw std::invalid_argument("Dataset: A shape mismatch");
    if (spec.dz() != dz || spec.da() != da) throw std::invalid_argument("Dataset: spec dims mismatch");
    if (!X.allFinite() || !Z.allFinite() || !A.allFinite()) throw std::invalid_argument("Dataset: non-finite entries");
}

Dataset sample_dataset(const TransitionSpec& spec, const DecoderSpec& dec, int N, int T, double obs_sigma,
                       std::uint64_t seed) {
    spec.validate();
    if (dec.dz() != spec.dz()) throw std::invalid_argument("sample_dataset: decoder/spec latent dims differ");
    if (N < 1) throw std::invalid_argument("sample_dataset: N must be positive");
    if (obs_sigma < 0) throw std::invalid_argument("sample_dataset: obs_sigma must be nonnegative");
    if (lags(spec.family) > 1)
        throw std::invalid_argument("sample_dataset: multi-lag families are for influence checks only");
    const bool time = uses_time(spec.family);
    if (time && T < 2) throw std::invalid_argument("sample_dataset: time families need T >= 2");
    if (T < 1) throw std::invalid_argument("sample_dataset: T must be positive");

    Dataset ds;
    ds.N = N;
    ds.T = T;
    ds.dz = spec.dz();
    ds.da = spec.da();
    ds.dx = dec.dx();
    ds.spec = spec;
    ds.seed = seed;
    ds.decoder_seed = dec.seed;
    ds.obs_sigma = obs_sigma;
    ds.decoder_meta = decoder_to_json(dec);
    const Eigen::Index rows = static_cast<Eigen::Index>(N) * T;
    ds.Z.resize(rows, ds.dz);
    ds.A.resize(rows, ds.da);
    ds.X.resize(rows, ds.dx);

    const ActionSet actions = discrete_actions(spec.family) ? default_action_set(spec.da()) : ActionSet{};
    Eigen::MatrixXd Zd(rows, ds.dz);
    for (int n = 0; n < N; ++n) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(n)};
        std::mt19937_64 rng(seq);
        std::normal_distribution<double> n01;
        std::uniform_real_distribution<double> unif(-2.0, 2.0);
        Eigen::VectorXd z_prev = Eigen::VectorXd::Zero(ds.dz);
        for (int t = 0; t < T; ++t) {
            Eigen::VectorXd a(ds.da);
            if (!actions.empty()) {
                std::uniform_int_distribution<std::size_t> pick(0, actions.size() - 1);
                a = actions[pick(rng)];
            } else {
                for (int l = 0; l < ds.da; ++l) a(l) = unif(rng);
            }
            Eigen::VectorXd z(ds.dz);
            if (time && t == 0) {
                for (int i = 0; i < ds.dz; ++i) z(i) = n01(rng);
            } else {
                z = sample_transition(spec, z_prev, a, rng);
            }
            const Eigen::Index r = ds.row(n, t);
            Zd.row(r) = z.transpose();
            ds.A.row(r) = a.transpose().cast<float>();
            z_prev = z;
        }
    }
    ds.Z = Zd.cast<float>();

    // Decode the stored (float) latents so X is consistent with what is saved.
    const Eigen::Index chunk = 8192;
    for (Eigen::Index r0 = 0; r0 < rows; r0 += chunk) {
        const Eigen::Index m = std::min(chunk, rows - r0);
        Eigen::MatrixXd fx = decode(dec, ds.Z.middleRows(r0, m).cast<double>());
        if (obs_sigma > 0) {
            std::mt19937_64 rng(seed ^ (0xa5a5a5a5ULL + static_cast<std::uint64_t>(r0)));
            std::normal_distribution<double> n01;
            for (Eigen::Index i = 0; i < fx.rows(); ++i)
                for (Eigen::Index j = 0; j < fx.cols(); ++j) fx(i, j) += obs_sigma * n01(rng);
        }
        ds.X.middleRows(r0, m) = fx.cast<float>();
    }
    ds.validate();
    return ds;
}

namespace {

void write_raw(const Array3f& a, const std::filesystem::path& file) {
    std::ofstream os(file, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + file.string());
    os.write(reinterpret_cast<const char*>(a.data()), static_cast<std::streamsize>(a.size() * sizeof(float)));
    if (!os) throw std::runtime_error("write failed: " + file.string());
}

Array3f read_raw(const std::filesystem::path& file, Eigen::Index rows, Eigen::Index cols) {
    if (!std::filesystem::exists(file)) throw std::runtime_error("missing file: " + file.string());
    const auto bytes = std::filesystem::file_size(file);
    const auto expected = static_cast<std::uintmax_t>(rows * cols) * sizeof(float);
    if (bytes != expected)
        throw std::runtime_error("shape mismatch in " + file.string() + ": " + std::to_string(bytes) +
                                 " bytes, expected " + std::to_string(expected));
    Array3f a(rows, cols);
    std::ifstream is(file, std::ios::binary);
    is.read(reinterpret_cast<char*>(a.data()), static_cast<std::streamsize>(expected));
    if (!is) throw std::runtime_error("read failed: " + file.string());
    return a;
}

}  // namespace

nlohmann::json decoder_to_json(const DecoderSpec& dec) {
    const DecoderOptions& opt = dec.options;
    nlohmann::json j;
    j["widths"] = dec.widths;
    j["seed"] = dec.seed;
    j["negative_slope"] = dec.negative_slope;
    j["hidden_width"] = opt.hidden_width;
    j["hidden_layers"] = opt.hidden_layers;
    j["standardize_output"] = opt.standardize_output;
    j["standardize_probes"] = opt.standardize_probes;
    return j;
}

DecoderSpec decoder_from_json(const nlohmann::json& j) {
    const auto widths = j.at("widths").get<std::vector<int>>();
    if (widths.size() < 2) throw std::runtime_error("decoder JSON: need at least two widths");
    DecoderOptions opt;
    opt.hidden_width = j.value("hidden_width", 0);
    opt.hidden_layers = j.value("hidden_layers", 3);
    opt.standardize_output = j.value("standardize_output", true);
    opt.standardize_probes = j.value("standardize_probes", 10000);
    return build_decoder(widths.front(), widths.back(), j.at("seed").get<std::uint64_t>(), opt);
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    ds.validate();
    std::filesystem::create_directories(dir);
    nlohmann::json meta;
    meta["N"] = ds.N;
    meta["T"] = ds.T;
    meta["d_x"] = ds.dx;
    meta["d_z"] = ds.dz;
    meta["d_a"] = ds.da;
    meta["seed"] = ds.seed;
    meta["decoder_seed"] = ds.decoder_seed;
    meta["obs_sigma"] = ds.obs_sigma;
    meta["spec"] = spec_to_json(ds.spec);
    meta["decoder"] = ds.decoder_meta;
    meta["layout"] = "raw little-endian float32, row-major [n][t][dim]";
    meta["action_semantics"] = "A[n][t] is the action feeding the transition into Z[n][t]";
    {
        std::ofstream os(dir / "meta.json", std::ios::trunc);
        if (!os) throw std::runtime_error("cannot write meta.json in " + dir.string());
        os << meta.dump(2) << "\n";
    }
    write_raw(ds.Z, dir / "z.f32");
    write_raw(ds.X, dir / "x.f32");
    write_raw(ds.A, dir / "a.f32");
    write_binmat_csv(ds.spec.graph.gz, dir / "gz.csv");
    write_binmat_csv(ds.spec.graph.ga, dir / "ga.csv");
}

Dataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream is(dir / "meta.json");
    if (!is) throw std::runtime_error("missing meta.json in " + dir.string());
    nlohmann::json meta;
    try {
        is >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("corrupt meta.json: ") + e.what());
    }
    Dataset ds;
    ds.N = meta.at("N").get<int>();
    ds.T = meta.at("T").get<int>();
    ds.dx = meta.at("d_x").get<int>();
    ds.dz = meta.at("d_z").get<int>();
    ds.da = meta.at("d_a").get<int>();
    ds.seed = meta.at("seed").get<std::uint64_t>();
    ds.decoder_seed = meta.at("decoder_seed").get<std::uint64_t>();
    ds.obs_sigma = meta.at("obs_sigma").get<double>();
    ds.spec = spec_from_json(meta.at("spec"));
    ds.decoder_meta = meta.value("decoder", nlohmann::json::object());
    if (ds.N < 1 || ds.T < 1 || ds.dx < 1 || ds.dz < 1 || ds.da < 0)
        throw std::runtime_error("meta.json: invalid dimensions");
    if (ds.spec.dz() != ds.dz || ds.spec.da() != ds.da)
        throw std::runtime_error("meta.json: spec dims disagree with declared dims");
    const Eigen::Index rows = static_cast<Eigen::Index>(ds.N) * ds.T;
    ds.Z = read_raw(dir / "z.f32", rows, ds.dz);
    ds.X = read_raw(dir / "x.f32", rows, ds.dx);
    ds.A = read_raw(dir / "a.f32", rows, ds.da);
    ds.validate();
    return ds;
}

void write_binmat_csv(const BinMat& g, const std::filesystem::path& file) {
    std::ofstream os(file, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + file.string());
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
        for (Eigen::Index j = 0; j < g.cols(); ++j) os << (j ? "," : "") << g(i, j);
        os << "\n";
    }
}

BinMat read_binmat_csv(const std::filesystem::path& file) {
    std::ifstream is(file);
    if (!is) throw std::runtime_error("cannot read " + file.string());
    std::vector<std::vector<int>> rows;
    std::string line;
    while (std::getline(is, line)) {
        std::vector<int> r;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) r.push_back(std::stoi(cell));
        rows.push_back(r);
    }
    if (rows.empty()) return BinMat();
    BinMat g(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows[0].size()) throw std::runtime_error("ragged CSV: " + file.string());
        for (std::size_t j = 0; j < rows[i].size(); ++j) g(i, j) = rows[i][j];
    }
    return g;
}

void write_matrix_csv(const Eigen::MatrixXd& m, const std::filesystem::path& file) {
    std::ofstream os(file, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + file.string());
    os.precision(10);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) os << (j ? "," : "") << m(i, j);
        os << "\n";
    }
}

}  // namespace mechsparse
