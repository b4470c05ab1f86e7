#include "mechsparse/sparse_vae.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace mechsparse {

namespace {

constexpr double kVarFloor = 1e-6;
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

std::mt19937_64 sub_rng(std::uint64_t seed, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
    return std::mt19937_64(seq);
}

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

}  // namespace

void TrainConfig::validate(int max_edges) const {
    if (iters < 1) throw std::invalid_argument("iters must be >= 1");
    if (schedule_length() > iters) throw std::invalid_argument("schedule length exceeds total iterations");
    if (beta > max_edges) throw std::invalid_argument("beta exceeds the maximum edge count " + std::to_string(max_edges));
    if (batch < 1) throw std::invalid_argument("batch must be >= 1");
    if (!(temperature > 0)) throw std::invalid_argument("temperature must be positive");
    if (!(lr > 0) || lr_dual < 0) throw std::invalid_argument("learning rates must be positive");
    if (!(lr_final_factor > 0) || lr_final_factor > 1) throw std::invalid_argument("lr_final_factor must be in (0, 1]");
    if (log_every < 1) throw std::invalid_argument("log_every must be >= 1");
    if (nets.enc_width < 1 || nets.enc_layers < 0 || nets.trans_width < 1 || nets.trans_layers < 0)
        throw std::invalid_argument("bad network sizes");
}

double TrainConfig::beta_at(int it, int max_edges) const {
    const double target = beta < 0 ? max_edges : beta;
    const int len = schedule_length();
    if (len <= 0 || it >= len) return target;
    const double frac = static_cast<double>(it) / len;
    return max_edges + (target - max_edges) * frac;
}

double TrainConfig::lr_at(int it) const {
    const int start = schedule_length();
    if (lr_final_factor == 1.0 || it < start || iters <= start) return lr;
    const double frac = static_cast<double>(it - start) / (iters - start);
    return lr * (lr_final_factor + (1.0 - lr_final_factor) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac)));
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"beta", c.beta},
            {"learn_graph", c.learn_graph},
            {"iters", c.iters},
            {"schedule_iters", c.schedule_iters},
            {"lr", c.lr},
            {"lr_final_factor", c.lr_final_factor},
            {"lr_dual", c.lr_dual},
            {"batch", c.batch},
            {"temperature", c.temperature},
            {"gamma_init", c.gamma_init},
            {"seed", c.seed},
            {"log_every", c.log_every},
            {"nets",
             {{"enc_width", c.nets.enc_width},
              {"enc_layers", c.nets.enc_layers},
              {"trans_width", c.nets.trans_width},
              {"trans_layers", c.nets.trans_layers}}}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
    auto get = [&](const char* k, auto& dst) {
        if (j.contains(k)) dst = j.at(k).get<std::decay_t<decltype(dst)>>();
    };
    get("beta", c.beta);
    get("learn_graph", c.learn_graph);
    get("iters", c.iters);
    get("schedule_iters", c.schedule_iters);
    get("lr", c.lr);
    get("lr_final_factor", c.lr_final_factor);
    get("lr_dual", c.lr_dual);
    get("batch", c.batch);
    get("temperature", c.temperature);
    get("gamma_init", c.gamma_init);
    get("seed", c.seed);
    get("log_every", c.log_every);
    if (j.contains("nets")) {
        const auto& n = j.at("nets");
        if (n.contains("enc_width")) c.nets.enc_width = n.at("enc_width").get<int>();
        if (n.contains("enc_layers")) c.nets.enc_layers = n.at("enc_layers").get<int>();
        if (n.contains("trans_width")) c.nets.trans_width = n.at("trans_width").get<int>();
        if (n.contains("trans_layers")) c.nets.trans_layers = n.at("trans_layers").get<int>();
    }
    return c;
}

// ---- networks ----

Mlp::Mlp(const std::string& name, const std::vector<int>& widths, std::mt19937_64& rng) {
    if (widths.size() < 2) throw std::invalid_argument("Mlp needs at least input and output widths");
    std::normal_distribution<double> n01;
    for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
        const int in = widths[k], out = widths[k + 1];
        const bool last = k + 2 == widths.size();
        // He initialisation for leaky units; plain fan-in scaling on the linear output layer.
        const double sd = last ? std::sqrt(1.0 / std::max(in, 1))
                               : std::sqrt(2.0 / ((1.0 + negative_slope * negative_slope) * std::max(in, 1)));
        dk::Tensor w(in, out);
        for (Eigen::Index c = 0; c < w.cols(); ++c)
            for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = sd * n01(rng);
        W.emplace_back(name + ".W" + std::to_string(k), std::move(w));
        b.emplace_back(name + ".b" + std::to_string(k), dk::Tensor::Zero(1, out));
    }
}

dk::Var Mlp::forward(dk::Tape& tape, const dk::Var& x) {
    dk::Var h = x;
    for (std::size_t k = 0; k < W.size(); ++k) {
        h = dk::affine(h, tape.param(W[k]), tape.param(b[k]));
        if (k + 1 < W.size()) h = dk::leaky_relu(h, negative_slope);
    }
    return h;
}

Eigen::MatrixXd Mlp::eval(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd h = x;
    for (std::size_t k = 0; k < W.size(); ++k) {
        Eigen::MatrixXd next = h * W[k].value;
        next.rowwise() += b[k].value.row(0);
        if (k + 1 < W.size()) next = next.unaryExpr([s = negative_slope](double v) { return v > 0 ? v : s * v; });
        h = std::move(next);
    }
    return h;
}

void Mlp::collect(std::vector<dk::Parameter*>& out) {
    for (std::size_t k = 0; k < W.size(); ++k) {
        out.push_back(&W[k]);
        out.push_back(&b[k]);
    }
}

// ---- model ----

LearnedModel::LearnedModel(int dx_, int dz_, int da_, bool has_time_, bool has_actions_, bool learn_graph_,
                           const NetConfig& nets_, double gamma_init, std::uint64_t seed)
    : dx(dx_), dz(dz_), da(da_), has_time(has_time_), has_actions(has_actions_), learn_graph(learn_graph_),
      nets(nets_) {
    if (dx < 1 || dz < 1 || da < 0) throw std::invalid_argument("LearnedModel: bad dimensions");
    if (has_actions && da < 1) throw std::invalid_argument("LearnedModel: actions requested with d_a = 0");
    if (!has_time && !has_actions) throw std::invalid_argument("LearnedModel: transitions need z^{t-1} or a^{t-1}");
    auto rng = sub_rng(seed, 1);

    std::vector<int> enc{dx}, dec{dz};
    for (int k = 0; k < nets.enc_layers; ++k) {
        enc.push_back(nets.enc_width);
        dec.push_back(nets.enc_width);
    }
    enc.push_back(2 * dz);
    dec.push_back(dx);
    encoder = Mlp("encoder", enc, rng);
    decoder = Mlp("decoder", dec, rng);

    std::vector<int> tw{transition_inputs()};
    for (int k = 0; k < nets.trans_layers; ++k) tw.push_back(nets.trans_width);
    tw.push_back(1);
    for (int i = 0; i < dz; ++i) transition.emplace_back("transition" + std::to_string(i), tw, rng);

    trans_logv = dk::Parameter("trans_logv", dk::Tensor::Zero(1, dz));
    if (has_time) {
        init_mean = dk::Parameter("init_mean", dk::Tensor::Zero(1, dz));
        init_logv = dk::Parameter("init_logv", dk::Tensor::Zero(1, dz));
    }
    if (learn_graph) {
        if (has_time) gamma_z = dk::Parameter("gamma_z", dk::Tensor::Constant(dz, dz, gamma_init));
        if (has_actions) gamma_a = dk::Parameter("gamma_a", dk::Tensor::Constant(dz, da, gamma_init));
    }
    obs_logv = dk::Parameter("obs_logv", dk::Tensor::Zero(1, 1));
}

std::vector<dk::Parameter*> LearnedModel::params() {
    std::vector<dk::Parameter*> out;
    encoder.collect(out);
    decoder.collect(out);
    for (auto& t : transition) t.collect(out);
    out.push_back(&trans_logv);
    if (has_time) {
        out.push_back(&init_mean);
        out.push_back(&init_logv);
    }
    if (learn_graph && has_time) out.push_back(&gamma_z);
    if (learn_graph && has_actions) out.push_back(&gamma_a);
    out.push_back(&obs_logv);
    return out;
}

std::vector<const dk::Parameter*> LearnedModel::params() const {
    auto ps = const_cast<LearnedModel*>(this)->params();
    return {ps.begin(), ps.end()};
}

double LearnedModel::expected_edges() const {
    auto sig = [](const dk::Tensor& g) { return (1.0 / (1.0 + (-g.array()).exp())).sum(); };
    double s = 0.0;
    if (learn_graph && has_time) s += sig(gamma_z.value);
    if (learn_graph && has_actions) s += sig(gamma_a.value);
    return s;
}

LearnedModel make_model(const Dataset& ds, const TrainConfig& cfg) {
    const bool has_time = ds.T > 1 && uses_time(ds.spec.family);
    const bool has_actions = ds.da > 0 && uses_actions(ds.spec.family);
    return LearnedModel(ds.dx, ds.dz, ds.da, has_time, has_actions, cfg.learn_graph, cfg.nets, cfg.gamma_init,
                        cfg.seed);
}

Batch make_batch(const Dataset& ds, const std::vector<int>& sequences) {
    Batch b;
    const Eigen::Index B = static_cast<Eigen::Index>(sequences.size());
    for (int t = 0; t < ds.T; ++t) {
        Eigen::MatrixXd x(B, ds.dx), a(B, ds.da);
        for (Eigen::Index r = 0; r < B; ++r) {
            const int n = sequences[static_cast<std::size_t>(r)];
            if (n < 0 || n >= ds.N) throw std::out_of_range("make_batch: sequence index out of range");
            x.row(r) = ds.X.row(ds.row(n, t)).cast<double>();
            if (ds.da > 0) a.row(r) = ds.A.row(ds.row(n, t)).cast<double>();
        }
        b.x.push_back(std::move(x));
        b.a.push_back(std::move(a));
    }
    return b;
}

// ---- masks and ELBO ----

MaskVars constant_masks(dk::Tape& tape, const LearnedModel& model, const BinMat& gz, const BinMat& ga) {
    dk::Tensor m(model.dz, model.transition_inputs());
    Eigen::Index off = 0;
    if (model.has_time) {
        if (gz.rows() != model.dz || gz.cols() != model.dz) throw std::invalid_argument("constant_masks: gz shape");
        m.middleCols(off, model.dz) = gz.cast<double>();
        off += model.dz;
    }
    if (model.has_actions) {
        if (ga.rows() != model.dz || ga.cols() != model.da) throw std::invalid_argument("constant_masks: ga shape");
        m.middleCols(off, model.da) = ga.cast<double>();
    }
    return {tape.constant(std::move(m))};
}

MaskVars sample_masks(dk::Tape& tape, LearnedModel& model, double temperature, std::mt19937_64& rng) {
    if (!model.learn_graph)
        return {tape.constant(dk::Tensor::Ones(model.dz, model.transition_inputs()))};
    std::vector<dk::Var> parts;
    if (model.has_time) parts.push_back(dk::gumbel_sigmoid(tape.param(model.gamma_z), temperature, rng));
    if (model.has_actions) parts.push_back(dk::gumbel_sigmoid(tape.param(model.gamma_a), temperature, rng));
    return {parts.size() == 1 ? parts.front() : dk::concat_cols(parts)};
}

std::vector<Eigen::MatrixXd> draw_noise(const Batch& batch, int dz, std::mt19937_64& rng) {
    std::normal_distribution<double> n01;
    std::vector<Eigen::MatrixXd> out;
    for (int t = 0; t < batch.steps(); ++t) {
        Eigen::MatrixXd e(batch.size(), dz);
        for (Eigen::Index c = 0; c < e.cols(); ++c)
            for (Eigen::Index r = 0; r < e.rows(); ++r) e(r, c) = n01(rng);
        out.push_back(std::move(e));
    }
    return out;
}

namespace {

// Transition means for a batch of inputs [z^{t-1} | a^{t-1}], each coordinate behind its own mask row.
dk::Var transition_mean(dk::Tape& tape, LearnedModel& model, const dk::Var& inputs, const MaskVars& masks) {
    std::vector<dk::Var> cols;
    cols.reserve(static_cast<std::size_t>(model.dz));
    for (int i = 0; i < model.dz; ++i) {
        dk::Var masked = dk::mul(inputs, dk::slice_rows(masks.mask, i, 1));
        cols.push_back(model.transition[static_cast<std::size_t>(i)].forward(tape, masked));
    }
    return dk::concat_cols(cols);
}

dk::Var floored_var(const dk::Var& logv) { return dk::add_scalar(dk::exp(logv), kVarFloor); }

}  // namespace

dk::Var elbo(dk::Tape& tape, LearnedModel& model, const Batch& batch, const MaskVars& masks,
             const std::vector<Eigen::MatrixXd>& noise, ElboParts* parts) {
    const int B = batch.size();
    const int T = batch.steps();
    if (B < 1) throw std::invalid_argument("elbo: empty batch");
    if (static_cast<int>(noise.size()) != T) throw std::invalid_argument("elbo: noise does not match time steps");
    if (masks.mask.rows() != model.dz || masks.mask.cols() != model.transition_inputs())
        throw std::invalid_argument("elbo: mask shape does not match model");
    for (int t = 0; t < T; ++t) {
        if (batch.x[t].rows() != B || batch.x[t].cols() != model.dx) throw std::invalid_argument("elbo: x shape");
        if (model.has_actions && (batch.a[t].rows() != B || batch.a[t].cols() != model.da))
            throw std::invalid_argument("elbo: a shape");
        if (noise[t].rows() != B || noise[t].cols() != model.dz) throw std::invalid_argument("elbo: noise shape");
    }
    const double inv_b = 1.0 / B;
    const dk::Var obs_var = floored_var(tape.param(model.obs_logv));
    const dk::Var log_obs_var = dk::log(obs_var);
    const dk::Var trans_var = floored_var(tape.param(model.trans_logv));

    std::vector<dk::Var> terms;
    double recon_total = 0.0, kl_total = 0.0, min_kl = 0.0;
    dk::Var z_prev;
    for (int t = 0; t < T; ++t) {
        const dk::Var x = tape.constant(batch.x[t]);
        const dk::Var enc = model.encoder.forward(tape, x);
        const dk::Var mq = dk::slice_cols(enc, 0, model.dz);
        const dk::Var vq = floored_var(dk::slice_cols(enc, model.dz, model.dz));
        const dk::Var z = dk::add(mq, dk::mul(dk::sqrt(vq), tape.constant(noise[t])));

        // log N(x; x_hat, s^2 I), summed over the batch
        const dk::Var xhat = model.decoder.forward(tape, z);
        const dk::Var sq = dk::sum(dk::square(dk::sub(x, xhat)));
        const double n_obs = static_cast<double>(B) * model.dx;
        const dk::Var recon = dk::scale(
            dk::add(dk::div(sq, obs_var), dk::add_scalar(dk::scale(log_obs_var, n_obs), n_obs * kLog2Pi)), -0.5);

        dk::Var pm, pv;
        if (model.has_time && t == 0) {
            pm = tape.param(model.init_mean);
            pv = floored_var(tape.param(model.init_logv));
        } else {
            std::vector<dk::Var> in;
            if (model.has_time) in.push_back(z_prev);
            if (model.has_actions) in.push_back(tape.constant(batch.a[t]));
            const dk::Var inputs = in.size() == 1 ? in.front() : dk::concat_cols(in);
            pm = transition_mean(tape, model, inputs, masks);
            pv = trans_var;
        }
        // 0.5 * (log pv - log vq + (vq + (mq - pm)^2) / pv - 1), per element
        const dk::Var kl_elem = dk::scale(
            dk::add_scalar(dk::add(dk::sub(dk::log(pv), dk::log(vq)), dk::div(dk::add(vq, dk::square(dk::sub(mq, pm))), pv)),
                           -1.0),
            0.5);
        const double kl_min = kl_elem.value().minCoeff();
        if (!(kl_min >= -1e-9)) {
            NumericAbort e("negative or non-finite KL term (min " + std::to_string(kl_min) + ") at step " +
                           std::to_string(t));
            throw e;
        }
        min_kl = t == 0 ? kl_min : std::min(min_kl, kl_min);
        const dk::Var kl = dk::sum(kl_elem);
        recon_total += recon.scalar() * inv_b;
        kl_total += kl.scalar() * inv_b;
        terms.push_back(dk::sub(recon, kl));
        z_prev = z;
    }
    dk::Var total = terms.front();
    for (std::size_t k = 1; k < terms.size(); ++k) total = dk::add(total, terms[k]);
    total = dk::scale(total, inv_b);
    if (!std::isfinite(total.scalar())) {
        NumericAbort e("non-finite ELBO: recon " + std::to_string(recon_total) + ", kl " + std::to_string(kl_total));
        throw e;
    }
    if (parts) *parts = {recon_total, kl_total, min_kl};
    return total;
}

dk::Var lagrangian(dk::Tape& tape, LearnedModel& model, const Batch& batch, const MaskVars& masks,
                   const std::vector<Eigen::MatrixXd>& noise, double alpha, double beta, ElboParts* parts) {
    if (alpha < 0) throw std::invalid_argument("lagrangian: alpha must be >= 0");
    const dk::Var e = elbo(tape, model, batch, masks, noise, parts);
    if (alpha == 0) return e;
    dk::Var l1 = tape.constant(dk::Tensor::Zero(1, 1));
    if (model.learn_graph && model.has_time) l1 = dk::add(l1, dk::sum(dk::sigmoid(tape.param(model.gamma_z))));
    if (model.learn_graph && model.has_actions) l1 = dk::add(l1, dk::sum(dk::sigmoid(tape.param(model.gamma_a))));
    return dk::sub(e, dk::scale(dk::add_scalar(l1, -beta), alpha));
}

double gaussian_kl(const Eigen::VectorXd& m1, const Eigen::VectorXd& v1, const Eigen::VectorXd& m2,
                   const Eigen::VectorXd& v2) {
    const Eigen::ArrayXd r = v1.array() / v2.array();
    return 0.5 * ((m1 - m2).array().square() / v2.array() + r - 1.0 - r.log()).sum();
}

// ---- training ----

TrainResult train(const Dataset& ds, const TrainConfig& cfg, const ProgressFn& progress) {
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult res;
    res.config = cfg;
    res.model = make_model(ds, cfg);
    LearnedModel& model = res.model;
    const int max_edges = model.max_edges();
    cfg.validate(max_edges);
    if (ds.N < 1) throw std::invalid_argument("train: empty dataset");

    auto batch_rng = sub_rng(cfg.seed, 2);
    auto mask_rng = sub_rng(cfg.seed, 3);
    auto noise_rng = sub_rng(cfg.seed, 4);
    std::uniform_int_distribution<int> pick(0, ds.N - 1);

    const auto params = model.params();
    dk::AdamState adam;
    double alpha = 0.0;
    auto last_good = std::make_shared<LearnedModel>(model);
    std::vector<int> seqs(static_cast<std::size_t>(cfg.batch));

    for (int it = 0; it < cfg.iters; ++it) {
        const double beta_t = cfg.beta_at(it, max_edges);
        for (auto& s : seqs) s = pick(batch_rng);
        const Batch batch = make_batch(ds, seqs);
        const auto noise = draw_noise(batch, model.dz, noise_rng);
        const double l1 = model.learn_graph ? model.expected_edges() : static_cast<double>(max_edges);

        ElboParts parts;
        dk::Tape tape;
        try {
            const MaskVars masks = sample_masks(tape, model, cfg.temperature, mask_rng);
            const dk::Var lag = lagrangian(tape, model, batch, masks, noise, alpha, beta_t, &parts);
            dk::zero_grad(params);
            tape.backward(dk::scale(lag, -1.0));
        } catch (NumericAbort& e) {
            e.iteration = it;
            e.last_good = last_good;
            throw;
        }
        bool finite = true;
        for (auto* p : params) finite = finite && all_finite(p->grad);
        if (!finite) {
            NumericAbort e("non-finite gradient at iteration " + std::to_string(it));
            e.iteration = it;
            e.last_good = last_good;
            throw e;
        }
        dk::adam_step(params, adam, cfg.lr_at(it));

        // Projected descent on the multiplier, restarted once the budget holds.
        if (model.learn_graph) {
            const double slack = l1 - beta_t;
            alpha = slack <= 0 ? 0.0 : std::max(0.0, alpha + cfg.lr_dual * slack);
        }

        if (it % cfg.log_every == 0 || it + 1 == cfg.iters) {
            LogRow row{it, parts.recon - parts.kl, l1, alpha, beta_t};
            res.log.push_back(row);
            if (progress) progress(row);
            *last_good = model;
        }
    }
    res.final_alpha = alpha;
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

Eigen::MatrixXd encode(const LearnedModel& model, const Eigen::MatrixXd& X) {
    if (X.cols() != model.dx) throw std::invalid_argument("encode: expected " + std::to_string(model.dx) + " columns");
    Eigen::MatrixXd out(X.rows(), model.dz);
    const Eigen::Index chunk = 4096;
    for (Eigen::Index r0 = 0; r0 < X.rows(); r0 += chunk) {
        const Eigen::Index m = std::min(chunk, X.rows() - r0);
        out.middleRows(r0, m) = model.encoder.eval(X.middleRows(r0, m)).leftCols(model.dz);
    }
    return out;
}

Eigen::MatrixXd encode(const LearnedModel& model, const Array3f& X) {
    return encode(model, Eigen::MatrixXd(X.cast<double>()));
}

BinaryGraph extract_graph(const LearnedModel& model, double threshold) {
    if (!(threshold > 0 && threshold < 1)) throw std::invalid_argument("extract_graph: threshold must be in (0, 1)");
    const double logit = std::log(threshold / (1 - threshold));
    BinMat gz = BinMat::Zero(model.dz, model.dz), ga = BinMat::Zero(model.dz, model.da);
    if (model.has_time)
        gz = model.learn_graph ? BinMat((model.gamma_z.value.array() > logit).cast<int>())
                               : BinMat(BinMat::Ones(model.dz, model.dz));
    if (model.has_actions)
        ga = model.learn_graph ? BinMat((model.gamma_a.value.array() > logit).cast<int>())
                               : BinMat(BinMat::Ones(model.dz, model.da));
    return BinaryGraph(gz, ga);
}

// ---- checkpoints ----

void save_checkpoint(const LearnedModel& model, const TrainConfig& cfg, const std::filesystem::path& dir,
                     const nlohmann::json& extra) {
    std::filesystem::create_directories(dir);
    nlohmann::json meta;
    meta["format"] = "mechsparse-checkpoint-1";
    meta["dx"] = model.dx;
    meta["dz"] = model.dz;
    meta["da"] = model.da;
    meta["has_time"] = model.has_time;
    meta["has_actions"] = model.has_actions;
    meta["learn_graph"] = model.learn_graph;
    meta["config"] = to_json(cfg);
    meta["extra"] = extra;
    auto& plist = meta["params"] = nlohmann::json::array();
    std::ofstream blob(dir / "params.f64", std::ios::binary | std::ios::trunc);
    if (!blob) throw std::runtime_error("cannot write " + (dir / "params.f64").string());
    std::size_t offset = 0;
    for (const auto* p : model.params()) {
        plist.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}, {"offset", offset}});
        blob.write(reinterpret_cast<const char*>(p->value.data()),
                   static_cast<std::streamsize>(p->value.size() * sizeof(double)));
        offset += static_cast<std::size_t>(p->value.size());
    }
    if (!blob) throw std::runtime_error("write failed: params.f64");
    std::ofstream os(dir / "meta.json", std::ios::trunc);
    os << meta.dump(2) << "\n";
    if (!os) throw std::runtime_error("write failed: meta.json");
}

LearnedModel load_checkpoint(const std::filesystem::path& dir, TrainConfig* cfg_out) {
    const auto meta_file = dir / "meta.json";
    const auto blob_file = dir / "params.f64";
    if (!std::filesystem::exists(meta_file)) throw std::runtime_error("missing file: " + meta_file.string());
    if (!std::filesystem::exists(blob_file)) throw std::runtime_error("missing file: " + blob_file.string());
    std::ifstream is(meta_file);
    const nlohmann::json meta = nlohmann::json::parse(is);
    const TrainConfig cfg = train_config_from_json(meta.at("config"));
    LearnedModel model(meta.at("dx").get<int>(), meta.at("dz").get<int>(), meta.at("da").get<int>(),
                       meta.at("has_time").get<bool>(), meta.at("has_actions").get<bool>(),
                       meta.at("learn_graph").get<bool>(), cfg.nets, cfg.gamma_init, cfg.seed);
    const auto params = model.params();
    const auto& plist = meta.at("params");
    if (plist.size() != params.size()) throw std::runtime_error("checkpoint parameter count mismatch");
    std::size_t total = 0;
    for (auto* p : params) total += static_cast<std::size_t>(p->value.size());
    if (std::filesystem::file_size(blob_file) != total * sizeof(double))
        throw std::runtime_error("checkpoint blob size mismatch");
    std::ifstream blob(blob_file, std::ios::binary);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto* p = params[k];
        const auto& e = plist[k];
        if (e.at("name").get<std::string>() != p->name || e.at("rows").get<Eigen::Index>() != p->value.rows() ||
            e.at("cols").get<Eigen::Index>() != p->value.cols())
            throw std::runtime_error("checkpoint parameter mismatch at " + p->name);
        blob.read(reinterpret_cast<char*>(p->value.data()),
                  static_cast<std::streamsize>(p->value.size() * sizeof(double)));
        p->zero_grad();
    }
    if (!blob) throw std::runtime_error("checkpoint blob read failed");
    if (cfg_out) *cfg_out = cfg;
    return model;
}

void write_log_csv(const std::vector<LogRow>& log, const std::filesystem::path& file) {
    std::ofstream os(file, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + file.string());
    os << "iter,elbo,l1_edges,alpha,beta\n";
    os.precision(10);
    for (const auto& r : log) os << r.iter << ',' << r.elbo << ',' << r.l1_edges << ',' << r.alpha << ',' << r.beta << '\n';
}

}  // namespace mechsparse
