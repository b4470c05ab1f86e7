#pragma once
// Sequential VAE with masked per-coordinate transition networks and a constrained edge budget.

#include "mechsparse/diffkit.hpp"
#include "mechsparse/graph_algebra.hpp"
#include "mechsparse/synth_data.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mechsparse {

namespace dk = diffkit;

struct LearnedModel;

// Raised on non-finite losses or a negative KL term; carries the last finite parameters when known.
struct NumericAbort : std::runtime_error {
    using std::runtime_error::runtime_error;
    int iteration = -1;
    std::shared_ptr<LearnedModel> last_good;
};

struct NetConfig {
    int enc_width = 128;
    int enc_layers = 4;    // hidden layers of encoder and decoder
    int trans_width = 64;
    int trans_layers = 3;  // hidden layers of each transition network
};

struct TrainConfig {
    double beta = -1.0;       // expected edge budget; negative means the maximum
    bool learn_graph = true;  // false: every edge frozen on, no logits, no constraint
    int iters = 30000;
    int schedule_iters = -1;  // iterations for the budget to reach beta; negative means iters / 2
    double lr = 3e-3;
    double lr_final_factor = 1.0;  // lr decays to lr * factor (cosine) between schedule_length() and iters
    double lr_dual = 1e-2;
    int batch = 256;
    double temperature = 1.0;
    double gamma_init = 5.0;
    std::uint64_t seed = 0;
    NetConfig nets;
    int log_every = 100;

    void validate(int max_edges) const;
    int schedule_length() const { return schedule_iters < 0 ? iters / 2 : schedule_iters; }
    // Budget in force at iteration it: max_edges at 0, beta from schedule_length() on, linear between.
    double beta_at(int it, int max_edges) const;
    double lr_at(int it) const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct Mlp {
    std::vector<dk::Parameter> W, b;  // W[k] is in x out, b[k] is 1 x out
    double negative_slope = 0.2;

    Mlp() = default;
    Mlp(const std::string& name, const std::vector<int>& widths, std::mt19937_64& rng);
    dk::Var forward(dk::Tape& tape, const dk::Var& x);
    Eigen::MatrixXd eval(const Eigen::MatrixXd& x) const;
    void collect(std::vector<dk::Parameter*>& out);
};

struct LearnedModel {
    int dx = 0, dz = 0, da = 0;
    bool has_time = false;     // transitions consume z^{t-1}
    bool has_actions = false;  // transitions consume a^{t-1}
    bool learn_graph = true;
    NetConfig nets;

    Mlp encoder;               // x -> [mean, log-variance]
    Mlp decoder;               // z -> x
    std::vector<Mlp> transition;  // one per latent coordinate
    dk::Parameter trans_logv;  // 1 x d_z
    dk::Parameter init_mean, init_logv;  // 1 x d_z, time models only
    dk::Parameter gamma_z;     // d_z x d_z logits, time models that learn the graph
    dk::Parameter gamma_a;     // d_z x d_a logits, action models that learn the graph
    dk::Parameter obs_logv;    // 1 x 1

    LearnedModel() = default;
    LearnedModel(int dx, int dz, int da, bool has_time, bool has_actions, bool learn_graph, const NetConfig& nets,
                 double gamma_init, std::uint64_t seed);

    int transition_inputs() const { return (has_time ? dz : 0) + (has_actions ? da : 0); }
    int max_edges() const { return (has_time ? dz * dz : 0) + (has_actions ? dz * da : 0); }
    // Parameters in a fixed order; pointers stay valid while the model is not moved.
    std::vector<dk::Parameter*> params();
    std::vector<const dk::Parameter*> params() const;
    // Sum of sigmoid(gamma) over the learned logits: the expected edge count.
    double expected_edges() const;
};

// Model shaped for a dataset: time models when T > 1, action inputs when d_a > 0.
LearnedModel make_model(const Dataset& ds, const TrainConfig& cfg);

struct Batch {
    std::vector<Eigen::MatrixXd> x;  // per time step, B x d_x
    std::vector<Eigen::MatrixXd> a;  // per time step, B x d_a; a[t] precedes z^t
    int size() const { return x.empty() ? 0 : static_cast<int>(x.front().rows()); }
    int steps() const { return static_cast<int>(x.size()); }
};

Batch make_batch(const Dataset& ds, const std::vector<int>& sequences);

// Per-row transition masks; rows are latent coordinates, columns the transition inputs ([z | a]).
struct MaskVars {
    dk::Var mask;  // d_z x transition_inputs()
};

// Binary constant masks for evaluation and tests.
MaskVars constant_masks(dk::Tape& tape, const LearnedModel& model, const BinMat& gz, const BinMat& ga);
// One straight-through Gumbel sample of the learned logits; all-on when the graph is frozen.
MaskVars sample_masks(dk::Tape& tape, LearnedModel& model, double temperature, std::mt19937_64& rng);

struct ElboParts {
    double recon = 0.0;  // batch mean of the log-likelihood term
    double kl = 0.0;     // batch mean of the KL term
    double min_kl = 0.0;
};

// Reparametrisation noise, one B x d_z block per time step.
std::vector<Eigen::MatrixXd> draw_noise(const Batch& batch, int dz, std::mt19937_64& rng);

// Batch-mean ELBO on the tape.
dk::Var elbo(dk::Tape& tape, LearnedModel& model, const Batch& batch, const MaskVars& masks,
             const std::vector<Eigen::MatrixXd>& noise, ElboParts* parts = nullptr);

// elbo - alpha * (sum sigmoid(gamma) - beta). With no learned logits the penalty is alpha * beta.
dk::Var lagrangian(dk::Tape& tape, LearnedModel& model, const Batch& batch, const MaskVars& masks,
                   const std::vector<Eigen::MatrixXd>& noise, double alpha, double beta, ElboParts* parts = nullptr);

// Closed-form KL(N(m1, v1) || N(m2, v2)) summed over coordinates.
double gaussian_kl(const Eigen::VectorXd& m1, const Eigen::VectorXd& v1, const Eigen::VectorXd& m2,
                   const Eigen::VectorXd& v2);

struct LogRow {
    int iter = 0;
    double elbo = 0.0;
    double l1_edges = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
};

struct TrainResult {
    LearnedModel model;
    std::vector<LogRow> log;
    TrainConfig config;
    double final_alpha = 0.0;
    double seconds = 0.0;
};

using ProgressFn = std::function<void(const LogRow&)>;

TrainResult train(const Dataset& ds, const TrainConfig& cfg, const ProgressFn& progress = {});

// Posterior means for every row of X (rows n*T + t).
Eigen::MatrixXd encode(const LearnedModel& model, const Eigen::MatrixXd& X);
Eigen::MatrixXd encode(const LearnedModel& model, const Array3f& X);

// Hard threshold of sigmoid(gamma). Frozen models return all-ones on the sides they use and zeros elsewhere.
BinaryGraph extract_graph(const LearnedModel& model, double threshold = 0.5);

void save_checkpoint(const LearnedModel& model, const TrainConfig& cfg, const std::filesystem::path& dir,
                     const nlohmann::json& extra = {});
LearnedModel load_checkpoint(const std::filesystem::path& dir, TrainConfig* cfg = nullptr);
void write_log_csv(const std::vector<LogRow>& log, const std::filesystem::path& file);

}  // namespace mechsparse
