// Command-line driver: generate data, analyse graphs, check influence assumptions, train, evaluate, UDR.

#include "mechsparse/graph_algebra.hpp"
#include "mechsparse/latent_models.hpp"
#include "mechsparse/metrics.hpp"
#include "mechsparse/sparse_vae.hpp"
#include "mechsparse/synth_data.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

using namespace mechsparse;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kCheckFail = 1, kUsage = 2, kNumeric = 3 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string render(const BinMat& g) {
    std::ostringstream os;
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
        os << "  ";
        for (Eigen::Index j = 0; j < g.cols(); ++j) os << (g(i, j) ? '1' : '.') << (j + 1 < g.cols() ? " " : "");
        os << "\n";
    }
    return os.str();
}

std::string render(const Permutation& p) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < p.size(); ++i) os << (i ? " " : "") << p[i];
    os << ")";
    return os.str();
}

// Values from a JSON config for options not given on the command line. Keys are long option names
// without dashes, at the top level or under an object named after the subcommand.
void apply_config(CLI::App* sub, const std::string& file) {
    if (file.empty()) return;
    std::ifstream is(file);
    if (!is) throw UsageError("cannot read config " + file);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const std::exception& e) {
        throw UsageError("bad config " + file + ": " + e.what());
    }
    nlohmann::json merged = nlohmann::json::object();
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!it.value().is_object()) merged[it.key()] = it.value();
    if (j.contains(sub->get_name()) && j[sub->get_name()].is_object())
        for (auto it = j[sub->get_name()].begin(); it != j[sub->get_name()].end(); ++it) merged[it.key()] = it.value();
    for (auto it = merged.begin(); it != merged.end(); ++it) {
        CLI::Option* opt = nullptr;
        try {
            opt = sub->get_option("--" + it.key());
        } catch (const CLI::OptionNotFound&) {
            continue;  // keys for other subcommands
        }
        if (opt->count() > 0) continue;  // flags win
        auto as_text = [](const nlohmann::json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
        if (it.value().is_array()) {
            for (const auto& v : it.value()) opt->add_result(as_text(v));
        } else if (it.value().is_boolean()) {
            if (!it.value().get<bool>()) continue;
            opt->add_result("true");
        } else {
            opt->add_result(as_text(it.value()));
        }
        opt->run_callback();
    }
}

TransitionSpec spec_for(const std::string& family_name, int dz, int da, std::uint64_t seed,
                        std::optional<double> base_variance, double edge_prob) {
    Family f;
    try {
        f = parse_family(family_name);
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
    FamilyOptions opt;
    opt.base_variance = base_variance;
    opt.edge_prob = edge_prob;
    try {
        return make_spec(f, dz, da, seed, opt);
    } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("family/dimension mismatch: ") + e.what());
    }
}

std::string default_assumption(const TransitionSpec& spec) {
    if (uses_time(spec.family)) return "z-expfam";
    return discrete_actions(spec.family) ? "a-disc" : "a-cont";
}

InfluenceReport run_check(const TransitionSpec& spec, const std::string& assumption, int n_probe, double tol,
                          std::uint64_t seed) {
    if (assumption == "a-cont") return check_influence_a_cont(spec, n_probe, tol, seed);
    if (assumption == "a-disc") return check_influence_a_disc(spec, default_action_set(spec.da()), n_probe, tol, seed);
    if (assumption == "z") return check_influence_z(spec, n_probe, tol, seed);
    if (assumption == "z-expfam") return check_influence_z_expfam(spec, n_probe, tol, seed);
    if (assumption == "variability")
        return check_sufficient_variability(spec, default_variability_probes(spec, seed), tol);
    throw UsageError("unknown assumption " + assumption);
}

Consistency mode_from_flag(const std::string& m) {
    if (m == "a") return Consistency::A;
    if (m == "z") return Consistency::Z;
    if (m == "az") return Consistency::AZ;
    throw UsageError("mode must be a, z or az");
}

Dataset load_or_usage(const std::string& dir) {
    if (!fs::exists(dir)) throw UsageError("dataset directory not found: " + dir);
    return load_dataset(dir);
}

void print_graph_summary(const BinaryGraph& g) {
    std::cout << "G^z (" << g.dz() << "x" << g.dz() << ", " << g.gz.sum() << " edges)\n" << render(g.gz);
    if (g.da() > 0) std::cout << "G^a (" << g.dz() << "x" << g.da() << ", " << g.ga.sum() << " edges)\n" << render(g.ga);
    if (g.edges() == 0) std::cout << "warning: the graph has no edges\n";
    const auto crit = check_graphical_criterion(g);
    std::cout << "graphical criterion: " << (crit.holds ? "holds" : "fails") << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mechsparse: mechanism-sparsity experiments on synthetic data"};
    app.require_subcommand(1);
    std::string config_file;
    app.add_option("--config", config_file, "JSON config; command-line flags take precedence")->check(CLI::ExistingFile);

    // generate
    auto* gen = app.add_subcommand("generate", "Sample a synthetic dataset");
    std::string family, out_dir;
    int dz = 5, da = -1, dx = 20, n = 100000, t = -1, hidden_width = 0;
    std::uint64_t seed = 0, decoder_seed = 0;
    bool decoder_seed_set = false, no_standardize = false;
    double obs_sigma = 0.01, edge_prob = 0.5;
    std::optional<double> base_variance;
    gen->add_option("--family", family, "Model family")->required();
    gen->add_option("--dz", dz, "Latent dimension")->check(CLI::PositiveNumber);
    gen->add_option("--da", da, "Action dimension (default: d_z for action families, 0 otherwise)");
    gen->add_option("--dx", dx, "Observation dimension")->check(CLI::PositiveNumber);
    gen->add_option("--n", n, "Number of sequences")->check(CLI::PositiveNumber);
    gen->add_option("--t", t, "Sequence length (default: 1 for action families, 2 for time families)");
    gen->add_option("--seed", seed, "Sampling seed");
    gen->add_option_function<std::uint64_t>(
        "--decoder-seed", [&](const std::uint64_t& v) { decoder_seed = v, decoder_seed_set = true; },
        "Decoder seed (default: seed + 1)");
    gen->add_option("--obs-sigma", obs_sigma, "Observation noise standard deviation")->check(CLI::NonNegativeNumber);
    gen->add_option("--base-variance", base_variance, "Transition base variance");
    gen->add_option("--edge-prob", edge_prob, "Edge probability for random-graph families")->check(CLI::Range(0.0, 1.0));
    gen->add_option("--hidden-width", hidden_width, "Decoder hidden width (0: d_x)");
    gen->add_flag("--no-standardize", no_standardize, "Keep raw decoder outputs");
    gen->add_option("--out", out_dir, "Output directory")->required();

    // analyze-graph
    auto* ana = app.add_subcommand("analyze-graph", "Graphical criterion, entanglement masks, symmetries");
    std::string dataset_dir;
    ana->add_option("--dataset", dataset_dir, "Dataset directory")->required();

    // check-influence
    auto* chk = app.add_subcommand("check-influence", "Numerical sufficient-influence checks");
    std::string assumption;
    int n_probe = 0;
    double tol = 1e-6;
    std::uint64_t check_seed = 0;
    chk->add_option("--dataset", dataset_dir, "Dataset directory")->required();
    chk->add_option("--assumption", assumption, "Which check")
        ->required()
        ->check(CLI::IsMember({"a-cont", "a-disc", "z", "z-expfam", "variability"}));
    chk->add_option("--n-probe", n_probe, "Probe points (0: four times the required rank)");
    chk->add_option("--tol", tol, "Relative singular value tolerance")->check(CLI::PositiveNumber);
    chk->add_option("--seed", check_seed, "Probe seed");

    // train
    auto* trn = app.add_subcommand("train", "Fit the sparse sequential VAE");
    TrainConfig tc;
    std::string ckpt_out;
    bool frozen = false, quiet = false;
    trn->add_option("--dataset", dataset_dir, "Dataset directory")->required();
    trn->add_option("--beta", tc.beta, "Expected edge budget (default: maximum)");
    trn->add_option("--iters", tc.iters, "Training iterations")->check(CLI::PositiveNumber);
    trn->add_option("--schedule-iters", tc.schedule_iters, "Iterations for the budget to reach beta (default: iters/2)");
    trn->add_option("--seed", tc.seed, "Training seed");
    trn->add_option("--batch", tc.batch, "Minibatch size")->check(CLI::PositiveNumber);
    trn->add_option("--lr", tc.lr, "Adam learning rate")->check(CLI::PositiveNumber);
    trn->add_option("--lr-final-factor", tc.lr_final_factor, "Cosine decay of the learning rate after the schedule")
        ->check(CLI::Range(0.0, 1.0));
    trn->add_option("--lr-dual", tc.lr_dual, "Multiplier step size")->check(CLI::NonNegativeNumber);
    trn->add_option("--temperature", tc.temperature, "Gumbel temperature")->check(CLI::PositiveNumber);
    trn->add_option("--log-every", tc.log_every, "Log interval")->check(CLI::PositiveNumber);
    trn->add_option("--enc-width", tc.nets.enc_width, "Encoder/decoder width");
    trn->add_option("--enc-layers", tc.nets.enc_layers, "Encoder/decoder hidden layers");
    trn->add_option("--trans-width", tc.nets.trans_width, "Transition network width");
    trn->add_option("--trans-layers", tc.nets.trans_layers, "Transition network hidden layers");
    trn->add_flag("--frozen", frozen, "Freeze every edge on (no sparsity)");
    trn->add_flag("--quiet", quiet, "No progress output");
    trn->add_option("--out", ckpt_out, "Checkpoint directory")->required();

    // evaluate
    auto* evl = app.add_subcommand("evaluate", "Score a checkpoint against ground truth");
    std::string ckpt_dir, mode_flag = "az", report_dir;
    bool oracle_codes = false;
    evl->add_option("--checkpoint", ckpt_dir, "Checkpoint directory");
    evl->add_option("--dataset", dataset_dir, "Dataset directory")->required();
    evl->add_option("--mode", mode_flag, "Consistency mode for R_con")->check(CLI::IsMember({"a", "z", "az"}));
    evl->add_flag("--oracle-codes", oracle_codes, "Score the ground-truth latents themselves");
    evl->add_option("--out", report_dir, "Directory for report.json and CSV dumps");

    // udr
    auto* udr_cmd = app.add_subcommand("udr", "Unsupervised selection across seeds");
    std::vector<std::string> runs;
    double min_edges = -1;
    std::string table_file;
    udr_cmd->add_option("--runs", runs, "Checkpoint directories")->required();
    udr_cmd->add_option("--dataset", dataset_dir, "Dataset to encode")->required();
    udr_cmd->add_option("--min-edges", min_edges, "Exclude runs with fewer edges (default: d_z)");
    udr_cmd->add_option("--csv", table_file, "Write the per-run table as CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    try {
        CLI::App* sub = app.get_subcommands().front();
        apply_config(sub, config_file);

        if (sub == gen) {
            const Family f = [&] {
                try {
                    return parse_family(family);
                } catch (const std::exception& e) {
                    throw UsageError(e.what());
                }
            }();
            if (da < 0) da = uses_actions(f) ? dz : 0;
            if (t < 0) t = uses_time(f) ? 2 : 1;
            if (t < 1) throw UsageError("--t must be >= 1");
            if (uses_time(f) && t < 2) throw UsageError("time families need --t >= 2");
            const TransitionSpec spec = spec_for(family, dz, da, seed, base_variance, edge_prob);
            DecoderOptions dopt;
            dopt.hidden_width = hidden_width;
            dopt.standardize_output = !no_standardize;
            const DecoderSpec dec = build_decoder(spec.dz(), dx, decoder_seed_set ? decoder_seed : seed + 1, dopt);
            const Dataset ds = sample_dataset(spec, dec, n, t, obs_sigma, seed);
            save_dataset(ds, out_dir);
            std::cout << "family " << to_string(spec.family) << ", N=" << n << " T=" << t << " d_z=" << spec.dz()
                      << " d_a=" << spec.da() << " d_x=" << dx << "\n";
            print_graph_summary(spec.graph);
            const auto rep = run_check(spec, default_assumption(spec), 0, 1e-6, seed);
            std::cout << "influence (" << default_assumption(spec) << "): " << (rep.pass ? "pass" : "fail") << "\n";
            std::cout << "wrote " << out_dir << "\n";
            return kOk;
        }

        if (sub == ana) {
            const Dataset ds = load_or_usage(dataset_dir);
            const BinaryGraph& g = ds.spec.graph;
            print_graph_summary(g);
            const auto crit = check_graphical_criterion(g);
            for (int i = 0; i < g.dz(); ++i) {
                std::cout << "  witness " << i << ": {";
                for (std::size_t k = 0; k < crit.witness[i].size(); ++k) std::cout << (k ? "," : "") << crit.witness[i][k];
                std::cout << "}\n";
            }
            const bool has_a = g.da() > 0;
            const auto az = entanglement_mask(g, Consistency::AZ).mask;
            std::cout << "AZ entanglement mask\n" << render(az);
            std::cout << "Z entanglement mask\n" << render(entanglement_mask(g, Consistency::Z).mask);
            if (has_a) std::cout << "A entanglement mask\n" << render(entanglement_mask(g, Consistency::A).mask);
            if (g.dz() <= 10) {
                const auto perms = permutations_in_mask(az);
                std::cout << "symmetry permutations in the AZ mask: " << perms.size() << "\n";
                for (std::size_t k = 0; k < std::min<std::size_t>(perms.size(), 24); ++k)
                    std::cout << "  " << render(perms[k]) << "\n";
                if (perms.size() > 24) std::cout << "  ...\n";
            }
            return kOk;
        }

        if (sub == chk) {
            const Dataset ds = load_or_usage(dataset_dir);
            InfluenceReport rep;
            try {
                rep = run_check(ds.spec, assumption, n_probe, tol, check_seed);
            } catch (const std::invalid_argument& e) {
                throw UsageError(e.what());
            }
            std::cout << to_json(rep).dump(2) << "\n";
            return rep.pass ? kOk : kCheckFail;
        }

        if (sub == trn) {
            const Dataset ds = load_or_usage(dataset_dir);
            tc.learn_graph = !frozen;
            fs::create_directories(ckpt_out);
            nlohmann::json extra{{"dataset", fs::absolute(dataset_dir).string()}};
            try {
                auto result = train(ds, tc, [&](const LogRow& r) {
                    if (!quiet && r.iter % (tc.log_every * 10) == 0)
                        std::cerr << "iter " << r.iter << " elbo " << r.elbo << " edges " << r.l1_edges << " alpha "
                                  << r.alpha << " beta " << r.beta << "\n";
                });
                extra["final_alpha"] = result.final_alpha;
                extra["seconds"] = result.seconds;
                extra["expected_edges"] = result.model.expected_edges();
                extra["edges"] = extract_graph(result.model).edges();
                save_checkpoint(result.model, tc, ckpt_out, extra);
                write_log_csv(result.log, fs::path(ckpt_out) / "log.csv");
                std::cout << extra.dump(2) << "\n";
            } catch (const NumericAbort& e) {
                std::cerr << "numeric abort at iteration " << e.iteration << ": " << e.what() << "\n";
                if (e.last_good) {
                    extra["aborted_at"] = e.iteration;
                    save_checkpoint(*e.last_good, tc, ckpt_out, extra);
                }
                return kNumeric;
            }
            return kOk;
        }

        if (sub == evl) {
            const Dataset ds = load_or_usage(dataset_dir);
            const Consistency mode = mode_from_flag(mode_flag);
            const Eigen::MatrixXd Z = ds.Z.cast<double>();
            Eigen::MatrixXd Zhat;
            BinaryGraph learned;
            if (oracle_codes) {
                Zhat = Z;
                learned = ds.spec.graph;
            } else {
                if (ckpt_dir.empty()) throw UsageError("--checkpoint is required unless --oracle-codes is given");
                if (!fs::exists(fs::path(ckpt_dir) / "meta.json")) throw UsageError("checkpoint not found: " + ckpt_dir);
                const LearnedModel model = load_checkpoint(ckpt_dir);
                if (model.dx != ds.dx || model.dz != ds.dz) throw UsageError("checkpoint does not match dataset");
                Zhat = encode(model, ds.X);
                learned = extract_graph(model);
                if (learned.da() != ds.spec.graph.da()) learned = BinaryGraph(learned.gz, BinMat::Zero(ds.dz, ds.da));
            }
            if (!Zhat.allFinite()) {
                std::cerr << "non-finite codes\n";
                return kNumeric;
            }
            const EvalReport rep = evaluate(Z, Zhat, ds.spec.graph, learned, mode);
            if (!report_dir.empty()) dump_report(rep, ds.spec.graph, report_dir);
            std::cout << to_json(rep).dump(2) << "\n";
            return kOk;
        }

        if (sub == udr_cmd) {
            if (runs.size() < 2) throw UsageError(">= 2 runs required");
            const Dataset ds = load_or_usage(dataset_dir);
            std::vector<Eigen::MatrixXd> codes;
            std::vector<double> edges;
            std::vector<double> betas;
            for (const auto& r : runs) {
                if (!fs::exists(fs::path(r) / "meta.json")) throw UsageError("checkpoint not found: " + r);
                TrainConfig cfg;
                const LearnedModel model = load_checkpoint(r, &cfg);
                codes.push_back(encode(model, ds.X));
                edges.push_back(static_cast<double>(extract_graph(model).edges()));
                betas.push_back(cfg.learn_graph ? (cfg.beta < 0 ? model.max_edges() : cfg.beta) : NAN);
            }
            const double threshold = min_edges < 0 ? ds.dz : min_edges;
            // One UDR score per hyperparameter value (beta, or frozen), over its seeds.
            std::map<std::string, std::vector<std::size_t>> groups;
            auto key_of = [&](std::size_t k) {
                if (std::isnan(betas[k])) return std::string("frozen");
                std::ostringstream os;
                os << betas[k];
                return os.str();
            };
            for (std::size_t k = 0; k < runs.size(); ++k) groups[key_of(k)].push_back(k);
            struct Row {
                std::string key;
                std::size_t runs = 0, admitted = 0;
                double mean_edges = 0.0;
                std::optional<double> score;
            };
            std::vector<Row> rows;
            for (const auto& [key, idx] : groups) {
                Row row{key, idx.size(), 0, 0.0, std::nullopt};
                std::vector<Eigen::MatrixXd> c;
                std::vector<double> e;
                for (auto k : idx) {
                    c.push_back(codes[k]);
                    e.push_back(edges[k]);
                    row.mean_edges += edges[k] / static_cast<double>(idx.size());
                }
                if (idx.size() >= 2) {
                    const UdrResult u = udr(c, e, threshold);
                    row.admitted = static_cast<std::size_t>(std::count(u.selected.begin(), u.selected.end(), true));
                    if (u.admissible) row.score = u.score;
                }
                rows.push_back(row);
            }
            int star = -1;
            for (std::size_t k = 0; k < rows.size(); ++k)
                if (rows[k].score && (star < 0 || *rows[k].score > *rows[static_cast<std::size_t>(star)].score))
                    star = static_cast<int>(k);
            std::ostringstream csv;
            csv << "beta,runs,admitted,mean_edges,udr,selected\n";
            std::cout << std::left << std::setw(10) << "beta" << std::setw(6) << "runs" << std::setw(10) << "admitted"
                      << std::setw(12) << "mean_edges" << std::setw(10) << "udr" << "\n";
            for (std::size_t k = 0; k < rows.size(); ++k) {
                const auto& r = rows[k];
                const std::string sc = r.score ? std::to_string(*r.score) : "n/a";
                std::cout << std::setw(10) << r.key << std::setw(6) << r.runs << std::setw(10) << r.admitted
                          << std::setw(12) << r.mean_edges << std::setw(10) << sc
                          << (static_cast<int>(k) == star ? "*" : "") << "\n";
                csv << r.key << ',' << r.runs << ',' << r.admitted << ',' << r.mean_edges << ','
                    << (r.score ? std::to_string(*r.score) : "") << ',' << (static_cast<int>(k) == star ? 1 : 0) << '\n';
            }
            if (star < 0) std::cout << "no admissible runs: no setting has two seeds with at least " << threshold << " edges\n";
            if (!table_file.empty()) {
                std::ofstream os(table_file, std::ios::trunc);
                os << csv.str();
            }
            return star >= 0 ? kOk : kCheckFail;
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const NumericAbort& e) {
        std::cerr << "numeric abort: " << e.what() << "\n";
        return kNumeric;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }
    return kOk;
}
