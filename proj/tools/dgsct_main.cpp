#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "dgsct/report.hpp"

namespace {

using dgsct::RunConfig;

// Shared per-subcommand flags; only values the user actually passed override
// the config file.
struct CliArgs {
    std::string config_path;
    std::uint64_t seed = 0;
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 0.0;
    bool delta_mode = false;
    std::string ablation = "full";
    std::string out_path;

    CLI::Option* seed_opt = nullptr;
    CLI::Option* alpha_opt = nullptr;
    CLI::Option* beta_opt = nullptr;
    CLI::Option* gamma_opt = nullptr;
    CLI::Option* delta_opt = nullptr;
    CLI::Option* out_opt = nullptr;
};

void add_common_options(CLI::App* cmd, CliArgs& args) {
    cmd->add_option("--config", args.config_path, "flat key = value configuration file");
    args.seed_opt = cmd->add_option("--seed", args.seed, "seed for data and weights");
    args.alpha_opt = cmd->add_option("--alpha", args.alpha, "channel attention weight");
    args.beta_opt = cmd->add_option("--beta", args.beta, "spatial attention weight");
    args.gamma_opt = cmd->add_option("--gamma", args.gamma, "temporal gate weight");
    args.delta_opt = cmd->add_flag("--delta-mode", args.delta_mode,
                                   "residual injection adds only the attention delta");
    args.out_opt = cmd->add_option("--out", args.out_path, "output file path");
}

RunConfig resolve_config(const CliArgs& args, const RunConfig& base) {
    RunConfig cfg = base;
    if (!args.config_path.empty()) cfg = dgsct::load_config_file(args.config_path, base);
    if (args.seed_opt->count() > 0) cfg.seed = args.seed;
    if (args.alpha_opt->count() > 0) cfg.alpha = args.alpha;
    if (args.beta_opt->count() > 0) cfg.beta = args.beta;
    if (args.gamma_opt->count() > 0) cfg.gamma = args.gamma;
    if (args.delta_opt->count() > 0) cfg.delta_mode = true;
    if (args.out_opt->count() > 0) cfg.out_path = args.out_path;
    cfg.validate();
    return cfg;
}

int run_demo(const RunConfig& cfg) {
    const std::string json = dgsct::run_demo_dump(cfg);
    const std::string path = cfg.out_path.empty() ? "dgsct_demo.json" : cfg.out_path;
    dgsct::write_text_file(path, json);
    std::printf("wrote attention dump for %d layer(s) to %s\n", cfg.layers, path.c_str());
    return 0;
}

int run_gradcheck(const RunConfig& cfg, bool corrupt) {
    const dgsct::GradCheckReport report = dgsct::grad_check_run(cfg, corrupt);
    const std::string text = dgsct::render_gradcheck_report(report);
    std::fputs(text.c_str(), stdout);
    if (!cfg.out_path.empty()) dgsct::write_text_file(cfg.out_path, text);
    return report.pass ? 0 : 2;
}

int run_train(const RunConfig& cfg, const std::string& ablation_name) {
    const dgsct::Ablation ablation = dgsct::parse_ablation(ablation_name);
    const dgsct::TrainResult result = dgsct::train_loop(cfg, ablation);
    for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
        std::printf("epoch %2zu  loss %.6f\n", e, result.epoch_losses[e]);
    }
    std::printf("ablation %s: final loss %.6f, held-out accuracy %.4f\n",
                dgsct::ablation_name(ablation), result.final_loss, result.accuracy);
    const std::string csv = dgsct::render_metrics_csv(dgsct::ablation_name(ablation), cfg.steps,
                                                      result.final_loss, result.accuracy);
    const std::string path = cfg.out_path.empty() ? "metrics.csv" : cfg.out_path;
    dgsct::write_text_file(path, csv);
    std::printf("wrote metrics to %s\n", path.c_str());
    return 0;
}

int run_params(const RunConfig& cfg) {
    const dgsct::ParamCounts counts = dgsct::count_params(cfg);
    const std::string text = dgsct::render_params_report(counts);
    std::fputs(text.c_str(), stdout);
    if (!cfg.out_path.empty()) dgsct::write_text_file(cfg.out_path, text);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dual-guided spatial-channel-temporal attention workbench"};
    app.require_subcommand(1);

    CliArgs demo_args, grad_args, train_args, params_args;
    bool corrupt = false;

    CLI::App* demo = app.add_subcommand("demo", "one forward pass with an attention-map dump");
    add_common_options(demo, demo_args);

    CLI::App* gradcheck =
        app.add_subcommand("gradcheck", "finite-difference check of every trainable tensor");
    add_common_options(gradcheck, grad_args);
    gradcheck->add_flag("--corrupt-gradient", corrupt,
                        "test hook: break the analytic gradient on purpose");

    CLI::App* train = app.add_subcommand("train", "desk-scale training run with ablations");
    add_common_options(train, train_args);
    train->add_option("--ablation", train_args.ablation,
                      "full|no_s|no_c|no_t|a2v_only|v2a_only|none");

    CLI::App* params = app.add_subcommand("params", "trainable/frozen parameter accounting");
    add_common_options(params, params_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (demo->parsed()) return run_demo(resolve_config(demo_args, RunConfig{}));
        if (gradcheck->parsed()) {
            return run_gradcheck(resolve_config(grad_args, dgsct::gradcheck_defaults()), corrupt);
        }
        if (train->parsed()) {
            return run_train(resolve_config(train_args, RunConfig{}), train_args.ablation);
        }
        if (params->parsed()) return run_params(resolve_config(params_args, RunConfig{}));
    } catch (const dgsct::InvalidConfig& e) {
        std::fprintf(stderr, "invalid config: %s\n", e.what());
        return 1;
    } catch (const dgsct::IoError& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return 3;
    } catch (const dgsct::DivergenceDetected& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 2;
    } catch (const dgsct::NonFiniteInput& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 2;
    } catch (const dgsct::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
