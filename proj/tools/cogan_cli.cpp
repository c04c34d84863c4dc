#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "cogan/errors.hpp"
#include "cogan/runner.hpp"

namespace {

struct CommonArgs {
    std::string config;
    std::string profile;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config, "Flat JSON configuration file");
    cmd->add_option("--profile", args.profile, "Settings profile")
        ->check(CLI::IsMember({"paper", "desk"}));
    cmd->add_option("--out", args.out, "Output directory");
    cmd->add_option("--seed", args.seed, "Root random seed")
        ->each([&](const std::string&) { args.seed_set = true; });
}

cogan::RunConfig resolve(const CommonArgs& args) {
    cogan::RunConfig cfg = cogan::load_config(args.config, args.profile);
    if (args.seed_set) cfg.seed = args.seed;
    if (!args.out.empty()) cfg.out_dir = args.out;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Coupled-GAN training, evaluation, adaptation, and transformation"};
    app.require_subcommand(1);

    CommonArgs train_args, eval_args, sweep_args, uda_args, transform_args;
    bool dry_run = false;

    auto* train = app.add_subcommand("train", "Train a coupled model");
    add_common(train, train_args);
    train->add_flag("--dry-run", dry_run, "Validate config and print the layer/shape chain");

    auto* eval = app.add_subcommand("eval", "Pixel-agreement evaluation of a checkpoint");
    add_common(eval, eval_args);

    auto* sweep = app.add_subcommand("sweep", "Weight-sharing grid sweep");
    add_common(sweep, sweep_args);

    auto* uda = app.add_subcommand("uda", "Unsupervised domain adaptation run");
    add_common(uda, uda_args);

    auto* transform = app.add_subcommand("transform", "Cross-domain image transformation");
    add_common(transform, transform_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (train->parsed()) cogan::cmd_train(resolve(train_args), dry_run);
        else if (eval->parsed()) cogan::cmd_eval(resolve(eval_args));
        else if (sweep->parsed()) cogan::cmd_sweep(resolve(sweep_args));
        else if (uda->parsed()) cogan::cmd_uda(resolve(uda_args));
        else if (transform->parsed()) cogan::cmd_transform(resolve(transform_args));
    } catch (const cogan::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const cogan::UsageError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const cogan::IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return 3;
    } catch (const cogan::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    }
    return 0;
}
