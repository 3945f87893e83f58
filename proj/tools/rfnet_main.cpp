#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rfnet/commands.hpp"
#include "rfnet/threading.hpp"

namespace {

struct SubArgs {
    std::string config_path;
    long seed = -1;
    std::string out_dir;
    std::vector<std::string> overrides;
};

void attach_options(CLI::App* app, SubArgs& args) {
    app->add_option("--config", args.config_path, "key=value configuration file");
    app->add_option("--seed", args.seed, "seed override");
    app->add_option("--out", args.out_dir, "output directory override");
    app->add_option("overrides", args.overrides, "additional key=value overrides");
}

}  // namespace

int main(int argc, char** argv) {
    rfnet::set_threads(rfnet::threads_from_env());

    CLI::App app{"Robust RGB-D saliency fusion toolkit"};
    app.require_subcommand(1);

    const std::vector<std::string> names = {"gen-data", "train", "eval", "grad-check", "ablate", "lambda-report"};
    const std::vector<std::string> descriptions = {
        "generate a synthetic RGB-D dataset",
        "train a model on a dataset directory",
        "evaluate a checkpoint and write metrics/maps",
        "verify analytic gradients against finite differences",
        "train and compare the fusion variants",
        "per-sample lambda/alpha/beta report grouped by depth quality",
    };
    std::vector<SubArgs> args(names.size());
    for (std::size_t i = 0; i < names.size(); ++i) {
        attach_options(app.add_subcommand(names[i], descriptions[i]), args[i]);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << "error: " << e.what() << "\n";
        return rfnet::kExitUsage;
    }

    for (std::size_t i = 0; i < names.size(); ++i) {
        if (!app.get_subcommand(names[i])->parsed()) continue;
        rfnet::KeyValueConfig cfg;
        try {
            if (!args[i].config_path.empty()) cfg = rfnet::KeyValueConfig::load(args[i].config_path);
            for (const auto& kv : args[i].overrides) cfg.apply_override(kv);
            if (args[i].seed >= 0) cfg.set("seed", std::to_string(args[i].seed));
            if (!args[i].out_dir.empty()) cfg.set("out_dir", args[i].out_dir);
        } catch (const rfnet::ConfigError& e) {
            std::cerr << "error: " << e.what() << "\n";
            return rfnet::kExitUsage;
        }
        return rfnet::run_command(names[i], cfg, std::cout, std::cerr);
    }
    return rfnet::kExitUsage;
}
