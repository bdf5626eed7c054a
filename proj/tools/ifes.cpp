#include "ifes/cli.hpp"
#include "ifes/error.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace ifes::cli;

RunConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
    RunConfig cfg = path.empty() ? RunConfig{} : load_config(path);
    for (const std::string& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ifes::ConfigError("--set expects key=value, got '" + kv + "'");
        set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Infrared/visible image fusion with interactive feature embedding"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    auto add_config_flags = [&](CLI::App* cmd) {
        cmd->add_option("-c,--config", config_path, "key=value config file");
        cmd->add_option("--set", overrides, "override one config key (key=value), repeatable");
    };

    CLI::App* train = app.add_subcommand("train", "train a network and write a checkpoint and log");
    add_config_flags(train);

    FuseRequest fuse_req;
    std::string checkpoint;
    std::string ir_path;
    std::string vis_path;
    std::string out_path;
    std::string weights_dir;
    CLI::App* fuse = app.add_subcommand("fuse", "fuse one registered pair with a trained checkpoint");
    fuse->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    fuse->add_option("--ir", ir_path, "infrared PGM")->required();
    fuse->add_option("--vis", vis_path, "visible PGM")->required();
    fuse->add_option("-o,--out", out_path, "fused PGM to write")->required();
    fuse->add_flag("--smooth", fuse_req.smooth, "Gaussian-smooth the weight maps (variance 2)");
    fuse->add_option("--weights-dir", weights_dir, "also write W_1 and W_2 here");

    std::string eval_dir;
    std::string eval_out;
    CLI::App* eval = app.add_subcommand("eval", "score (ir, vis, fused) triples and print a CSV");
    add_config_flags(eval);
    eval->add_option("--dir", eval_dir, "directory of triples")->required();
    eval->add_option("-o,--out", eval_out, "CSV file (default: stdout)");

    std::uint64_t gc_seed = 0;
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "verify every backward pass by finite differences");
    gradcheck->add_option("--seed", gc_seed, "random seed");

    std::string variants = "full,no_ifem,s1,s2,s3,s4,hc,mae";
    CLI::App* ablate = app.add_subcommand("ablate", "train and score the ablation variants");
    add_config_flags(ablate);
    ablate->add_option("--variants", variants, "comma-separated subset of full,no_ifem,s1,s2,s3,s4,hc,mae");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (train->parsed()) {
            cmd_train(resolve_config(config_path, overrides), std::cerr);
        } else if (fuse->parsed()) {
            fuse_req.checkpoint = checkpoint;
            fuse_req.infrared = ir_path;
            fuse_req.visible = vis_path;
            fuse_req.output = out_path;
            fuse_req.weights_dir = weights_dir;
            cmd_fuse(fuse_req);
        } else if (eval->parsed()) {
            const RunConfig cfg = resolve_config(config_path, overrides);
            if (eval_out.empty()) return cmd_eval(eval_dir, cfg, std::cout, std::cerr);
            std::ofstream csv(eval_out, std::ios::trunc);
            if (!csv) throw ifes::IoError("cannot open '" + eval_out + "' for writing");
            return cmd_eval(eval_dir, cfg, csv, std::cerr);
        } else if (gradcheck->parsed()) {
            const GradcheckReport report = cmd_gradcheck({gc_seed, {}});
            std::cout << report.str();
            return report.passed() ? kExitOk : kExitVerification;
        } else if (ablate->parsed()) {
            cmd_ablate(resolve_config(config_path, overrides), split_list(variants), std::cerr);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
    return kExitOk;
}
