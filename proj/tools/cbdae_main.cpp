#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "cbdae/cli.hpp"
#include "cbdae/common.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Blind denoising toolkit for multivariate IIoT time series"};
    app.require_subcommand(1);

    std::string config_path;
    cbdae::CliOverrides o;
    std::uint64_t seed_flag = 0;
    std::size_t jobs_flag = 0;
    std::string variant_flag;
    std::size_t epochs_flag = 0;
    std::string out_dir_flag, data_flag, out_flag, input_flag, ckpt_flag;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON configuration file");
        cmd->add_option("--seed", seed_flag, "master seed override");
        cmd->add_option("--sigma", o.sigmas, "noise power override(s)");
    };

    CLI::App* sim = app.add_subcommand("simulate", "generate quadtank datasets");
    add_common(sim);
    sim->add_option("--out-dir", out_dir_flag, "output directory");

    CLI::App* train = app.add_subcommand("train", "train a denoising network");
    add_common(train);
    train->add_option("--variant", variant_flag,
                      "cbdae | cbdae_h | bdae_l1 | bdae_noreg");
    train->add_option("--data", data_flag, "input dataset CSV");
    train->add_option("--out", out_flag, "checkpoint output path");
    train->add_option("--epochs", epochs_flag, "epoch count override");

    CLI::App* denoise =
        app.add_subcommand("denoise", "stream a CSV through a model");
    add_common(denoise);
    denoise->add_option("--input", input_flag, "input CSV");
    denoise->add_option("--checkpoint", ckpt_flag, "model checkpoint");
    denoise->add_option("--out", out_flag, "output CSV");

    CLI::App* bench = app.add_subcommand("bench", "method x sigma RMSE benchmark");
    add_common(bench);
    bench->add_option("--jobs", jobs_flag, "parallel benchmark cells");
    bench->add_option("--out-dir", out_dir_flag, "output directory");

    CLI::App* latent =
        app.add_subcommand("latent", "latent-space trajectory study");
    add_common(latent);
    latent->add_option("--variant", variant_flag, "restrict to one variant");
    latent->add_option("--out-dir", out_dir_flag, "output directory");

    CLI11_PARSE(app, argc, argv);

    CLI::App* active = app.get_subcommands().front();
    auto took = [&](const char* name) {
        const CLI::Option* opt = active->get_option_no_throw(name);
        return opt != nullptr && opt->count() > 0;
    };
    if (took("--seed")) o.seed = seed_flag;
    if (active == train && took("--variant")) o.variant = variant_flag;
    if (active == latent && took("--variant")) o.variant = variant_flag;
    if (took("--jobs")) o.jobs = jobs_flag;
    if ((active == sim || active == bench || active == latent) &&
        took("--out-dir"))
        o.out_dir = out_dir_flag;
    if (active == train && took("--data")) o.data = data_flag;
    if ((active == train || active == denoise) && took("--out")) o.out = out_flag;
    if (active == train && took("--epochs")) o.epochs = epochs_flag;
    if (active == denoise && took("--input")) o.input = input_flag;
    if (active == denoise && took("--checkpoint")) o.checkpoint = ckpt_flag;

    try {
        if (active == sim) return cbdae::cmd_simulate(config_path, o);
        if (active == train) return cbdae::cmd_train(config_path, o);
        if (active == denoise) return cbdae::cmd_denoise(config_path, o);
        if (active == bench) return cbdae::cmd_bench(config_path, o);
        if (active == latent) return cbdae::cmd_latent(config_path, o);
    } catch (const cbdae::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "unexpected error: %s\n", e.what());
        return 2;
    }
    return 0;
}
