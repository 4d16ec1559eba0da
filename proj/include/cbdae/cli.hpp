#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cbdae/series.hpp"
#include "cbdae/training.hpp"

namespace cbdae {

// Flag-level overrides applied on top of the config file section.
struct CliOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;
    std::optional<std::string> variant;
    std::vector<double> sigmas;
    std::optional<std::string> out_dir;
    std::optional<std::string> data;
    std::optional<std::string> out;
    std::optional<std::string> input;
    std::optional<std::string> checkpoint;
    std::optional<std::size_t> epochs;
};

// Each command resolves defaults <- config section <- flags, emits an
// effective config beside its primary output, and returns a process exit
// code. Diagnostics go to stderr.
int cmd_simulate(const std::string& config_path, const CliOverrides& o);
int cmd_train(const std::string& config_path, const CliOverrides& o);
int cmd_denoise(const std::string& config_path, const CliOverrides& o);
int cmd_bench(const std::string& config_path, const CliOverrides& o);
int cmd_latent(const std::string& config_path, const CliOverrides& o);

// Timestamped external CSV with channel roles declared in a sidecar schema.
// Sampling must be uniform; gaps are a hard error. When every measurement
// column declares a clean reference, `clean_out` receives the noise-free
// counterpart.
Series load_external_series(const std::string& csv_path,
                            const std::string& schema_path,
                            std::optional<Series>* clean_out = nullptr);

}  // namespace cbdae
