#pragma once

#include <filesystem>
#include <string>

#include "nusr/degrade.hpp"
#include "nusr/metrics.hpp"
#include "nusr/train.hpp"
#include "nusr/unetpp.hpp"

namespace nusr {

// A whole run described by one flat "key = value" text file ('#' starts a
// comment). Unknown keys and invalid values are rejected at load time with
// the offending line number; nothing is deferred to mid-run.
struct RunConfig {
    DegradeSpec degrade;
    UNetPPConfig model;
    TrainConfig train;
    MetricConfig metrics;
    std::filesystem::path data_dir;
    std::filesystem::path out_dir;
    std::uint64_t seed = 0;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

// A commented template listing every recognized key at its default.
std::string run_config_template();

}  // namespace nusr
