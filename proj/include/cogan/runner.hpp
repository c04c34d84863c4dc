#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cogan {

inline constexpr const char* kCodeVersion = "0.1.0";

/// Flat key-value run configuration. Defaults correspond to the desk
/// profile; the paper profile restores the published full-scale settings.
struct RunConfig {
    // model
    std::string preset = "digit-conv";
    double width = 0.25;
    int k = -1;  // -1 = preset default
    int l = -1;

    // task / data
    std::string task = "negative";  // identity | edge | negative | rotate90
    std::string images_idx;         // IDX corpus; empty = synthetic corpus
    std::string labels_idx;
    std::uint64_t synthetic_n = 2000;
    std::uint64_t image_size = 28;

    // training
    std::uint64_t seed = 1;
    std::uint64_t batch_size = 64;
    std::uint64_t iterations = 3000;
    std::uint64_t log_every = 100;
    std::uint64_t checkpoint_every = 500;
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;

    // evaluation / sweep
    std::uint64_t n_pairs = 1000;
    std::uint64_t eval_every = 500;
    std::uint64_t trials = 3;
    std::vector<int> k_values;  // empty = {0, preset default}
    std::vector<int> l_values;  // empty = {preset default}

    // adaptation
    std::uint64_t uda_source_n = 1000;
    std::uint64_t uda_target_n = 900;

    // transformation
    std::uint64_t transform_count = 8;
    std::uint64_t restarts = 5;
    std::uint64_t invert_max_iter = 200;

    // artifacts
    std::string checkpoint;  // input checkpoint base path (eval/transform)
    std::string out_dir = "out";
};

/// Applies a named profile ("paper", "desk", or "" for no change).
void apply_profile(RunConfig& cfg, const std::string& profile);

/// Strict flat-JSON parse: unknown keys and wrong types raise ConfigError
/// naming the field. The profile is applied before the file's overrides.
RunConfig load_config(const std::string& path, const std::string& profile);

void cmd_train(const RunConfig& cfg, bool dry_run = false);
void cmd_eval(const RunConfig& cfg);
void cmd_sweep(const RunConfig& cfg);
void cmd_uda(const RunConfig& cfg);
void cmd_transform(const RunConfig& cfg);

}  // namespace cogan
