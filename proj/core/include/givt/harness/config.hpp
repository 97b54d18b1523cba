#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "givt/dist.hpp"
#include "givt/infer.hpp"
#include "givt/model.hpp"
#include "givt/optim.hpp"
#include "givt/vae.hpp"

namespace givt::harness {

struct DataConfig {
    std::size_t num_classes = 4;
    std::size_t train_size = 2048;
    std::size_t heldout_size = 256;
};

struct TrainConfig {
    std::size_t steps = 2000;
    std::size_t batch_size = 32;
    AdamConfig adam;
    std::size_t log_every = 50;
};

struct SamplerConfig {
    /// ancestral | beam | maskgit
    std::string sampler = "ancestral";
    double temperature = 1.0;
    bool guidance = false;
    GuidanceConfig cfg;
    std::size_t beams = 8;
    std::size_t fans = 1;
    ScheduleConfig schedule;
    std::optional<double> truncation;
    bool use_cache = true;
    std::size_t samples_per_class = 8;

    SampleOptions options() const;
    /// Short tag used in file names, e.g. "ancestral_t1_w0.5".
    std::string tag() const;
};

struct RunConfig {
    std::string task = "train-vae";
    std::uint64_t seed = 0;
    std::filesystem::path out_dir = "out";
    DataConfig data;
    VaeConfig vae;
    TrainConfig vae_train;
    /// d, tokens and num_classes are taken from the vae and data sections.
    GivtConfig givt;
    TrainConfig givt_train;
    SamplerConfig sample;
    std::filesystem::path vae_checkpoint;
    std::filesystem::path givt_checkpoint;
    std::vector<double> sweep_betas{0.0, 5e-5, 2e-4};
    std::size_t eval_batches = 8;
    std::size_t gradcheck_probes = 0;

    /// Fills derived GIVT fields and validates every section.
    void finalize();
};

/// Full config as pretty JSON.
std::string to_json_text(const RunConfig& cfg);

/// Parses a JSON document layered over the defaults; unknown keys are rejected.
RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {});
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Canonical JSON of the architecture section a checkpoint depends on.
std::string vae_identity(const VaeConfig& cfg);
std::string givt_identity(const GivtConfig& cfg);

/// 64-bit FNV-1a of `text`, as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

} // namespace givt::harness
