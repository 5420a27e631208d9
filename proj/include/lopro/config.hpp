#pragma once

#include "lopro/pipeline.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace lopro {

/// JSON object whose keys mirror the CLI flag names ("bits", "group-size",
/// "rank", "it", "b-i", "b-h", "quantizer", "vq-dim", "lloyd-iters", "damp",
/// "exponent", "precision", "seed", "symmetric", "permute", "original-bits",
/// "name", "weights", "calib", "calib-synth", "out"). Keys present override
/// `base`; unknown keys and wrongly typed values throw std::invalid_argument
/// naming the key.
PipelineConfig parse_config_json(std::string_view text, PipelineConfig base = {});
PipelineConfig load_config_file(const std::filesystem::path& path, PipelineConfig base = {});
std::string config_to_json(const PipelineConfig& config);

struct SynthCalibSpec {
    std::size_t channels = 0;
    std::size_t tokens = 0;
    std::size_t outliers = 0;
    double gain = 1.0;
    std::uint64_t seed = 0;
};

/// Parses "n,tokens,outliers,gain,seed".
SynthCalibSpec parse_synth_spec(std::string_view text);

} // namespace lopro
