#pragma once

#include "lopro/calibration.hpp"
#include "lopro/matrix.hpp"
#include "lopro/pipeline.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lopro {

enum class SweepAxis { rank, iterations, block_size, quantizer };

std::string_view to_string(SweepAxis a) noexcept;
SweepAxis parse_sweep_axis(std::string_view s);

/// Returns `base` with one axis set from its textual value. block_size takes
/// "N" (b_I = b_H = N) or "I:H".
PipelineConfig apply_axis_value(PipelineConfig base, SweepAxis axis, const std::string& value);

struct SweepRow {
    std::size_t index = 0;
    std::string value;
    bool ok = false;
    std::string error;
    double loss = 0.0;
    double lowrank_loss = 0.0;
    BitReport bits;
    StageTimings timings;
    std::size_t container_bytes = 0;
};

struct SweepInput {
    Matrix weights;
    CalibrationStats stats;
};

/// Worker count: LOPRO_THREADS if set to a positive integer, otherwise the
/// hardware concurrency; never more than `jobs`, never less than 1.
std::size_t sweep_worker_count(std::size_t jobs);

/// One pipeline run per value, all with the seeds of `base`. A failing run is
/// recorded in its row and the sweep continues. Rows are in input order
/// whatever the worker count. Throws std::invalid_argument when `values` is empty.
std::vector<SweepRow> run_ablation_sweep(SweepAxis axis, std::span<const std::string> values,
                                         const PipelineConfig& base, const SweepInput& input,
                                         std::size_t workers = 0);

std::string format_sweep_table(SweepAxis axis, std::span<const SweepRow> rows);
/// One JSON object per line. Timings are omitted when `with_timings` is false,
/// which makes the output byte-stable for fixed seeds.
std::string format_sweep_jsonl(SweepAxis axis, std::span<const SweepRow> rows, bool with_timings = true);

} // namespace lopro
