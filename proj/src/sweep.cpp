#include "lopro/sweep.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace lopro {

namespace {

std::size_t parse_count(const std::string& s, const char* what) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size() || s.front() == '-') {
        throw std::invalid_argument(std::string("sweep: ") + what + " value '" + s + "' is not a non-negative integer");
    }
    return static_cast<std::size_t>(v);
}

} // namespace

std::string_view to_string(SweepAxis a) noexcept {
    switch (a) {
    case SweepAxis::rank: return "rank";
    case SweepAxis::iterations: return "iterations";
    case SweepAxis::block_size: return "block_size";
    case SweepAxis::quantizer: return "quantizer";
    }
    return "?";
}

SweepAxis parse_sweep_axis(std::string_view s) {
    if (s == "rank") {
        return SweepAxis::rank;
    }
    if (s == "iterations" || s == "it") {
        return SweepAxis::iterations;
    }
    if (s == "block_size" || s == "block-size") {
        return SweepAxis::block_size;
    }
    if (s == "quantizer") {
        return SweepAxis::quantizer;
    }
    throw std::invalid_argument("unknown sweep axis '" + std::string(s) +
                                "' (expected rank, iterations, block_size or quantizer)");
}

PipelineConfig apply_axis_value(PipelineConfig base, SweepAxis axis, const std::string& value) {
    switch (axis) {
    case SweepAxis::rank:
        base.rank = parse_count(value, "rank");
        break;
    case SweepAxis::iterations:
        base.iterations = static_cast<unsigned>(parse_count(value, "iterations"));
        break;
    case SweepAxis::block_size: {
        const auto colon = value.find(':');
        if (colon == std::string::npos) {
            base.identity_block = base.hadamard_block = parse_count(value, "block_size");
        } else {
            base.identity_block = parse_count(value.substr(0, colon), "block_size b_I");
            base.hadamard_block = parse_count(value.substr(colon + 1), "block_size b_H");
        }
        break;
    }
    case SweepAxis::quantizer:
        base.quantizer = parse_quantizer_kind(value);
        break;
    }
    return base;
}

std::size_t sweep_worker_count(std::size_t jobs) {
    std::size_t n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("LOPRO_THREADS"); env != nullptr && *env != '\0') {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != nullptr && *end == '\0' && v > 0) {
            n = static_cast<std::size_t>(v);
        }
    }
    return std::max<std::size_t>(1, std::min(n, jobs));
}

std::vector<SweepRow> run_ablation_sweep(SweepAxis axis, std::span<const std::string> values,
                                         const PipelineConfig& base, const SweepInput& input, std::size_t workers) {
    if (values.empty()) {
        throw std::invalid_argument("sweep: no values given");
    }
    std::vector<SweepRow> rows(values.size());
    auto run_one = [&](std::size_t i) {
        SweepRow& row = rows[i];
        row.index = i;
        row.value = values[i];
        try {
            const PipelineConfig cfg = apply_axis_value(base, axis, values[i]);
            const PipelineResult r = quantize_layer_pipeline(input.weights, input.stats, cfg);
            row.loss = r.loss;
            row.lowrank_loss = r.lowrank_loss;
            row.bits = r.bits;
            row.timings = r.timings;
            row.container_bytes = r.container.size();
            row.ok = true;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
    };

    const std::size_t n_workers = workers == 0 ? sweep_worker_count(values.size()) : std::min(workers, values.size());
    if (n_workers <= 1) {
        for (std::size_t i = 0; i < values.size(); ++i) {
            run_one(i);
        }
        return rows;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < values.size(); i = next++) {
                run_one(i);
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    return rows;
}

std::string format_sweep_table(SweepAxis axis, std::span<const SweepRow> rows) {
    std::ostringstream os;
    char line[256];
    std::snprintf(line, sizeof line, "%-12s %14s %14s %9s %9s %9s %9s %9s %9s\n", std::string(to_string(axis)).c_str(),
                  "proxy_loss", "lowrank_loss", "bits", "measured", "t_dec", "t_rot", "t_quant", "t_pack");
    os << line;
    for (const auto& r : rows) {
        if (!r.ok) {
            os << r.value << "  FAILED: " << r.error << '\n';
            continue;
        }
        std::snprintf(line, sizeof line, "%-12s %14.6e %14.6e %9.4f %9.4f %9.4f %9.4f %9.4f %9.4f\n", r.value.c_str(),
                      r.loss, r.lowrank_loss, r.bits.formula, r.bits.measured, r.timings.decompose, r.timings.rotate,
                      r.timings.quantize, r.timings.pack);
        os << line;
    }
    return os.str();
}

std::string format_sweep_jsonl(SweepAxis axis, std::span<const SweepRow> rows, bool with_timings) {
    std::ostringstream os;
    for (const auto& r : rows) {
        nlohmann::ordered_json j;
        j["axis"] = std::string(to_string(axis));
        j["index"] = r.index;
        j["value"] = r.value;
        j["ok"] = r.ok;
        if (!r.ok) {
            j["error"] = r.error;
        } else {
            j["proxy_loss"] = r.loss;
            j["lowrank_loss"] = r.lowrank_loss;
            j["bits_formula"] = r.bits.formula;
            j["bits_measured"] = r.bits.measured;
            j["bits_container"] = r.bits.container;
            j["container_bytes"] = r.container_bytes;
            if (with_timings) {
                j["seconds"] = {{"decompose", r.timings.decompose},
                                {"rotate", r.timings.rotate},
                                {"quantize", r.timings.quantize},
                                {"pack", r.timings.pack}};
            }
        }
        os << j.dump() << '\n';
    }
    return os.str();
}

} // namespace lopro
