#include "lopro/calibration.hpp"
#include "lopro/config.hpp"
#include "lopro/container.hpp"
#include "lopro/pipeline.hpp"
#include "lopro/sweep.hpp"
#include "lopro/synthetic.hpp"
#include "lopro/tensor_file.hpp"

#include "../tests/acceptance/suite.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace {

using namespace lopro;

// Flag values that override the config file only when given.
struct PipelineFlags {
    unsigned bits = 0;
    std::size_t group_size = 0;
    std::size_t rank = 0;
    unsigned iterations = 0;
    std::size_t b_i = 0;
    std::size_t b_h = 0;
    std::string quantizer;
    std::size_t vq_dim = 0;
    unsigned lloyd_iters = 0;
    double damp = 0;
    double exponent = 0;
    std::string precision;
    std::uint64_t seed = 0;
    bool asymmetric = false;
    bool no_permute = false;
    std::string name;
    std::string config;
    std::string weights;
    std::string calib;
    std::string calib_synth;
};

void add_pipeline_flags(CLI::App* app, PipelineFlags& f) {
    app->add_option("--config", f.config, "JSON config file; flags given here override it");
    app->add_option("--weights", f.weights, "weight matrix (LPRT, m x n)");
    app->add_option("--calib", f.calib, "calibration activations (LPRT, tokens x n)");
    app->add_option("--calib-synth", f.calib_synth, "synthetic calibration: n,tokens,outliers,gain,seed");
    app->add_option("--bits", f.bits, "residual bits (2, 3, 4, 8) [2]");
    app->add_option("--group-size", f.group_size, "weights per scale group [128]");
    app->add_option("--rank", f.rank, "low-rank rank r [16]");
    app->add_option("--it", f.iterations, "power iterations per rank-1 sketch [8]");
    app->add_option("--b-i", f.b_i, "identity block size [256]");
    app->add_option("--b-h", f.b_h, "Hadamard block size, power of two [256]");
    app->add_option("--quantizer", f.quantizer, "rtn, gptq or vq [gptq]");
    app->add_option("--vq-dim", f.vq_dim, "VQ vector dimension [4]");
    app->add_option("--lloyd-iters", f.lloyd_iters, "Lloyd refinement passes for VQ [4]");
    app->add_option("--damp", f.damp, "relative Hessian damping [0.01]");
    app->add_option("--exponent", f.exponent, "activation scale exponent [2.5]");
    app->add_option("--precision", f.precision, "low-rank factor storage: e4m3 or full [e4m3]");
    app->add_option("--seed", f.seed, "base seed [0]");
    app->add_flag("--asymmetric", f.asymmetric, "asymmetric grid with zero points");
    app->add_flag("--no-permute", f.no_permute, "keep the original column order");
    app->add_option("--name", f.name, "layer name stored in the container");
}

PipelineConfig resolve_config(const CLI::App* app, const PipelineFlags& f) {
    PipelineConfig c;
    if (!f.config.empty()) {
        c = load_config_file(f.config, c);
    }
    auto given = [&](const char* flag) { return app->count(flag) > 0; };
    if (given("--weights")) c.weights_path = f.weights;
    if (given("--calib")) c.calib_path = f.calib;
    if (given("--calib-synth")) c.calib_synth = f.calib_synth;
    if (given("--bits")) c.bits = f.bits;
    if (given("--group-size")) c.group_size = f.group_size;
    if (given("--rank")) c.rank = f.rank;
    if (given("--it")) c.iterations = f.iterations;
    if (given("--b-i")) c.identity_block = f.b_i;
    if (given("--b-h")) c.hadamard_block = f.b_h;
    if (given("--quantizer")) c.quantizer = parse_quantizer_kind(f.quantizer);
    if (given("--vq-dim")) c.vq_dim = f.vq_dim;
    if (given("--lloyd-iters")) c.lloyd_iters = f.lloyd_iters;
    if (given("--damp")) c.damp = f.damp;
    if (given("--exponent")) c.exponent = f.exponent;
    if (given("--precision")) c.precision = parse_factor_precision(f.precision);
    if (given("--seed")) c.seed = f.seed;
    if (given("--asymmetric")) c.symmetric = false;
    if (given("--no-permute")) c.permute = false;
    if (given("--name")) c.name = f.name;
    validate_config(c);
    return c;
}

Matrix load_weights(const PipelineConfig& c) {
    if (c.weights_path.empty()) {
        throw std::invalid_argument("--weights: required");
    }
    try {
        return read_tensor_file(c.weights_path).values;
    } catch (const std::exception& e) {
        throw std::invalid_argument(std::string("--weights: ") + e.what());
    }
}

CalibrationStats load_calibration(const PipelineConfig& c, std::size_t n) {
    if (!c.calib_path.empty() && !c.calib_synth.empty()) {
        throw std::invalid_argument("--calib and --calib-synth are mutually exclusive");
    }
    ScaleOptions scale;
    scale.exponent = c.exponent;
    Matrix x;
    if (!c.calib_path.empty()) {
        try {
            x = read_tensor_file(c.calib_path).values;
        } catch (const std::exception& e) {
            throw std::invalid_argument(std::string("--calib: ") + e.what());
        }
        if (x.cols() != n) {
            throw std::invalid_argument("--calib: activations have " + std::to_string(x.cols()) +
                                        " channels, weights have " + std::to_string(n) + " columns");
        }
    } else if (!c.calib_synth.empty()) {
        const SynthCalibSpec s = parse_synth_spec(c.calib_synth);
        if (s.channels != n) {
            throw std::invalid_argument("--calib-synth: n = " + std::to_string(s.channels) +
                                        " does not match the weight columns (" + std::to_string(n) + ")");
        }
        x = synthesize_calibration(s.channels, s.tokens, s.outliers, s.gain, s.seed);
    } else {
        throw std::invalid_argument("one of --calib or --calib-synth is required");
    }
    StatsAccumulator acc;
    acc.add(x);
    return acc.finish(scale);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

int cmd_quantize(const CLI::App* app, const PipelineFlags& f, const std::string& out) {
    PipelineConfig c = resolve_config(app, f);
    if (app->count("--out") > 0) {
        c.out_path = out;
    }
    if (c.out_path.empty()) {
        throw std::invalid_argument("--out: required");
    }
    const Matrix w = load_weights(c);
    const CalibrationStats stats = load_calibration(c, w.cols());
    const PipelineResult r = quantize_layer_pipeline(w, stats, c);
    write_file_bytes(c.out_path, r.container);
    std::printf("layer          %s (%zu x %zu), %s %u-bit, rank %zu, b_I %zu, b_H %zu\n", c.name.c_str(), w.rows(),
                w.cols(), std::string(to_string(c.quantizer)).c_str(), c.bits, c.rank, c.identity_block,
                c.hadamard_block);
    std::printf("proxy loss     %.6e (low-rank only: %.6e)\n", r.loss, r.lowrank_loss);
    std::printf("average bits   formula %.5f, measured %.5f, container %.5f\n", r.bits.formula, r.bits.measured,
                r.bits.container);
    std::printf("stage seconds  decompose %.4f, rotate %.4f, quantize %.4f, pack %.4f\n", r.timings.decompose,
                r.timings.rotate, r.timings.quantize, r.timings.pack);
    std::printf("wrote          %s (%zu bytes)\n", c.out_path.c_str(), r.container.size());
    return 0;
}

int cmd_inspect(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    const ContainerSummary s = summarize_container(bytes);
    const QuantizedLayer layer = unpack_layer(bytes);
    const BitReport bits = bit_report(layer, bytes);
    std::cout << s.metadata_json << '\n';
    std::printf("container bytes      %zu (payload %zu)\n", s.total_bytes, s.payload_bytes);
    std::printf("average bits         formula %.5f, measured %.5f, container %.5f\n", bits.formula, bits.measured,
                bits.container);
    const double n = static_cast<double>(layer.cols);
    const double r = static_cast<double>(layer.factors.rank());
    const double log_bh = std::log2(static_cast<double>(layer.plan.hadamard_block()));
    std::printf("extra inference ops  O(n b (2r + 1 + log2 b_H)) = %.0f * b for batch b (n = %zu, r = %zu, b_H = %zu)\n",
                n * (2 * r + 1 + log_bh), layer.cols, layer.factors.rank(), layer.plan.hadamard_block());
    return 0;
}

int cmd_eval(const std::string& layer_path, const std::string& input_path, const std::string& weights_path) {
    const QuantizedLayer layer = unpack_layer(read_file_bytes(layer_path));
    const Matrix x = read_tensor_file(input_path).values;
    if (x.cols() != layer.cols) {
        throw std::invalid_argument("--input: activations have " + std::to_string(x.cols()) +
                                    " channels, layer expects " + std::to_string(layer.cols));
    }
    const Matrix xt = transpose(x);
    const Matrix y_hat = reconstruct_output(layer, xt);
    const double tokens = static_cast<double>(x.rows());
    std::printf("tokens               %zu\n", x.rows());
    std::printf("output norm          %.6e\n", frobenius_norm(y_hat));
    if (weights_path.empty()) {
        std::printf("proxy loss           n/a (pass --weights for the reference layer)\n");
        return 0;
    }
    const Matrix w = read_tensor_file(weights_path).values;
    if (w.rows() != layer.rows || w.cols() != layer.cols) {
        throw std::invalid_argument("--weights: shape does not match the layer");
    }
    const Matrix y = matmul(w, xt);
    const Matrix diff = y - y_hat;
    const double err = frobenius_norm(diff);
    std::printf("proxy loss           %.6e\n", err * err / tokens);
    std::printf("reconstruction error %.6e (relative %.6e)\n", err, relative_error(y_hat, y));
    return 0;
}

int cmd_sweep(const CLI::App* app, const PipelineFlags& f, const std::string& axis_name, const std::string& values,
              const std::string& synth, const std::string& jsonl) {
    PipelineConfig c = resolve_config(app, f);
    const SweepAxis axis = parse_sweep_axis(axis_name);
    const auto list = split_list(values);
    if (list.empty()) {
        throw std::invalid_argument("--values: empty list");
    }
    SweepInput input;
    if (!c.weights_path.empty()) {
        input.weights = load_weights(c);
        input.stats = load_calibration(c, input.weights.cols());
    } else {
        const auto parts = split_list(synth);
        if (parts.size() != 4) {
            throw std::invalid_argument("--synth: expected rows,cols,tokens,seed");
        }
        SyntheticSpec s;
        try {
            s.rows = std::stoul(parts[0]);
            s.cols = std::stoul(parts[1]);
            s.tokens = std::stoul(parts[2]);
            s.seed = std::stoull(parts[3]);
        } catch (const std::exception&) {
            throw std::invalid_argument("--synth: '" + synth + "' is not rows,cols,tokens,seed");
        }
        ScaleOptions scale;
        scale.exponent = c.exponent;
        SyntheticLayer layer = make_synthetic_layer(s, scale);
        input.weights = std::move(layer.weights);
        input.stats = std::move(layer.stats);
    }
    const auto rows = run_ablation_sweep(axis, list, c, input);
    std::cout << format_sweep_table(axis, rows);
    if (!jsonl.empty()) {
        std::ofstream out(jsonl);
        if (!out) {
            throw std::invalid_argument("--jsonl: cannot open '" + jsonl + "'");
        }
        out << format_sweep_jsonl(axis, rows);
    }
    return 0;
}

struct SynthFlags {
    std::size_t rows = 256;
    std::size_t cols = 256;
    std::size_t tokens = 512;
    std::uint64_t seed = 0;
    std::string dtype = "f32";
    std::string weights;
    std::string activations;
};

int cmd_synth(const SynthFlags& f) {
    SyntheticSpec s;
    s.rows = f.rows;
    s.cols = f.cols;
    s.tokens = f.tokens;
    s.seed = f.seed;
    const TensorDtype dtype = parse_tensor_dtype(f.dtype);
    const SyntheticLayer layer = make_synthetic_layer(s);
    write_tensor_file(f.weights, "weights", layer.weights, dtype);
    write_tensor_file(f.activations, "activations", layer.activations, dtype);
    std::printf("wrote %s (%zu x %zu) and %s (%zu x %zu)\n", f.weights.c_str(), f.rows, f.cols, f.activations.c_str(),
                f.tokens, f.cols);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Low-rank plus rotated residual weight quantization"};
    app.require_subcommand(1);

    PipelineFlags qflags;
    std::string out_path;
    auto* quantize = app.add_subcommand("quantize", "quantize one layer into an LPRQ container");
    add_pipeline_flags(quantize, qflags);
    quantize->add_option("--out", out_path, "output LPRQ path");

    std::string inspect_path;
    auto* inspect = app.add_subcommand("inspect", "print container metadata and bit accounting");
    inspect->add_option("container", inspect_path, "LPRQ file")->required();

    std::string eval_layer;
    std::string eval_input;
    std::string eval_weights;
    auto* eval = app.add_subcommand("eval", "evaluate a quantized layer on activations");
    eval->add_option("--layer", eval_layer, "LPRQ file")->required();
    eval->add_option("--input", eval_input, "activations (LPRT, tokens x n)")->required();
    eval->add_option("--weights", eval_weights, "reference weights (LPRT) for loss and error");

    PipelineFlags sflags;
    std::string axis;
    std::string values;
    std::string synth = "256,256,512,0";
    std::string jsonl;
    auto* sweep = app.add_subcommand("sweep", "ablation sweep along one axis");
    add_pipeline_flags(sweep, sflags);
    sweep->add_option("--axis", axis, "rank, iterations, block_size or quantizer")->required();
    sweep->add_option("--values", values, "comma-separated values; block_size accepts N or I:H")->required();
    sweep->add_option("--synth", synth, "synthetic layer rows,cols,tokens,seed when --weights is absent")
        ->capture_default_str();
    sweep->add_option("--jsonl", jsonl, "also write JSON lines here");

    SynthFlags synth_flags;
    auto* synth_cmd = app.add_subcommand("synth", "write a synthetic weight/activation pair as LPRT files");
    synth_cmd->add_option("--rows", synth_flags.rows, "weight rows m")->capture_default_str();
    synth_cmd->add_option("--cols", synth_flags.cols, "weight columns n")->capture_default_str();
    synth_cmd->add_option("--tokens", synth_flags.tokens, "activation rows")->capture_default_str();
    synth_cmd->add_option("--seed", synth_flags.seed, "seed")->capture_default_str();
    synth_cmd->add_option("--dtype", synth_flags.dtype, "f32 or f64")->capture_default_str();
    synth_cmd->add_option("--weights", synth_flags.weights, "output weights (LPRT)")->required();
    synth_cmd->add_option("--activations", synth_flags.activations, "output activations (LPRT)")->required();

    std::string criteria;
    auto* selftest = app.add_subcommand("selftest", "run the acceptance suite");
    selftest->add_option("--criteria", criteria, "comma-separated criterion numbers (default: all)");

    CLI11_PARSE(app, argc, argv);

    const CLI::App* active = app.get_subcommands().front();
    const std::string cmd = active->get_name();
    try {
        if (active == quantize) {
            return cmd_quantize(quantize, qflags, out_path);
        }
        if (active == inspect) {
            return cmd_inspect(inspect_path);
        }
        if (active == eval) {
            return cmd_eval(eval_layer, eval_input, eval_weights);
        }
        if (active == sweep) {
            return cmd_sweep(sweep, sflags, axis, values, synth, jsonl);
        }
        if (active == synth_cmd) {
            return cmd_synth(synth_flags);
        }
        std::vector<int> ids;
        for (const auto& s : split_list(criteria)) {
            try {
                ids.push_back(std::stoi(s));
            } catch (const std::exception&) {
                throw std::invalid_argument("--criteria: '" + s + "' is not a number");
            }
        }
        return acceptance::run_and_report(std::cout, ids) == 0 ? 0 : 1;
    } catch (const StageError& e) {
        std::cerr << "lopro " << cmd << ": " << e.what() << '\n';
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "lopro " << cmd << ": " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "lopro " << cmd << ": " << e.what() << '\n';
        return 1;
    }
}
