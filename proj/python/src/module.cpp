#include "lopro/block_rotation.hpp"
#include "lopro/bitpack.hpp"
#include "lopro/calibration.hpp"
#include "lopro/config.hpp"
#include "lopro/container.hpp"
#include "lopro/pipeline.hpp"
#include "lopro/synthetic.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <string>

namespace py = pybind11;
using namespace lopro;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a, const char* what) {
    if (a.ndim() != 2) {
        throw std::invalid_argument(std::string(what) + ": expected a 2-d array");
    }
    const auto rows = static_cast<std::size_t>(a.shape(0));
    const auto cols = static_cast<std::size_t>(a.shape(1));
    return Matrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

Array to_array(const Matrix& m) {
    Array out({m.rows(), m.cols()});
    std::memcpy(out.mutable_data(), m.values().data(), m.size() * sizeof(double));
    return out;
}

std::span<const std::uint8_t> as_bytes(const py::bytes& b) {
    const std::string_view v = b;
    return {reinterpret_cast<const std::uint8_t*>(v.data()), v.size()};
}

py::dict quantize(const Array& weights, const Array& activations, const std::string& config_json) {
    const Matrix w = to_matrix(weights, "weights");
    const Matrix x = to_matrix(activations, "activations");
    if (x.cols() != w.cols()) {
        throw std::invalid_argument("activations have " + std::to_string(x.cols()) + " channels, weights have " +
                                    std::to_string(w.cols()) + " columns");
    }
    const PipelineConfig config = parse_config_json(config_json);
    validate_config(config);
    PipelineResult r;
    {
        py::gil_scoped_release release;
        StatsAccumulator acc;
        acc.add(x);
        ScaleOptions scale;
        scale.exponent = config.exponent;
        r = quantize_layer_pipeline(w, acc.finish(scale), config);
    }
    py::dict out;
    out["container"] = py::bytes(reinterpret_cast<const char*>(r.container.data()), r.container.size());
    out["loss"] = r.loss;
    out["lowrank_loss"] = r.lowrank_loss;
    out["bits_formula"] = r.bits.formula;
    out["bits_measured"] = r.bits.measured;
    out["bits_container"] = r.bits.container;
    return out;
}

} // namespace

PYBIND11_MODULE(_lopro, m) {
    m.doc() = "Low-rank plus rotated-residual weight quantization";

    py::register_exception<StageError>(m, "StageError", PyExc_RuntimeError);

    m.def("quantize", &quantize, py::arg("weights"), py::arg("activations"), py::arg("config_json") = "{}",
          "Quantize one layer (rows x cols weights, tokens x cols activations). Returns a dict with the LPRQ "
          "container bytes, losses and bits per weight.");

    m.def("default_config", [] { return config_to_json(PipelineConfig{}); });

    m.def(
        "inspect", [](const py::bytes& container) { return summarize_container(as_bytes(container)).metadata_json; },
        py::arg("container"));

    m.def(
        "reconstruct",
        [](const py::bytes& container, const Array& x) {
            const QuantizedLayer layer = unpack_layer(as_bytes(container));
            return to_array(reconstruct_output(layer, to_matrix(x, "x")));
        },
        py::arg("container"), py::arg("x"), "W_hat X for X with one row per input channel.");

    m.def(
        "synthetic_layer",
        [](std::size_t rows, std::size_t cols, std::size_t tokens, std::uint64_t seed) {
            SyntheticSpec spec;
            spec.rows = rows;
            spec.cols = cols;
            spec.tokens = tokens;
            spec.seed = seed;
            const SyntheticLayer layer = make_synthetic_layer(spec);
            return py::make_tuple(to_array(layer.weights), to_array(layer.activations));
        },
        py::arg("rows"), py::arg("cols"), py::arg("tokens"), py::arg("seed") = 0);

    m.def("average_bits", &average_bits, py::arg("m"), py::arg("n"), py::arg("d_q"), py::arg("g"), py::arg("r"),
          py::arg("d_r"), py::arg("d_o"));

    m.def(
        "fwht",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& v) {
            if (v.ndim() != 1) {
                throw std::invalid_argument("fwht: expected a 1-d array");
            }
            const auto out = fwht_normalized(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
            return py::array_t<double>(static_cast<py::ssize_t>(out.size()), out.data());
        },
        py::arg("v"), "Normalized Walsh-Hadamard transform; length must be a power of two.");

    m.def(
        "pack_bits",
        [](const std::vector<std::uint32_t>& values, unsigned bits) {
            const auto b = pack_bits(values, bits);
            return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
        },
        py::arg("values"), py::arg("bits"));
    m.def(
        "unpack_bits",
        [](const py::bytes& data, unsigned bits, std::size_t count) { return unpack_bits(as_bytes(data), bits, count); },
        py::arg("data"), py::arg("bits"), py::arg("count"));
}
