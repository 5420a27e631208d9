#include "lopro/container.hpp"

#include "byte_io.hpp"
#include "lopro/bitpack.hpp"
#include "lopro/numeric_formats.hpp"
#include "lopro/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

namespace lopro {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr char kMagic[4] = {'L', 'P', 'R', 'Q'};
constexpr std::size_t kFixedHeader = 16;

bool f32_exact(double x) { return float_round(x) == x; }

void require(bool ok, const std::string& msg) {
    if (!ok) {
        throw std::invalid_argument("QuantizedLayer: " + msg);
    }
}

std::string index_dtype(std::size_t n) { return n <= 65536 ? "u16" : "u32"; }

struct Section {
    std::string name;
    std::string dtype;
    std::vector<std::size_t> shape;
    std::vector<std::uint8_t> data;
};

std::vector<std::uint8_t> encode_values(std::span<const double> v, const std::string& dtype) {
    detail::ByteWriter w;
    for (double x : v) {
        if (dtype == "f16") {
            w.put_le(half_encode(x));
        } else if (dtype == "f32") {
            w.put_f32(x);
        } else if (dtype == "f64") {
            w.put_f64(x);
        } else {
            w.put_le(e4m3_encode(x));
        }
    }
    return std::move(w.bytes());
}

std::vector<double> decode_values(std::span<const std::uint8_t> b, const std::string& dtype, std::size_t count,
                                  const char* what) {
    detail::ByteReader r(b, what);
    std::vector<double> out(count);
    for (auto& x : out) {
        if (dtype == "f16") {
            x = half_decode(r.get_le<std::uint16_t>());
        } else if (dtype == "f32") {
            x = r.get_f32();
        } else if (dtype == "f64") {
            x = r.get_f64();
        } else if (dtype == "e4m3") {
            x = e4m3_decode(r.get_le<std::uint8_t>());
        } else {
            r.fail("unsupported value dtype '" + dtype + "'");
        }
    }
    return out;
}

std::size_t element_width(const std::string& dtype) {
    if (dtype == "f16" || dtype == "u16") {
        return 2;
    }
    if (dtype == "f32" || dtype == "u32") {
        return 4;
    }
    if (dtype == "f64") {
        return 8;
    }
    return 1;
}

} // namespace

Matrix QuantizedLayer::rotated_residual() const {
    return is_vq() ? dequantize(indices, codebook, rows, cols) : dequantize(codes, grid, rows, cols);
}

void QuantizedLayer::validate() const {
    require(rows > 0 && cols > 0, "empty shape");
    require(scale.size() == cols, "scale has " + std::to_string(scale.size()) + " entries, expected " +
                                      std::to_string(cols));
    for (double s : scale) {
        require(std::isfinite(s) && s > 0.0 && f32_exact(s), "scale entries must be positive binary32 values");
    }
    require(plan.n() == cols, "rotation plan covers " + std::to_string(plan.n()) + " columns");

    const std::size_t r = factors.rank();
    require(factors.u.rows() == (r == 0 ? factors.u.rows() : rows) && factors.u.cols() == r &&
                factors.v.rows() == r && factors.v.cols() == (r == 0 ? factors.v.cols() : cols),
            "low-rank factor shapes do not match rank " + std::to_string(r));
    for (double s : factors.s) {
        require(std::isfinite(s) && s >= 0.0 && f32_exact(s), "singular values must be non-negative binary32");
    }
    if (factors.precision == FactorPrecision::e4m3) {
        auto exact = [](double x) { return e4m3_round(x) == x; };
        require(std::all_of(factors.u.values().begin(), factors.u.values().end(), exact) &&
                    std::all_of(factors.v.values().begin(), factors.v.values().end(), exact),
                "e4m3 factors hold values that are not e4m3-representable");
    }

    if (is_vq()) {
        const std::size_t dim = codebook.dim;
        require(dim > 0 && cols % dim == 0, "codebook dimension does not divide columns");
        require(grid.bits > 0 && grid.bits * dim <= kMaxCodebookBits, "VQ index width out of range");
        require(codebook.size() == (std::size_t{1} << (grid.bits * dim)) &&
                    codebook.entries.size() == codebook.size() * dim,
                "codebook size does not match bits and dimension");
        require(std::all_of(codebook.entries.begin(), codebook.entries.end(), f32_exact),
                "codebook entries must be binary32 values");
        require(indices.size() == rows * (cols / dim), "VQ index count does not match shape");
        require(std::all_of(indices.begin(), indices.end(), [&](std::uint16_t k) { return k < codebook.size(); }),
                "VQ index out of range");
    } else {
        validate_grid(grid, cols);
        require(codes.size() == rows * cols, "code count does not match shape");
        const std::size_t groups = rows * (cols / grid.group_size);
        require(grid.scales.size() == groups, "scale table has wrong length");
        require(std::all_of(grid.scales.begin(), grid.scales.end(),
                            [](double s) { return std::isfinite(s) && half_round(s) == s; }),
                "group scales must be finite binary16 values");
        const std::uint32_t max_code = grid.max_code();
        require(std::all_of(codes.begin(), codes.end(), [&](std::uint8_t c) { return c <= max_code; }),
                "code exceeds the grid width");
        if (grid.symmetric) {
            require(grid.zeros.empty(), "symmetric grid carries zero points");
        } else {
            require(grid.zeros.size() == groups, "zero-point table has wrong length");
            require(std::all_of(grid.zeros.begin(), grid.zeros.end(),
                                [&](std::int32_t z) { return z >= 0 && static_cast<std::uint32_t>(z) <= max_code; }),
                    "zero point outside the code range");
        }
    }
}

Matrix reconstruct_output(const QuantizedLayer& layer, const Matrix& x) {
    if (x.rows() != layer.cols) {
        throw std::invalid_argument("reconstruct_output: input has " + std::to_string(x.rows()) +
                                    " rows, layer expects " + std::to_string(layer.cols));
    }
    Matrix out = matmul(layer.rotated_residual(), rotate_input(x, layer.plan));
    if (layer.factors.rank() == 0) {
        return out;
    }
    Matrix y = matmul(unscaled_v(layer.factors, layer.scale), x);
    for (std::size_t k = 0; k < y.rows(); ++k) {
        for (double& v : y.row(k)) {
            v *= layer.factors.s[k];
        }
    }
    return out + matmul(layer.factors.u, y);
}

double average_bits(std::size_t m, std::size_t n, double d_q, std::size_t g, std::size_t r, double d_r, double d_o) {
    const double md = static_cast<double>(m);
    const double nd = static_cast<double>(n);
    const double rd = static_cast<double>(r);
    const double group_term = g == 0 ? 0.0 : d_o / static_cast<double>(g);
    return d_q + group_term + rd * d_r / nd + rd * d_r / md + 2.0 * d_o / nd + rd * d_o / (md * nd);
}

unsigned factor_bits(FactorPrecision p) noexcept { return p == FactorPrecision::e4m3 ? 8 : 64; }

std::vector<std::uint8_t> pack_layer(const QuantizedLayer& layer) {
    layer.validate();
    const std::size_t m = layer.rows;
    const std::size_t n = layer.cols;
    const std::size_t r = layer.factors.rank();

    std::vector<Section> sections;
    if (layer.is_vq()) {
        const unsigned width = layer.grid.bits * static_cast<unsigned>(layer.codebook.dim);
        std::vector<std::uint32_t> idx(layer.indices.begin(), layer.indices.end());
        sections.push_back({"indices", "u" + std::to_string(width), {m, n / layer.codebook.dim},
                            pack_bits(idx, width)});
        sections.push_back({"codebook", "f32", {layer.codebook.size(), layer.codebook.dim},
                            encode_values(layer.codebook.entries, "f32")});
    } else {
        std::vector<std::uint32_t> codes(layer.codes.begin(), layer.codes.end());
        sections.push_back({"codes", "u" + std::to_string(layer.grid.bits), {m, n}, pack_bits(codes, layer.grid.bits)});
        const std::size_t gpr = n / layer.grid.group_size;
        sections.push_back({"scales", "f16", {m, gpr}, encode_values(layer.grid.scales, "f16")});
        if (!layer.grid.symmetric) {
            std::vector<std::uint32_t> z(layer.grid.zeros.begin(), layer.grid.zeros.end());
            sections.push_back({"zeros", "u" + std::to_string(layer.grid.bits), {m, gpr},
                                pack_bits(z, layer.grid.bits)});
        }
    }
    if (r > 0) {
        const std::string fdt = layer.factors.precision == FactorPrecision::e4m3 ? "e4m3" : "f64";
        sections.push_back({"u", fdt, {m, r}, encode_values(layer.factors.u.values(), fdt)});
        sections.push_back({"sigma", "f32", {r}, encode_values(layer.factors.s, "f32")});
        sections.push_back({"v", fdt, {r, n}, encode_values(layer.factors.v.values(), fdt)});
    }
    sections.push_back({"scale", "f32", {n}, encode_values(layer.scale, "f32")});
    {
        const std::string dt = index_dtype(n);
        detail::ByteWriter w;
        for (std::uint32_t p : layer.plan.permutation().indices()) {
            if (dt == "u16") {
                w.put_le(static_cast<std::uint16_t>(p));
            } else {
                w.put_le(p);
            }
        }
        sections.push_back({"permutation", dt, {n}, std::move(w.bytes())});
    }

    ordered_json meta;
    meta["format"] = "LPRQ";
    meta["version"] = kContainerVersion;
    meta["name"] = layer.name;
    meta["shape"] = {m, n};
    ordered_json q;
    q["kind"] = std::string(to_string(layer.kind));
    q["bits"] = layer.grid.bits;
    if (layer.is_vq()) {
        q["vq_dim"] = layer.codebook.dim;
        q["codebook_size"] = layer.codebook.size();
        q["lloyd_iters"] = layer.meta.lloyd_iters;
        q["seed"] = layer.meta.vq_seed;
    } else {
        q["group_size"] = layer.grid.group_size;
        q["symmetric"] = layer.grid.symmetric;
    }
    q["damp"] = layer.meta.damp;
    q["damp_used"] = layer.meta.damp_used;
    meta["quantizer"] = q;
    meta["low_rank"] = {{"rank", r},
                        {"iterations", layer.meta.iterations},
                        {"precision", std::string(to_string(layer.factors.precision))},
                        {"seed", layer.meta.decompose_seed}};
    meta["rotation"] = {{"identity_block", layer.plan.identity_block()},
                        {"hadamard_block", layer.plan.hadamard_block()}};
    meta["activation_scale"] = {{"exponent", layer.meta.exponent}};
    meta["accounting"] = {{"original_bits", layer.meta.original_bits}};
    meta["prng"] = std::string(kPrngId);
    meta["alignment"] = detail::kAlignment;

    ordered_json list = ordered_json::array();
    std::size_t offset = 0;
    for (const auto& s : sections) {
        list.push_back({{"name", s.name}, {"dtype", s.dtype}, {"shape", s.shape}, {"offset", offset},
                        {"bytes", s.data.size()}});
        offset = detail::align_up(offset + s.data.size());
    }
    meta["sections"] = std::move(list);
    const std::string text = meta.dump();

    detail::ByteWriter w;
    w.put_raw({reinterpret_cast<const std::uint8_t*>(kMagic), 4});
    w.put_le<std::uint32_t>(kContainerVersion);
    w.put_le<std::uint64_t>(text.size());
    w.put_text(text);
    const std::size_t base = detail::align_up(w.size());
    std::size_t pos = base;
    for (const auto& s : sections) {
        w.pad_to(pos);
        w.put_raw(s.data);
        pos = detail::align_up(w.size());
    }
    return std::move(w.bytes());
}

namespace {

struct ParsedContainer {
    nlohmann::json meta;
    std::size_t base = 0;
    std::map<std::string, nlohmann::json> sections;
};

ParsedContainer parse_container(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes, "LPRQ");
    const auto magic = r.get_raw(4);
    if (!std::equal(magic.begin(), magic.end(), kMagic)) {
        r.fail("bad magic (not an LPRQ container)");
    }
    const auto version = r.get_le<std::uint32_t>();
    if (version != kContainerVersion) {
        r.fail("unsupported version " + std::to_string(version));
    }
    const auto len = r.get_le<std::uint64_t>();
    if (len > bytes.size() - kFixedHeader) {
        r.fail("metadata length " + std::to_string(len) + " exceeds container size");
    }
    const auto text = r.get_raw(static_cast<std::size_t>(len));
    ParsedContainer pc;
    try {
        pc.meta = nlohmann::json::parse(text.begin(), text.end());
        for (const auto& s : pc.meta.at("sections")) {
            pc.sections[s.at("name").get<std::string>()] = s;
        }
    } catch (const nlohmann::json::exception& e) {
        r.fail(std::string("bad metadata: ") + e.what());
    }
    pc.base = detail::align_up(kFixedHeader + static_cast<std::size_t>(len));
    return pc;
}

} // namespace

QuantizedLayer unpack_layer(std::span<const std::uint8_t> bytes) {
    const ParsedContainer pc = parse_container(bytes);
    detail::ByteReader r(bytes, "LPRQ");

    auto section = [&](const std::string& name, std::size_t expected_bytes,
                       const std::string& expected_dtype = {}) -> std::pair<std::span<const std::uint8_t>, std::string> {
        const auto it = pc.sections.find(name);
        if (it == pc.sections.end()) {
            r.fail("missing section '" + name + "'");
        }
        std::size_t offset = 0;
        std::size_t size = 0;
        std::string dtype;
        try {
            offset = it->second.at("offset").get<std::size_t>();
            size = it->second.at("bytes").get<std::size_t>();
            dtype = it->second.at("dtype").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            r.fail("section '" + name + "': " + e.what());
        }
        if (!expected_dtype.empty() && dtype != expected_dtype) {
            r.fail("section '" + name + "' has dtype " + dtype + ", expected " + expected_dtype);
        }
        if (size != expected_bytes) {
            r.fail("section '" + name + "' holds " + std::to_string(size) + " bytes, expected " +
                   std::to_string(expected_bytes));
        }
        if (offset % detail::kAlignment != 0) {
            r.fail("section '" + name + "' is not 64-byte aligned");
        }
        r.seek(pc.base);
        if (offset > bytes.size() - pc.base) {
            r.fail("section '" + name + "' starts beyond the end");
        }
        r.seek(pc.base + offset);
        return {r.get_raw(size), dtype};
    };

    QuantizedLayer layer;
    try {
        const auto& meta = pc.meta;
        layer.name = meta.at("name").get<std::string>();
        const auto shape = meta.at("shape").get<std::vector<std::size_t>>();
        if (shape.size() != 2 || shape[0] == 0 || shape[1] == 0) {
            r.fail("shape must be two positive extents");
        }
        layer.rows = shape[0];
        layer.cols = shape[1];
        const auto& q = meta.at("quantizer");
        layer.kind = parse_quantizer_kind(q.at("kind").get<std::string>());
        layer.grid.bits = q.at("bits").get<unsigned>();
        layer.meta.damp = q.at("damp").get<double>();
        layer.meta.damp_used = q.at("damp_used").get<double>();
        const auto& lr = meta.at("low_rank");
        layer.meta.iterations = lr.at("iterations").get<unsigned>();
        layer.meta.decompose_seed = lr.at("seed").get<std::uint64_t>();
        layer.factors.precision = parse_factor_precision(lr.at("precision").get<std::string>());
        const auto rank = lr.at("rank").get<std::size_t>();
        layer.meta.exponent = meta.at("activation_scale").at("exponent").get<double>();
        layer.meta.original_bits = meta.at("accounting").at("original_bits").get<unsigned>();
        const auto& rot = meta.at("rotation");
        const auto b_i = rot.at("identity_block").get<std::size_t>();
        const auto b_h = rot.at("hadamard_block").get<std::size_t>();

        const std::size_t m = layer.rows;
        const std::size_t n = layer.cols;
        if (rank > std::min(m, n)) {
            r.fail("rank " + std::to_string(rank) + " exceeds min(m, n)");
        }

        if (layer.is_vq()) {
            const auto dim = q.at("vq_dim").get<std::size_t>();
            layer.meta.lloyd_iters = q.at("lloyd_iters").get<unsigned>();
            layer.meta.vq_seed = q.at("seed").get<std::uint64_t>();
            if (dim == 0 || n % dim != 0 || layer.grid.bits == 0 || layer.grid.bits * dim > kMaxCodebookBits) {
                r.fail("invalid VQ geometry");
            }
            const unsigned width = layer.grid.bits * static_cast<unsigned>(dim);
            const std::size_t count = m * (n / dim);
            const auto [ib, idt] = section("indices", packed_size(count, width), "u" + std::to_string(width));
            const auto raw = unpack_bits(ib, width, count);
            layer.indices.assign(raw.begin(), raw.end());
            const std::size_t entries = std::size_t{1} << width;
            const auto [cb, cdt] = section("codebook", entries * dim * 4, "f32");
            layer.codebook = Codebook{dim, decode_values(cb, cdt, entries * dim, "LPRQ codebook")};
        } else {
            layer.grid.group_size = q.at("group_size").get<std::size_t>();
            layer.grid.symmetric = q.at("symmetric").get<bool>();
            if (layer.grid.bits == 0 || layer.grid.bits > 8 || layer.grid.group_size == 0 ||
                n % layer.grid.group_size != 0) {
                r.fail("invalid scalar grid geometry");
            }
            const auto [cb, cdt] =
                section("codes", packed_size(m * n, layer.grid.bits), "u" + std::to_string(layer.grid.bits));
            const auto raw = unpack_bits(cb, layer.grid.bits, m * n);
            layer.codes.assign(raw.begin(), raw.end());
            const std::size_t groups = m * (n / layer.grid.group_size);
            const auto [sb, sdt] = section("scales", groups * 2, "f16");
            layer.grid.scales = decode_values(sb, sdt, groups, "LPRQ scales");
            if (!layer.grid.symmetric) {
                const auto [zb, zdt] = section("zeros", packed_size(groups, layer.grid.bits),
                                               "u" + std::to_string(layer.grid.bits));
                const auto zraw = unpack_bits(zb, layer.grid.bits, groups);
                layer.grid.zeros.assign(zraw.begin(), zraw.end());
            }
        }

        if (rank > 0) {
            const std::string fdt = layer.factors.precision == FactorPrecision::e4m3 ? "e4m3" : "f64";
            const std::size_t w = element_width(fdt);
            const auto [ub, udt] = section("u", m * rank * w, fdt);
            layer.factors.u = Matrix(m, rank, decode_values(ub, udt, m * rank, "LPRQ u"));
            const auto [sb, sdt] = section("sigma", rank * 4, "f32");
            layer.factors.s = decode_values(sb, sdt, rank, "LPRQ sigma");
            const auto [vb, vdt] = section("v", rank * n * w, fdt);
            layer.factors.v = Matrix(rank, n, decode_values(vb, vdt, rank * n, "LPRQ v"));
        } else {
            layer.factors.u = Matrix(m, 0);
            layer.factors.v = Matrix(0, n);
        }
        const auto [scb, scdt] = section("scale", n * 4, "f32");
        layer.scale = decode_values(scb, scdt, n, "LPRQ scale");

        const std::string pdt = index_dtype(n);
        const auto [pb, pdt_read] = section("permutation", n * element_width(pdt), pdt);
        detail::ByteReader pr(pb, "LPRQ permutation");
        std::vector<std::uint32_t> perm(n);
        for (auto& p : perm) {
            p = pdt == "u16" ? pr.get_le<std::uint16_t>() : pr.get_le<std::uint32_t>();
        }
        layer.plan = RotationPlan(PermutationIndex(std::move(perm)), b_i, b_h);
        layer.validate();
    } catch (const nlohmann::json::exception& e) {
        r.fail(std::string("bad metadata: ") + e.what());
    } catch (const std::invalid_argument& e) {
        r.fail(e.what());
    }
    return layer;
}

ContainerSummary summarize_container(std::span<const std::uint8_t> bytes) {
    const ParsedContainer pc = parse_container(bytes);
    ContainerSummary out;
    out.metadata_json = pc.meta.dump(2);
    out.total_bytes = bytes.size();
    for (const auto& [name, s] : pc.sections) {
        out.payload_bytes += s.at("bytes").get<std::size_t>();
    }
    return out;
}

BitReport bit_report(const QuantizedLayer& layer, std::span<const std::uint8_t> container) {
    const double mn = static_cast<double>(layer.rows) * static_cast<double>(layer.cols);
    const double d_o = layer.meta.original_bits;
    const double d_r = factor_bits(layer.factors.precision);
    BitReport out;
    if (layer.is_vq()) {
        out.formula = average_bits(layer.rows, layer.cols, layer.grid.bits, 0, layer.factors.rank(), d_r, d_o) +
                      32.0 * static_cast<double>(layer.codebook.entries.size()) / mn;
    } else {
        out.formula = average_bits(layer.rows, layer.cols, layer.grid.bits, layer.grid.group_size,
                                   layer.factors.rank(), d_r, d_o);
        if (!layer.grid.symmetric) {
            // zero points cost d_q bits per group
            out.formula += static_cast<double>(layer.grid.bits) / static_cast<double>(layer.grid.group_size);
        }
    }
    const ContainerSummary s = summarize_container(container);
    out.measured = 8.0 * static_cast<double>(s.payload_bytes) / mn;
    out.container = 8.0 * static_cast<double>(s.total_bytes) / mn;
    return out;
}

} // namespace lopro
