#include "lopro/tensor_file.hpp"

#include "byte_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace lopro {

namespace {

constexpr char kMagic[4] = {'L', 'P', 'R', 'T'};

} // namespace

std::string_view to_string(TensorDtype d) noexcept { return d == TensorDtype::f64 ? "f64" : "f32"; }

TensorDtype parse_tensor_dtype(std::string_view s) {
    if (s == "f32") {
        return TensorDtype::f32;
    }
    if (s == "f64") {
        return TensorDtype::f64;
    }
    throw std::invalid_argument("unknown tensor dtype '" + std::string(s) + "' (expected f32 or f64)");
}

std::vector<std::uint8_t> encode_tensor(const std::string& name, const Matrix& m, TensorDtype dtype) {
    nlohmann::ordered_json header;
    header["name"] = name;
    header["dtype"] = std::string(to_string(dtype));
    header["shape"] = {m.rows(), m.cols()};
    const std::string text = header.dump();

    detail::ByteWriter w;
    w.put_raw({reinterpret_cast<const std::uint8_t*>(kMagic), 4});
    w.put_le<std::uint32_t>(kTensorFileVersion);
    w.put_le<std::uint64_t>(text.size());
    w.put_text(text);
    w.pad_to(detail::align_up(w.size()));
    for (double x : m.values()) {
        if (dtype == TensorDtype::f32) {
            w.put_f32(x);
        } else {
            w.put_f64(x);
        }
    }
    return std::move(w.bytes());
}

NamedTensor decode_tensor(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes, "LPRT");
    const auto magic = r.get_raw(4);
    if (!std::equal(magic.begin(), magic.end(), kMagic)) {
        r.fail("bad magic (not an LPRT tensor file)");
    }
    const auto version = r.get_le<std::uint32_t>();
    if (version != kTensorFileVersion) {
        r.fail("unsupported version " + std::to_string(version));
    }
    const auto len = r.get_le<std::uint64_t>();
    if (len > bytes.size()) {
        r.fail("header length " + std::to_string(len) + " exceeds file size");
    }
    const auto raw = r.get_raw(static_cast<std::size_t>(len));
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(raw.begin(), raw.end());
    } catch (const nlohmann::json::exception& e) {
        r.fail(std::string("header is not valid JSON: ") + e.what());
    }

    NamedTensor out;
    std::vector<std::size_t> shape;
    try {
        out.name = header.at("name").get<std::string>();
        out.dtype = parse_tensor_dtype(header.at("dtype").get<std::string>());
        shape = header.at("shape").get<std::vector<std::size_t>>();
    } catch (const std::exception& e) {
        r.fail(std::string("bad header: ") + e.what());
    }
    if (shape.size() == 1) {
        shape.insert(shape.begin(), 1);
    }
    if (shape.size() != 2) {
        r.fail("expected a 1-D or 2-D shape, got " + std::to_string(shape.size()) + " dimensions");
    }
    const std::size_t rows = shape[0];
    const std::size_t cols = shape[1];
    const std::size_t width = out.dtype == TensorDtype::f32 ? 4 : 8;
    if (cols != 0 && rows > (bytes.size() / width) / cols) {
        r.fail("shape " + std::to_string(rows) + "x" + std::to_string(cols) + " exceeds file size");
    }
    r.seek(detail::align_up(r.pos()));
    std::vector<double> data(rows * cols);
    for (auto& x : data) {
        x = out.dtype == TensorDtype::f32 ? r.get_f32() : r.get_f64();
    }
    try {
        out.values = Matrix::from_external(rows, cols, std::move(data));
    } catch (const std::invalid_argument& e) {
        r.fail(e.what());
    }
    return out;
}

void write_tensor_file(const std::filesystem::path& path, const std::string& name, const Matrix& m, TensorDtype dtype) {
    write_file_bytes(path, encode_tensor(name, m, dtype));
}

NamedTensor read_tensor_file(const std::filesystem::path& path) { return decode_tensor(read_file_bytes(path)); }

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open '" + path.string() + "' for reading");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw std::runtime_error("write to '" + path.string() + "' failed");
    }
}

} // namespace lopro
