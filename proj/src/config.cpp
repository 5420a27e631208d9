#include "lopro/config.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <type_traits>

namespace lopro {

namespace {

using json = nlohmann::json;

template <class T>
T get_as(const json& j, const std::string& key) {
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (!j.is_boolean()) {
                throw std::invalid_argument("must be true or false");
            }
        } else if constexpr (std::is_unsigned_v<T>) {
            if (j.is_number_integer() && j.get<std::int64_t>() < 0) {
                throw std::invalid_argument("must be non-negative");
            }
            if (!j.is_number_unsigned() && !j.is_number_integer()) {
                throw std::invalid_argument("must be an integer");
            }
        }
        return j.get<T>();
    } catch (const std::exception& e) {
        throw std::invalid_argument("config key '" + key + "': " + e.what());
    }
}

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "bits",      "group-size", "rank", "it",        "b-i",           "b-h",  "quantizer",
        "vq-dim",    "lloyd-iters", "damp", "exponent", "precision",     "seed", "symmetric",
        "permute",   "original-bits", "name", "weights", "calib",        "calib-synth", "out"};
    return keys;
}

} // namespace

PipelineConfig parse_config_json(std::string_view text, PipelineConfig c) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: not valid JSON: ") + e.what());
    }
    if (!j.is_object()) {
        throw std::invalid_argument("config: top level must be a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
        if (!known_keys().count(key)) {
            throw std::invalid_argument("config: unknown key '" + key + "'");
        }
        if (key == "bits") {
            c.bits = get_as<unsigned>(value, key);
        } else if (key == "group-size") {
            c.group_size = get_as<std::size_t>(value, key);
        } else if (key == "rank") {
            c.rank = get_as<std::size_t>(value, key);
        } else if (key == "it") {
            c.iterations = get_as<unsigned>(value, key);
        } else if (key == "b-i") {
            c.identity_block = get_as<std::size_t>(value, key);
        } else if (key == "b-h") {
            c.hadamard_block = get_as<std::size_t>(value, key);
        } else if (key == "quantizer") {
            c.quantizer = parse_quantizer_kind(get_as<std::string>(value, key));
        } else if (key == "vq-dim") {
            c.vq_dim = get_as<std::size_t>(value, key);
        } else if (key == "lloyd-iters") {
            c.lloyd_iters = get_as<unsigned>(value, key);
        } else if (key == "damp") {
            c.damp = get_as<double>(value, key);
        } else if (key == "exponent") {
            c.exponent = get_as<double>(value, key);
        } else if (key == "precision") {
            c.precision = parse_factor_precision(get_as<std::string>(value, key));
        } else if (key == "seed") {
            c.seed = get_as<std::uint64_t>(value, key);
        } else if (key == "symmetric") {
            c.symmetric = get_as<bool>(value, key);
        } else if (key == "permute") {
            c.permute = get_as<bool>(value, key);
        } else if (key == "original-bits") {
            c.original_bits = get_as<unsigned>(value, key);
        } else if (key == "name") {
            c.name = get_as<std::string>(value, key);
        } else if (key == "weights") {
            c.weights_path = get_as<std::string>(value, key);
        } else if (key == "calib") {
            c.calib_path = get_as<std::string>(value, key);
        } else if (key == "calib-synth") {
            c.calib_synth = get_as<std::string>(value, key);
        } else if (key == "out") {
            c.out_path = get_as<std::string>(value, key);
        }
    }
    return c;
}

PipelineConfig load_config_file(const std::filesystem::path& path, PipelineConfig base) {
    std::ifstream in(path);
    if (!in) {
        throw std::invalid_argument("config: cannot open '" + path.string() + "'");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_json(ss.str(), std::move(base));
}

std::string config_to_json(const PipelineConfig& c) {
    nlohmann::ordered_json j;
    j["name"] = c.name;
    j["bits"] = c.bits;
    j["group-size"] = c.group_size;
    j["symmetric"] = c.symmetric;
    j["rank"] = c.rank;
    j["it"] = c.iterations;
    j["b-i"] = c.identity_block;
    j["b-h"] = c.hadamard_block;
    j["permute"] = c.permute;
    j["quantizer"] = std::string(to_string(c.quantizer));
    j["vq-dim"] = c.vq_dim;
    j["lloyd-iters"] = c.lloyd_iters;
    j["damp"] = c.damp;
    j["exponent"] = c.exponent;
    j["precision"] = std::string(to_string(c.precision));
    j["seed"] = c.seed;
    j["original-bits"] = c.original_bits;
    if (!c.weights_path.empty()) {
        j["weights"] = c.weights_path;
    }
    if (!c.calib_path.empty()) {
        j["calib"] = c.calib_path;
    }
    if (!c.calib_synth.empty()) {
        j["calib-synth"] = c.calib_synth;
    }
    if (!c.out_path.empty()) {
        j["out"] = c.out_path;
    }
    return j.dump(2);
}

SynthCalibSpec parse_synth_spec(std::string_view text) {
    std::vector<std::string> parts;
    std::string cur;
    for (char ch : text) {
        if (ch == ',') {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    parts.push_back(cur);
    if (parts.size() != 5) {
        throw std::invalid_argument("--calib-synth: expected n,tokens,outliers,gain,seed, got '" + std::string(text) +
                                    "'");
    }
    auto as_uint = [&](const std::string& s, const char* what) {
        std::uint64_t v = 0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || p != s.data() + s.size()) {
            throw std::invalid_argument(std::string("--calib-synth: ") + what + " '" + s + "' is not an integer");
        }
        return v;
    };
    SynthCalibSpec out;
    out.channels = as_uint(parts[0], "n");
    out.tokens = as_uint(parts[1], "tokens");
    out.outliers = as_uint(parts[2], "outliers");
    try {
        std::size_t used = 0;
        out.gain = std::stod(parts[3], &used);
        if (used != parts[3].size()) {
            throw std::invalid_argument("trailing characters");
        }
    } catch (const std::exception&) {
        throw std::invalid_argument("--calib-synth: gain '" + parts[3] + "' is not a number");
    }
    out.seed = as_uint(parts[4], "seed");
    if (out.channels == 0 || out.tokens == 0) {
        throw std::invalid_argument("--calib-synth: n and tokens must be positive");
    }
    if (out.outliers > out.channels) {
        throw std::invalid_argument("--calib-synth: outliers exceeds n");
    }
    return out;
}

} // namespace lopro
