#include "mlc/params_io.hpp"

#include "mlc/error.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace mlc {

namespace {

constexpr const char* k_magic = "MLC-PARAMS";
constexpr int k_version = 1;

std::string format_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

[[noreturn]] void parse_fail(const std::string& path, int line, const std::string& what) {
    throw ParseError(path + ":" + std::to_string(line) + ": " + what);
}

} // namespace

void save_params(const std::string& path, const ParamVector& params, const ParamsMeta& meta) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");

    out << k_magic << ' ' << k_version << '\n';
    out << "meta " << meta.size() << '\n';
    for (const auto& [key, value] : meta) {
        if (key.find_first_of(" \n") != std::string::npos || value.find('\n') != std::string::npos) {
            throw ConfigError("save_params: meta key/value may not contain spaces in key or newlines: '" + key + "'");
        }
        out << key << ' ' << value << '\n';
    }
    out << "segments " << params.segment_count() << '\n';
    for (const auto& seg : params.segments()) {
        out << "segment " << seg.name << ' ' << seg.tensor.rank();
        for (int d : seg.tensor.shape()) out << ' ' << d;
        out << '\n';
        for (std::size_t i = 0; i < seg.tensor.size(); ++i) {
            if (i) out << ' ';
            out << format_value(seg.tensor.at(i));
        }
        out << '\n';
    }
    out.flush();
    if (!out) throw IoError("write to '" + path + "' failed");
}

LoadedParams load_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");

    int lineno = 0;
    std::string line;
    auto next_line = [&]() -> std::string& {
        if (!std::getline(in, line)) parse_fail(path, lineno + 1, "unexpected end of file");
        ++lineno;
        return line;
    };

    {
        std::istringstream head(next_line());
        std::string magic;
        int version = 0;
        if (!(head >> magic >> version) || magic != k_magic) {
            parse_fail(path, lineno, "expected '" + std::string(k_magic) + " <version>' header");
        }
        if (version != k_version) {
            parse_fail(path, lineno, "unsupported version " + std::to_string(version));
        }
    }

    LoadedParams result;
    {
        std::istringstream ms(next_line());
        std::string word;
        std::size_t count = 0;
        if (!(ms >> word >> count) || word != "meta") parse_fail(path, lineno, "expected 'meta <count>'");
        for (std::size_t i = 0; i < count; ++i) {
            std::istringstream kv(next_line());
            std::string key;
            if (!(kv >> key)) parse_fail(path, lineno, "expected 'key value' meta pair");
            std::string value;
            std::getline(kv, value);
            if (!value.empty() && value.front() == ' ') value.erase(0, 1);
            result.meta.emplace_back(key, value);
        }
    }

    std::size_t segment_count = 0;
    {
        std::istringstream ss(next_line());
        std::string word;
        if (!(ss >> word >> segment_count) || word != "segments") {
            parse_fail(path, lineno, "expected 'segments <count>'");
        }
    }
    for (std::size_t s = 0; s < segment_count; ++s) {
        std::istringstream hs(next_line());
        std::string word, name;
        int rank = 0;
        if (!(hs >> word >> name >> rank) || word != "segment" || rank < 0) {
            parse_fail(path, lineno, "expected 'segment <name> <rank> <dims...>'");
        }
        std::vector<int> shape(static_cast<std::size_t>(rank));
        for (int& d : shape) {
            if (!(hs >> d) || d < 0) parse_fail(path, lineno, "bad dimension in segment '" + name + "'");
        }
        const std::size_t numel = shape_numel(shape);
        Tensor t(shape);
        std::istringstream vs(next_line());
        for (std::size_t i = 0; i < numel; ++i) {
            if (!(vs >> t.at(i))) {
                parse_fail(path, lineno, "segment '" + name + "' expects " + std::to_string(numel) +
                                             " values, failed at value " + std::to_string(i));
            }
        }
        double extra;
        if (vs >> extra) parse_fail(path, lineno, "segment '" + name + "' has trailing values");
        result.params.add(name, std::move(t));
    }
    return result;
}

} // namespace mlc
