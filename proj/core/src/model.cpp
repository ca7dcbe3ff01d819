#include "bcsimplex/model.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "bcsimplex/error.hpp"

namespace bcsimplex {

namespace {

#include "builtin_models.inc"

std::string lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

const BuiltinText* find_builtin(std::string_view name)
{
    const std::string key = lower(name);
    for (const auto& b : kBuiltins) {
        if (key == b.name) return &b;
    }
    return nullptr;
}

} // namespace

std::vector<std::string> builtin_names()
{
    std::vector<std::string> out;
    for (const auto& b : kBuiltins) out.emplace_back(b.name);
    return out;
}

bool is_builtin(std::string_view name) { return find_builtin(name) != nullptr; }

std::string builtin_source(std::string_view name)
{
    const auto* b = find_builtin(name);
    if (b == nullptr) {
        std::string known;
        for (const auto& n : builtin_names()) known += (known.empty() ? "" : ", ") + n;
        throw ValidationError("unknown model id '" + std::string(name) + "' (builtins: " + known + ")");
    }
    return b->model;
}

std::optional<std::string> builtin_bac_source(std::string_view name)
{
    const auto* b = find_builtin(name);
    if (b == nullptr || b->bac == nullptr) return std::nullopt;
    return std::string(b->bac);
}

DynSystem load_text(std::string_view text, std::string name, const ParamOverrides& overrides)
{
    SystemDecl decl = parse_system(text).with_overrides(overrides);
    decl.name = std::move(name);
    return recast(decl);
}

DynSystem builtin(std::string_view name, const ParamOverrides& overrides)
{
    return load_text(builtin_source(name), lower(name), overrides);
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

DynSystem load(const std::filesystem::path& path, const ParamOverrides& overrides)
{
    try {
        return load_text(read_file(path), path.stem().string(), overrides);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.message(), e.line(), e.column());
    }
}

DynSystem load_model(std::string_view id_or_path, const ParamOverrides& overrides)
{
    if (is_builtin(id_or_path)) return builtin(id_or_path, overrides);
    return load(std::filesystem::path(id_or_path), overrides);
}

std::pair<std::string, double> parse_override(std::string_view text)
{
    const auto eq = text.find('=');
    if (eq == std::string_view::npos || eq == 0) throw ValidationError("expected name=value, got '" + std::string(text) + "'");
    const std::string name(text.substr(0, eq));
    const std::string_view value = text.substr(eq + 1);
    double v = 0.0;
    auto res = std::from_chars(value.data(), value.data() + value.size(), v);
    if (res.ec != std::errc{} || res.ptr != value.data() + value.size()) {
        throw ValidationError("parameter '" + name + "': '" + std::string(value) + "' is not a number");
    }
    return {name, v};
}

} // namespace bcsimplex
