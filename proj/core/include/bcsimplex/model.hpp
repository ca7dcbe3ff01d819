#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bcsimplex/dyn_system.hpp"
#include "bcsimplex/expr.hpp"

namespace bcsimplex {

using ParamOverrides = std::map<std::string, double>;

/// Ids of the compiled-in models: m1, m2, scalar, pendulum.
std::vector<std::string> builtin_names();

/// Model-file text of a builtin (ids are case-insensitive).
std::string builtin_source(std::string_view name);

/// Barrier-certificate file text shipped with a builtin, if any.
std::optional<std::string> builtin_bac_source(std::string_view name);

bool is_builtin(std::string_view name);

/// Parse, apply overrides and recast a builtin model.
DynSystem builtin(std::string_view name, const ParamOverrides& overrides = {});

/// Parse and recast model-file text.
DynSystem load_text(std::string_view text, std::string name, const ParamOverrides& overrides = {});

/// Load a model file; the system is named after the file stem.
DynSystem load(const std::filesystem::path& path, const ParamOverrides& overrides = {});

/// Builtin id or model-file path.
DynSystem load_model(std::string_view id_or_path, const ParamOverrides& overrides = {});

/// Parse `name=value`; throws ValidationError.
std::pair<std::string, double> parse_override(std::string_view text);

std::string read_file(const std::filesystem::path& path);

} // namespace bcsimplex
