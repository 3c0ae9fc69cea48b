#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"
#include "nhvol/liealg.hpp"
#include "nhvol/system.hpp"

namespace nhvol {

using ParameterOverrides = std::map<std::string, double>;

/// Builds a system from a system file document. Throws ValidationError with a
/// JSON-pointer path on schema violations, ParseError on bad expressions.
NonholonomicSystem system_from_json(const nlohmann::json& doc, const ParameterOverrides& overrides = {});
NonholonomicSystem load_system(const std::filesystem::path& path, const ParameterOverrides& overrides = {});

/// Builds a Lie algebra system from an EPS file document. Structure-constant
/// triples use 1-based indices; the antisymmetric partner of each triple is
/// filled in unless given explicitly.
LieAlgebraSystem eps_from_json(const nlohmann::json& doc, const ParameterOverrides& overrides = {});
LieAlgebraSystem load_eps(const std::filesystem::path& path, const ParameterOverrides& overrides = {});

nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace nhvol
