#include "nhvol/io.hpp"

#include <fstream>
#include <set>

#include "nhvol/error.hpp"
#include "nhvol/parser.hpp"

namespace nhvol {

using nlohmann::json;

namespace {

void require(bool ok, const std::string& path, const std::string& message) {
  if (!ok) throw ValidationError(path, message);
}

void reject_unknown(const json& doc, const std::set<std::string>& allowed, const std::string& path) {
  for (const auto& [key, value] : doc.items()) {
    if (key == "nonlinear_constraints") {
      throw ValidationError(path + "/" + key,
                            "nonlinear constraints are not supported; constraints must be linear in the velocities");
    }
    if (key == "affine_terms" || key == "time_dependent") {
      throw ValidationError(path + "/" + key, "affine or time-dependent constraints are not supported");
    }
    require(allowed.count(key) > 0, path + "/" + key, "unknown field");
  }
}

// Expression entry: a string or a number.
Expr expression(const json& v, const std::string& path, std::span<const std::string> coords,
                std::span<const std::string> params) {
  if (v.is_number()) return Expr(v.get<double>());
  require(v.is_string(), path, "expected an expression string or a number");
  try {
    return parse(v.get<std::string>(), coords, params);
  } catch (const ParseError& e) {
    throw ValidationError(path, e.what());
  }
}

std::pair<std::vector<std::string>, std::vector<double>> parameter_table(const json& doc,
                                                                        const ParameterOverrides& overrides) {
  std::vector<std::string> names;
  std::vector<double> values;
  if (doc.contains("parameters")) {
    const json& p = doc.at("parameters");
    require(p.is_object(), "/parameters", "expected an object of name: value");
    for (const auto& [name, value] : p.items()) {
      require(value.is_number(), "/parameters/" + name, "parameter value must be a number");
      names.push_back(name);
      values.push_back(value.get<double>());
    }
  }
  for (const auto& [name, value] : overrides) {
    auto it = std::find(names.begin(), names.end(), name);
    require(it != names.end(), "/parameters/" + name, "override for an undeclared parameter");
    values[static_cast<std::size_t>(it - names.begin())] = value;
  }
  return {names, values};
}

}  // namespace

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path.string(), "cannot open file");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string(), std::string("malformed JSON: ") + e.what());
  }
}

NonholonomicSystem system_from_json(const json& doc, const ParameterOverrides& overrides) {
  require(doc.is_object(), "", "system file must be a JSON object");
  reject_unknown(doc,
                 {"name", "description", "coordinates", "angles", "parameters", "metric", "potential",
                  "constraints", "domain", "guards", "guard_margin"},
                 "");
  for (const char* key : {"coordinates", "metric", "constraints", "domain"}) {
    require(doc.contains(key), std::string("/") + key, "required field is missing");
  }

  NonholonomicSystem sys;
  sys.name = doc.value("name", std::string("unnamed"));
  const json& coords = doc.at("coordinates");
  require(coords.is_array() && !coords.empty(), "/coordinates", "expected a nonempty array of names");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    require(coords[i].is_string(), "/coordinates/" + std::to_string(i), "expected a string");
    const std::string name = coords[i].get<std::string>();
    require(seen.insert(name).second, "/coordinates/" + std::to_string(i), "duplicate coordinate '" + name + "'");
    sys.coordinates.push_back(name);
  }
  const int n = static_cast<int>(sys.coordinates.size());
  require(n <= kMaxChartDimension, "/coordinates", "too many coordinates");

  sys.angular.assign(static_cast<std::size_t>(n), false);
  if (doc.contains("angles")) {
    const json& a = doc.at("angles");
    require(a.is_array(), "/angles", "expected an array of coordinate names");
    for (std::size_t i = 0; i < a.size(); ++i) {
      const std::string path = "/angles/" + std::to_string(i);
      require(a[i].is_string(), path, "expected a string");
      auto it = std::find(sys.coordinates.begin(), sys.coordinates.end(), a[i].get<std::string>());
      require(it != sys.coordinates.end(), path, "not a declared coordinate");
      sys.angular[static_cast<std::size_t>(it - sys.coordinates.begin())] = true;
    }
  }

  auto [names, values] = parameter_table(doc, overrides);
  sys.parameters = names;
  for (const std::string& p : sys.parameters) {
    require(!seen.count(p), "/parameters/" + p, "parameter shadows a coordinate");
  }

  const json& metric = doc.at("metric");
  require(metric.is_array() && static_cast<int>(metric.size()) == n, "/metric",
          "metric must have " + std::to_string(n) + " rows");
  sys.metric = ExprMatrix(n, n);
  for (int i = 0; i < n; ++i) {
    const json& row = metric[static_cast<std::size_t>(i)];
    const std::string rpath = "/metric/" + std::to_string(i);
    require(row.is_array() && static_cast<int>(row.size()) == n, rpath,
            "row must have " + std::to_string(n) + " entries");
    for (int j = 0; j < n; ++j) {
      sys.metric(i, j) = expression(row[static_cast<std::size_t>(j)], rpath + "/" + std::to_string(j),
                                    sys.coordinates, sys.parameters);
    }
  }

  sys.potential = doc.contains("potential")
                      ? expression(doc.at("potential"), "/potential", sys.coordinates, sys.parameters)
                      : Expr(0.0);

  const json& cons = doc.at("constraints");
  require(cons.is_array() && !cons.empty(), "/constraints", "expected a nonempty array of covector rows");
  for (std::size_t a = 0; a < cons.size(); ++a) {
    const std::string rpath = "/constraints/" + std::to_string(a);
    const json& row = cons[a];
    require(row.is_array() && static_cast<int>(row.size()) == n, rpath,
            "constraint row must have " + std::to_string(n) + " entries");
    std::vector<Expr> comps;
    for (int i = 0; i < n; ++i) {
      comps.push_back(expression(row[static_cast<std::size_t>(i)], rpath + "/" + std::to_string(i),
                                 sys.coordinates, sys.parameters));
    }
    sys.constraints.push_back(KForm::one_form(comps));
  }

  const json& dom = doc.at("domain");
  require(dom.is_object(), "/domain", "expected an object of coordinate: [lo, hi]");
  sys.domain.box.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const std::string& name = sys.coordinates[static_cast<std::size_t>(i)];
    const std::string path = "/domain/" + name;
    require(dom.contains(name), path, "missing interval");
    const json& iv = dom.at(name);
    require(iv.is_array() && iv.size() == 2 && iv[0].is_number() && iv[1].is_number(), path,
            "expected [lo, hi]");
    const double lo = iv[0].get<double>(), hi = iv[1].get<double>();
    require(lo < hi, path, "empty interval");
    sys.domain.box[static_cast<std::size_t>(i)] = Interval{lo, hi};
  }
  for (const auto& [key, value] : dom.items()) {
    require(seen.count(key) > 0, "/domain/" + key, "not a declared coordinate");
  }
  if (doc.contains("guards")) {
    const json& g = doc.at("guards");
    require(g.is_array(), "/guards", "expected an array of expressions");
    for (std::size_t i = 0; i < g.size(); ++i) {
      sys.domain.guards.push_back(
          expression(g[i], "/guards/" + std::to_string(i), sys.coordinates, sys.parameters));
    }
  }
  if (doc.contains("guard_margin")) {
    require(doc.at("guard_margin").is_number(), "/guard_margin", "expected a number");
    sys.domain.guard_margin = doc.at("guard_margin").get<double>();
  }
  sys.domain.params = values;
  return sys;
}

NonholonomicSystem load_system(const std::filesystem::path& path, const ParameterOverrides& overrides) {
  return system_from_json(read_json(path), overrides);
}

LieAlgebraSystem eps_from_json(const json& doc, const ParameterOverrides& overrides) {
  require(doc.is_object(), "", "EPS file must be a JSON object");
  reject_unknown(doc, {"name", "description", "dimension", "parameters", "structure_constants", "inertia", "constraints"},
                 "");
  for (const char* key : {"dimension", "structure_constants", "inertia"}) {
    require(doc.contains(key), std::string("/") + key, "required field is missing");
  }
  auto [names, values] = parameter_table(doc, overrides);
  const std::vector<std::string> none;
  auto number = [&](const json& v, const std::string& path) {
    const Expr e = expression(v, path, none, names);
    try {
      return evaluate(e, Point{{}, values});
    } catch (const DomainError& err) {
      throw ValidationError(path, err.what());
    }
  };

  LieAlgebraSystem sys;
  sys.name = doc.value("name", std::string("unnamed"));
  require(doc.at("dimension").is_number_integer(), "/dimension", "expected an integer");
  const int n = doc.at("dimension").get<int>();
  require(n >= 1 && n <= 64, "/dimension", "dimension out of range");
  sys.constants = StructureConstants(n);

  const json& sc = doc.at("structure_constants");
  require(sc.is_array(), "/structure_constants", "expected an array of [i, j, k, value]");
  std::set<std::tuple<int, int, int>> given;
  for (std::size_t t = 0; t < sc.size(); ++t) {
    const std::string path = "/structure_constants/" + std::to_string(t);
    const json& e = sc[t];
    require(e.is_array() && e.size() == 4, path, "expected [i, j, k, value]");
    for (int u = 0; u < 3; ++u) {
      require(e[static_cast<std::size_t>(u)].is_number_integer(), path + "/" + std::to_string(u), "index must be an integer");
      const int idx = e[static_cast<std::size_t>(u)].get<int>();
      require(idx >= 1 && idx <= n, path + "/" + std::to_string(u), "index out of range 1.." + std::to_string(n));
    }
    const int i = e[0].get<int>() - 1, j = e[1].get<int>() - 1, k = e[2].get<int>() - 1;
    require(given.insert({i, j, k}).second, path, "duplicate triple");
    sys.constants.set(k, i, j, number(e[3], path + "/3"));
  }
  // fill antisymmetric partners that were not given explicitly
  for (const auto& [i, j, k] : given) {
    if (!given.count({j, i, k})) sys.constants.set(k, j, i, -sys.constants(k, i, j));
  }

  auto matrix = [&](const json& v, const std::string& path, int cols) {
    require(v.is_array(), path, "expected an array of rows");
    Eigen::MatrixXd out(static_cast<Eigen::Index>(v.size()), cols);
    for (std::size_t r = 0; r < v.size(); ++r) {
      const std::string rpath = path + "/" + std::to_string(r);
      require(v[r].is_array() && static_cast<int>(v[r].size()) == cols, rpath,
              "row must have " + std::to_string(cols) + " entries");
      for (int c = 0; c < cols; ++c) {
        out(static_cast<Eigen::Index>(r), c) = number(v[r][static_cast<std::size_t>(c)], rpath + "/" + std::to_string(c));
      }
    }
    return out;
  };
  sys.inertia = matrix(doc.at("inertia"), "/inertia", n);
  require(sys.inertia.rows() == n, "/inertia", "inertia must be " + std::to_string(n) + "x" + std::to_string(n));
  require((sys.inertia - sys.inertia.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, sys.inertia.norm()),
          "/inertia", "inertia must be symmetric");
  sys.constraints = doc.contains("constraints") ? matrix(doc.at("constraints"), "/constraints", n)
                                                : Eigen::MatrixXd(0, n);
  return sys;
}

LieAlgebraSystem load_eps(const std::filesystem::path& path, const ParameterOverrides& overrides) {
  return eps_from_json(read_json(path), overrides);
}

}  // namespace nhvol
