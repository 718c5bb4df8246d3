#include <fstream>

#include <json.hpp>

#include "wbary/errors.hpp"
#include "wbary/models.hpp"

namespace wbary {

namespace {

using nlohmann::json;

Eigen::VectorXd vec_from(const json& j) {
  Eigen::VectorXd v(static_cast<int>(j.size()));
  for (int i = 0; i < v.size(); ++i) v[i] = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

json vec_to(const Eigen::VectorXd& v) {
  json j = json::array();
  for (int i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

Eigen::MatrixXd mat_from(const json& j) {
  const int r = static_cast<int>(j.size());
  if (r == 0) throw ParseError("family json: empty matrix");
  const int c = static_cast<int>(j[0].size());
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i) {
    for (int k = 0; k < c; ++k) {
      m(i, k) = j[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)].get<double>();
    }
  }
  return m;
}

json mat_to(const Eigen::MatrixXd& m) {
  json j = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    j.push_back(std::move(row));
  }
  return j;
}

Box box_from(const json& j) {
  const int p = static_cast<int>(j.size());
  Eigen::VectorXd lo(p), hi(p);
  for (int a = 0; a < p; ++a) {
    lo[a] = j[static_cast<std::size_t>(a)].at(0).get<double>();
    hi[a] = j[static_cast<std::size_t>(a)].at(1).get<double>();
  }
  return Box(lo, hi);
}

json box_to(const Box& b) {
  json j = json::array();
  for (int a = 0; a < b.dim(); ++a) j.push_back({b.lo[a], b.hi[a]});
  return j;
}

GridDensity grid_from(const json& j, const std::filesystem::path& base) {
  if (j.contains("path")) {
    const std::filesystem::path p = base / j.at("path").get<std::string>();
    Measure m = load_measure(p, FileFormat::Json);
    if (!std::holds_alternative<GridDensity>(m)) {
      throw ParseError("family json: template file is not a grid density");
    }
    return std::get<GridDensity>(m);
  }
  const int d = j.at("dim").get<int>();
  std::vector<int> shape = j.at("shape").get<std::vector<int>>();
  if (static_cast<int>(shape.size()) != d) {
    throw ParseError("family json: template shape does not match dim");
  }
  GridGeometry geom(vec_from(j.at("origin")), vec_from(j.at("cell_size")),
                    shape);
  return GridDensity(geom, vec_from(j.at("values")));
}

json grid_to(const GridDensity& g) {
  json j;
  j["dim"] = g.dim();
  j["origin"] = vec_to(g.geometry().origin);
  j["cell_size"] = vec_to(g.geometry().cell);
  j["shape"] = g.geometry().shape;
  j["values"] = vec_to(g.values());
  return j;
}

WeightDensity weight_from(const json& j, const Box& theta_box) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "uniform") return WeightDensity::uniform(theta_box);
  if (kind == "trunc_gauss") {
    return WeightDensity::truncated_gaussian(theta_box, vec_from(j.at("mean")),
                                             vec_from(j.at("sigma")));
  }
  if (kind == "poly") {
    return WeightDensity::polynomial(
        theta_box, j.at("coeffs").get<std::vector<std::vector<double>>>());
  }
  throw ParseError("family json: unknown weight density kind '" + kind + "'");
}

}  // namespace

DeformableFamily load_family(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("family json: " + std::string(e.what()));
  }
  const std::string kind = j.at("kind").get<std::string>();
  Box theta_box = box_from(j.at("theta_box"));
  GridDensity tmpl = grid_from(j.at("template"), path.parent_path());
  WeightDensity g = weight_from(j.at("g"), theta_box);
  if (kind == "shift") {
    return make_shift_family(std::move(tmpl), std::move(g),
                             std::move(theta_box));
  }
  if (kind == "location_scale") {
    return make_location_scale_1d(std::move(tmpl), std::move(g),
                                  std::move(theta_box));
  }
  if (kind == "affine") {
    const json& phi = j.at("phi");
    DeformableFamily::AffineTables tables;
    tables.A0 = mat_from(phi.at("A0"));
    tables.b0 = vec_from(phi.at("b0"));
    for (const json& a : phi.at("A")) tables.A.push_back(mat_from(a));
    for (const json& b : phi.at("b")) tables.b.push_back(vec_from(b));
    return make_affine_family_from_tables(std::move(tables), std::move(g),
                                          std::move(theta_box),
                                          std::move(tmpl));
  }
  throw ParseError("family json: unknown kind '" + kind + "'");
}

void save_family(const DeformableFamily& family,
                 const std::filesystem::path& path) {
  json j;
  switch (family.kind()) {
    case DeformableFamily::Kind::Shift:
      j["kind"] = "shift";
      break;
    case DeformableFamily::Kind::LocationScale:
      j["kind"] = "location_scale";
      break;
    case DeformableFamily::Kind::Affine:
      j["kind"] = "affine";
      break;
  }
  j["theta_box"] = box_to(family.theta_box());
  j["template"] = grid_to(family.template_density());
  const WeightDensity& g = family.weight_density();
  if (g.kind() == "uniform") {
    j["g"] = {{"kind", "uniform"}};
  } else if (g.kind() == "trunc_gauss") {
    j["g"] = {{"kind", "trunc_gauss"},
              {"mean", vec_to(g.gauss_mean())},
              {"sigma", vec_to(g.gauss_sigma())}};
  } else if (g.kind() == "poly") {
    j["g"] = {{"kind", "poly"}, {"coeffs", g.poly_coeffs()}};
  } else {
    throw ParseError("save_family: custom weight densities are not serializable");
  }
  if (family.kind() == DeformableFamily::Kind::Affine) {
    const auto& tables = family.affine_tables();
    if (!tables) {
      throw ParseError("save_family: affine family lacks coefficient tables");
    }
    json phi;
    phi["A0"] = mat_to(tables->A0);
    phi["b0"] = vec_to(tables->b0);
    json As = json::array(), bs = json::array();
    for (const auto& a : tables->A) As.push_back(mat_to(a));
    for (const auto& b : tables->b) bs.push_back(vec_to(b));
    phi["A"] = std::move(As);
    phi["b"] = std::move(bs);
    j["phi"] = std::move(phi);
  }
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << "\n";
}

}  // namespace wbary
