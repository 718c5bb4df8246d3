#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "wbary/errors.hpp"
#include "wbary/measures.hpp"

namespace wbary {

namespace {

using nlohmann::json;

json box_to_json(const Box& box) {
  json j = json::array();
  for (int a = 0; a < box.dim(); ++a) j.push_back({box.lo[a], box.hi[a]});
  return j;
}

Box box_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw ParseError("domain: expected [[lo,hi],...]");
  const int d = static_cast<int>(j.size());
  Eigen::VectorXd lo(d), hi(d);
  for (int a = 0; a < d; ++a) {
    lo[a] = j[a].at(0).get<double>();
    hi[a] = j[a].at(1).get<double>();
  }
  return Box(lo, hi);
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(static_cast<int>(j.size()));
  for (int i = 0; i < v.size(); ++i) v[i] = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json j = json::array();
  for (int i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

Measure measure_from_json(const json& j) {
  if (j.contains("values")) {
    const int d = j.at("dim").get<int>();
    std::vector<int> shape = j.at("shape").get<std::vector<int>>();
    if (static_cast<int>(shape.size()) != d) {
      throw ParseError("grid json: shape does not match dim");
    }
    GridGeometry geom(vector_from_json(j.at("origin")),
                      vector_from_json(j.at("cell_size")), shape);
    return GridDensity(geom, vector_from_json(j.at("values")));
  }
  if (!j.contains("points") || !j.contains("weights")) {
    throw ParseError("measure json: need points/weights or a grid schema");
  }
  const int d = j.at("dim").get<int>();
  const json& pts = j.at("points");
  const int n = static_cast<int>(pts.size());
  if (n == 0) throw ParseError("measure json: empty point list");
  Eigen::MatrixXd points(n, d);
  for (int i = 0; i < n; ++i) {
    const json& row = pts[static_cast<std::size_t>(i)];
    if (static_cast<int>(row.size()) != d) {
      throw ParseError("measure json: point of wrong dimension");
    }
    for (int a = 0; a < d; ++a) points(i, a) = row[static_cast<std::size_t>(a)].get<double>();
  }
  Eigen::VectorXd weights = vector_from_json(j.at("weights"));
  Box domain = j.contains("domain")
                   ? box_from_json(j.at("domain"))
                   : Box(points.colwise().minCoeff().transpose(),
                         (points.colwise().maxCoeff().transpose().array() +
                          1e-9).matrix());
  return DiscreteMeasure(std::move(points), std::move(weights), domain);
}

json measure_to_json(const Measure& measure) {
  json j;
  if (std::holds_alternative<GridDensity>(measure)) {
    const GridDensity& g = std::get<GridDensity>(measure);
    j["dim"] = g.dim();
    j["origin"] = vector_to_json(g.geometry().origin);
    j["cell_size"] = vector_to_json(g.geometry().cell);
    j["shape"] = g.geometry().shape;
    j["values"] = vector_to_json(g.values());
  } else {
    const DiscreteMeasure& m = std::get<DiscreteMeasure>(measure);
    j["dim"] = m.dim();
    j["domain"] = box_to_json(m.domain());
    json pts = json::array();
    for (int i = 0; i < m.size(); ++i) {
      json row = json::array();
      for (int a = 0; a < m.dim(); ++a) row.push_back(m.points()(i, a));
      pts.push_back(std::move(row));
    }
    j["points"] = std::move(pts);
    j["weights"] = vector_to_json(m.weights());
  }
  return j;
}

DiscreteMeasure measure_from_csv(std::istream& in, const CsvOptions& opts) {
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first && opts.has_header) {
      first = false;
      continue;
    }
    first = false;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        row.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw ParseError("csv: cannot parse '" + tok + "' as a number");
      }
    }
    if (row.size() < 2) throw ParseError("csv: need at least one coordinate and a weight");
    if (!rows.empty() && rows.front().size() != row.size()) {
      throw ParseError("csv: inconsistent column count");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("csv: no data rows");
  const int d = static_cast<int>(rows.front().size()) - 1;
  const int n = static_cast<int>(rows.size());
  Eigen::MatrixXd points(n, d);
  Eigen::VectorXd weights(n);
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < d; ++a) points(i, a) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)];
    weights[i] = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)];
  }
  // CSV carries no domain: use the tight bounding box of the support.
  Eigen::VectorXd lo = points.colwise().minCoeff().transpose();
  Eigen::VectorXd hi = points.colwise().maxCoeff().transpose();
  for (int a = 0; a < d; ++a) {
    if (!(lo[a] < hi[a])) hi[a] = lo[a] + 1e-9;
  }
  return DiscreteMeasure(std::move(points), std::move(weights), Box(lo, hi));
}

}  // namespace

Measure load_measure(const std::filesystem::path& path, FileFormat format,
                     const CsvOptions& csv) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  if (format == FileFormat::Json) {
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ParseError("json: " + std::string(e.what()));
    }
    return measure_from_json(j);
  }
  return measure_from_csv(in, csv);
}

void save_measure(const Measure& measure, const std::filesystem::path& path,
                  FileFormat format, const CsvOptions& csv) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open " + path.string() + " for writing");
  if (format == FileFormat::Json) {
    out << measure_to_json(measure).dump(2) << "\n";
    return;
  }
  if (!std::holds_alternative<DiscreteMeasure>(measure)) {
    throw ParseError("csv: only point clouds can be written as csv");
  }
  const DiscreteMeasure& m = std::get<DiscreteMeasure>(measure);
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  if (csv.has_header) {
    for (int a = 0; a < m.dim(); ++a) out << "x" << a << ",";
    out << "w\n";
  }
  for (int i = 0; i < m.size(); ++i) {
    for (int a = 0; a < m.dim(); ++a) out << m.points()(i, a) << ",";
    out << m.weights()[i] << "\n";
  }
}

}  // namespace wbary
