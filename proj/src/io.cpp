#include "mixedreg/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <utility>

#include <json.hpp>

#include "mixedreg/errors.hpp"

namespace mixedreg {

namespace {

using nlohmann::json;

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw SpecError(std::string(what) + ": " + e.what());
  }
}

void require_object(const json& doc, const char* what) {
  if (!doc.is_object()) {
    throw SpecError(std::string(what) + ": expected a JSON object");
  }
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const char* what) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* key : allowed) {
      if (it.key() == key) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw SpecError(std::string(what) + ": unknown field \"" + it.key() +
                      "\"");
    }
  }
}

void check_version(const json& obj, const char* what, bool required) {
  if (!obj.contains("version")) {
    if (required) throw SpecError(std::string(what) + ": missing version");
    return;
  }
  if (!obj["version"].is_number_integer() || obj["version"].get<int>() != 1) {
    throw SpecError(std::string(what) + ": unsupported version");
  }
}

double number_at(const json& v, const char* what) {
  if (!v.is_number()) {
    throw SpecError(std::string(what) + ": expected a number");
  }
  return v.get<double>();
}

int matrix_index(const json& v, int r, const char* what) {
  if (!v.is_number_integer()) {
    throw SpecError(std::string(what) + ": index must be an integer");
  }
  const int one_based = v.get<int>();
  if (one_based < 1 || one_based > r) {
    throw SpecError(std::string(what) + ": index " + std::to_string(one_based) +
                    " outside 1.." + std::to_string(r));
  }
  return one_based - 1;
}

// Constraint fields shared by the standalone document and the hypothesis
// blocks; `extra` collects beta_restrictions when allowed.
ConstraintSpec parse_constraint_fields(const json& obj, int r, const char* what,
                                       std::vector<BetaRestriction>* extra) {
  if (extra) {
    check_keys(obj,
               {"version", "fixed", "zeros", "ties", "eigen_floor",
                "beta_restrictions"},
               what);
  } else {
    check_keys(obj, {"version", "fixed", "zeros", "ties", "eigen_floor"}, what);
  }
  check_version(obj, what, false);

  ConstraintSpec cs;
  cs.r = r;
  if (obj.contains("fixed")) {
    for (const auto& entry : obj["fixed"]) {
      if (!entry.is_array() || entry.size() != 3) {
        throw SpecError(std::string(what) + ": fixed entries are [j,k,value]");
      }
      cs.fixed.push_back({matrix_index(entry[0], r, what),
                          matrix_index(entry[1], r, what),
                          number_at(entry[2], what)});
    }
  }
  if (obj.contains("zeros")) {
    for (const auto& entry : obj["zeros"]) {
      if (!entry.is_array() || entry.size() != 2) {
        throw SpecError(std::string(what) + ": zero entries are [j,k]");
      }
      cs.zeros.push_back(
          {matrix_index(entry[0], r, what), matrix_index(entry[1], r, what)});
    }
  }
  if (obj.contains("ties")) {
    for (const auto& group : obj["ties"]) {
      if (!group.is_array()) {
        throw SpecError(std::string(what) + ": tie groups are arrays of [j,k]");
      }
      std::vector<std::pair<int, int>> g;
      for (const auto& entry : group) {
        if (!entry.is_array() || entry.size() != 2) {
          throw SpecError(std::string(what) + ": tie entries are [j,k]");
        }
        g.push_back(
            {matrix_index(entry[0], r, what), matrix_index(entry[1], r, what)});
      }
      cs.ties.push_back(std::move(g));
    }
  }
  if (obj.contains("eigen_floor")) {
    cs.eigen_floor = number_at(obj["eigen_floor"], what);
  }

  if (extra && obj.contains("beta_restrictions")) {
    for (const auto& entry : obj["beta_restrictions"]) {
      if (!entry.is_array() || entry.size() != 2 ||
          !entry[0].is_number_integer()) {
        throw SpecError(std::string(what) +
                        ": beta restrictions are [index,value]");
      }
      const int one_based = entry[0].get<int>();
      if (one_based < 1) {
        throw SpecError(std::string(what) +
                        ": beta restriction index must be at least 1");
      }
      extra->push_back({one_based - 1, number_at(entry[1], what)});
    }
  }

  validate_constraints(cs);
  return cs;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r' && c != ' ' && c != '\t') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& tok, int line_no) {
  double v = 0.0;
  const char* begin = tok.data();
  const char* end = begin + tok.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) {
    throw SpecError("CSV line " + std::to_string(line_no) + ": \"" + tok +
                    "\" is not a number");
  }
  return v;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

CsvTable parse_csv(const std::string& text) {
  CsvTable table;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto toks = split_csv_line(line);
    if (table.header.empty()) {
      table.header = toks;
      continue;
    }
    if (toks.size() != table.header.size()) {
      throw SpecError("CSV line " + std::to_string(line_no) + ": expected " +
                      std::to_string(table.header.size()) + " fields, got " +
                      std::to_string(toks.size()));
    }
    std::vector<double> row;
    row.reserve(toks.size());
    for (const auto& tok : toks) row.push_back(parse_double(tok, line_no));
    table.rows.push_back(std::move(row));
  }
  if (table.header.empty()) throw SpecError("CSV input is empty");
  return table;
}

std::vector<std::string> expected_columns(const ModelConfig& cfg, int p,
                                          bool with_y) {
  std::vector<std::string> cols;
  const int r = cfg.model.r();
  if (with_y) {
    for (int j = 1; j <= r; ++j) cols.push_back("y" + std::to_string(j));
  }
  if (cfg.layout == DesignLayout::Shared) {
    for (int l = 1; l <= p; ++l) cols.push_back("x" + std::to_string(l));
  } else {
    for (int j = 1; j <= r; ++j) {
      for (int l = 1; l <= p; ++l) {
        cols.push_back("x" + std::to_string(j) + "_" + std::to_string(l));
      }
    }
  }
  return cols;
}

int deduce_p(const ModelConfig& cfg, int predictor_cols, const char* what) {
  const int r = cfg.model.r();
  if (cfg.layout == DesignLayout::Shared) {
    if (predictor_cols < 1) {
      throw SpecError(std::string(what) + ": no predictor columns");
    }
    return predictor_cols;
  }
  if (predictor_cols < r || predictor_cols % r != 0) {
    throw SpecError(std::string(what) + ": per-response layout needs a " +
                    "multiple of r = " + std::to_string(r) +
                    " predictor columns");
  }
  return predictor_cols / r;
}

void check_header(const std::vector<std::string>& got,
                  const std::vector<std::string>& want, const char* what) {
  for (std::size_t c = 0; c < want.size(); ++c) {
    if (got[c] != want[c]) {
      throw SpecError(std::string(what) + ": header column " +
                      std::to_string(c + 1) + " is \"" + got[c] +
                      "\", expected \"" + want[c] + "\"");
    }
  }
}

Eigen::MatrixXd design_from_row(const ModelConfig& cfg, int p,
                                const std::vector<double>& row, int offset) {
  const int r = cfg.model.r();
  const int q = r * p;
  Eigen::MatrixXd Xi = Eigen::MatrixXd::Zero(r, q);
  if (cfg.layout == DesignLayout::Shared) {
    for (int j = 0; j < r; ++j) {
      for (int l = 0; l < p; ++l) {
        Xi(j, j * p + l) = row[static_cast<std::size_t>(offset + l)];
      }
    }
  } else {
    for (int j = 0; j < r; ++j) {
      for (int l = 0; l < p; ++l) {
        Xi(j, j * p + l) = row[static_cast<std::size_t>(offset + j * p + l)];
      }
    }
  }
  return Xi;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.size()));
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) flat.push_back(m(i, j));
  }
  return json(flat);
}

json summary_to_json(const FitSummary& s) {
  json out;
  out["beta"] = std::vector<double>(s.beta.data(), s.beta.data() + s.beta.size());
  out["sigma"] = matrix_to_json(s.sigma);
  out["h"] = s.h;
  out["converged"] = s.converged;
  out["iterations"] = s.iterations;
  return out;
}

}  // namespace

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SpecError("cannot open \"" + path + "\" for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SpecError("cannot open \"" + path + "\" for writing");
  out << text;
  if (!out) throw SpecError("write to \"" + path + "\" failed");
}

ModelConfig parse_model_json(const std::string& text) {
  const json doc = parse_json(text, "model JSON");
  require_object(doc, "model JSON");
  check_keys(doc, {"version", "layout", "families"}, "model JSON");
  check_version(doc, "model JSON", true);
  if (!doc.contains("layout") || !doc["layout"].is_string()) {
    throw SpecError("model JSON: missing layout string");
  }
  ModelConfig cfg;
  const std::string layout = doc["layout"].get<std::string>();
  if (layout == "shared") {
    cfg.layout = DesignLayout::Shared;
  } else if (layout == "per_response") {
    cfg.layout = DesignLayout::PerResponse;
  } else {
    throw SpecError("model JSON: layout must be \"shared\" or \"per_response\"");
  }
  if (!doc.contains("families") || !doc["families"].is_array() ||
      doc["families"].empty()) {
    throw SpecError("model JSON: families must be a nonempty array");
  }
  for (const auto& fam : doc["families"]) {
    require_object(fam, "model JSON family");
    check_keys(fam, {"kind", "psi"}, "model JSON family");
    if (!fam.contains("kind") || !fam["kind"].is_string()) {
      throw SpecError("model JSON family: missing kind");
    }
    Family f;
    f.kind = family_from_name(fam["kind"].get<std::string>());
    f.psi = fam.contains("psi") ? number_at(fam["psi"], "model JSON psi") : 1.0;
    cfg.model.families.push_back(f);
  }
  validate_model(cfg.model);
  return cfg;
}

std::string model_json(const ModelConfig& cfg) {
  json doc;
  doc["version"] = 1;
  doc["layout"] =
      cfg.layout == DesignLayout::Shared ? "shared" : "per_response";
  json fams = json::array();
  for (const Family& f : cfg.model.families) {
    json fam;
    fam["kind"] = family_name(f.kind);
    fam["psi"] = f.psi;
    fams.push_back(fam);
  }
  doc["families"] = fams;
  return doc.dump(2) + "\n";
}

ConstraintSpec parse_constraints_json(const std::string& text, int r) {
  const json doc = parse_json(text, "constraints JSON");
  require_object(doc, "constraints JSON");
  return parse_constraint_fields(doc, r, "constraints JSON", nullptr);
}

std::string constraints_json(const ConstraintSpec& cspec) {
  json doc;
  doc["version"] = 1;
  json fixed = json::array();
  for (const auto& f : cspec.fixed) {
    fixed.push_back(json::array({f.j + 1, f.k + 1, f.value}));
  }
  doc["fixed"] = fixed;
  json zeros = json::array();
  for (const auto& z : cspec.zeros) {
    zeros.push_back(json::array({z.first + 1, z.second + 1}));
  }
  doc["zeros"] = zeros;
  json ties = json::array();
  for (const auto& g : cspec.ties) {
    json group = json::array();
    for (const auto& e : g) {
      group.push_back(json::array({e.first + 1, e.second + 1}));
    }
    ties.push_back(group);
  }
  doc["ties"] = ties;
  doc["eigen_floor"] = cspec.eigen_floor;
  return doc.dump(2) + "\n";
}

Hypothesis parse_hypothesis_json(const std::string& text, int r) {
  const json doc = parse_json(text, "hypothesis JSON");
  require_object(doc, "hypothesis JSON");
  check_keys(doc, {"version", "null", "alt"}, "hypothesis JSON");
  check_version(doc, "hypothesis JSON", true);
  if (!doc.contains("null") || !doc.contains("alt")) {
    throw SpecError("hypothesis JSON: needs null and alt blocks");
  }
  require_object(doc["null"], "hypothesis null block");
  require_object(doc["alt"], "hypothesis alt block");
  Hypothesis hyp;
  hyp.null_cspec = parse_constraint_fields(doc["null"], r,
                                           "hypothesis null block",
                                           &hyp.beta_restrictions);
  hyp.alt_cspec =
      parse_constraint_fields(doc["alt"], r, "hypothesis alt block", nullptr);
  validate_hypothesis(hyp);
  return hyp;
}

Dataset parse_data_csv(const std::string& text, const ModelConfig& cfg) {
  const CsvTable table = parse_csv(text);
  const int r = cfg.model.r();
  const int total = static_cast<int>(table.header.size());
  if (total <= r) {
    throw SpecError("data CSV: need response columns y1..y" + std::to_string(r) +
                    " plus predictor columns");
  }
  const int p = deduce_p(cfg, total - r, "data CSV");
  check_header(table.header, expected_columns(cfg, p, true), "data CSV");
  if (table.rows.empty()) throw SpecError("data CSV has no rows");

  const int n = static_cast<int>(table.rows.size());
  Dataset data;
  data.y.resize(n, r);
  data.X.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    for (int j = 0; j < r; ++j) data.y(i, j) = row[static_cast<std::size_t>(j)];
    data.X.push_back(design_from_row(cfg, p, row, r));
  }
  return data;
}

std::string data_csv(const Dataset& data, const ModelConfig& cfg) {
  const int r = data.r();
  const int q = data.q();
  if (q % r != 0) {
    throw SpecError("data CSV: coefficient dimension is not r * p");
  }
  const int p = q / r;
  std::string out;
  const auto cols = expected_columns(cfg, p, true);
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (c) out += ',';
    out += cols[c];
  }
  out += '\n';
  for (int i = 0; i < data.n(); ++i) {
    for (int j = 0; j < r; ++j) {
      if (j) out += ',';
      out += format_double(data.y(i, j));
    }
    if (cfg.layout == DesignLayout::Shared) {
      for (int l = 0; l < p; ++l) {
        out += ',';
        out += format_double(data.X[i](0, l));
      }
    } else {
      for (int j = 0; j < r; ++j) {
        for (int l = 0; l < p; ++l) {
          out += ',';
          out += format_double(data.X[i](j, j * p + l));
        }
      }
    }
    out += '\n';
  }
  return out;
}

std::vector<Eigen::MatrixXd> parse_newdata_csv(const std::string& text,
                                               const ModelConfig& cfg) {
  const CsvTable table = parse_csv(text);
  const int p = deduce_p(cfg, static_cast<int>(table.header.size()),
                         "prediction CSV");
  check_header(table.header, expected_columns(cfg, p, false), "prediction CSV");
  if (table.rows.empty()) throw SpecError("prediction CSV has no rows");
  std::vector<Eigen::MatrixXd> X;
  X.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    X.push_back(design_from_row(cfg, p, row, 0));
  }
  return X;
}

std::string fit_result_json(const FitResult& res) {
  json doc;
  doc["version"] = 1;
  doc["r"] = res.sigma.rows();
  doc["q"] = res.beta.size();
  doc["beta"] =
      std::vector<double>(res.beta.data(), res.beta.data() + res.beta.size());
  doc["sigma"] = matrix_to_json(res.sigma);
  doc["h_final"] = res.h_final;
  doc["iterations"] = res.outer_iters;
  doc["converged"] = res.converged;
  doc["warnings"] = res.warnings;
  return doc.dump(2) + "\n";
}

FittedParams parse_fit_result_json(const std::string& text) {
  const json doc = parse_json(text, "fit result JSON");
  require_object(doc, "fit result JSON");
  check_keys(doc,
             {"version", "r", "q", "beta", "sigma", "h_final", "iterations",
              "converged", "warnings"},
             "fit result JSON");
  check_version(doc, "fit result JSON", true);
  if (!doc.contains("r") || !doc["r"].is_number_integer() ||
      !doc.contains("beta") || !doc["beta"].is_array() ||
      !doc.contains("sigma") || !doc["sigma"].is_array()) {
    throw SpecError("fit result JSON: needs r, beta and sigma");
  }
  const int r = doc["r"].get<int>();
  if (r < 1) throw SpecError("fit result JSON: r must be positive");
  FittedParams out;
  out.beta.resize(static_cast<int>(doc["beta"].size()));
  for (int i = 0; i < out.beta.size(); ++i) {
    out.beta(i) = number_at(doc["beta"][static_cast<std::size_t>(i)],
                            "fit result beta");
  }
  if (static_cast<int>(doc["sigma"].size()) != r * r) {
    throw SpecError("fit result JSON: sigma must hold r*r row-major entries");
  }
  out.sigma.resize(r, r);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < r; ++j) {
      out.sigma(i, j) = number_at(
          doc["sigma"][static_cast<std::size_t>(i * r + j)], "fit result sigma");
    }
  }
  return out;
}

std::string test_result_json(const TestResult& res) {
  json doc;
  doc["version"] = 1;
  doc["T"] = res.T;
  doc["df"] = res.df;
  doc["p_value"] = res.p_value;
  doc["null"] = summary_to_json(res.null_fit);
  doc["alt"] = summary_to_json(res.alt_fit);
  doc["warnings"] = res.warnings;
  return doc.dump(2) + "\n";
}

std::string ci_json(const ProfileCi& ci, int j, int k) {
  json doc;
  doc["version"] = 1;
  doc["element"] = json::array({j + 1, k + 1});
  doc["level"] = ci.level;
  doc["estimate"] = ci.estimate;
  doc["lo"] = ci.lo_unbounded ? json(nullptr) : json(ci.lo);
  doc["hi"] = ci.hi_unbounded ? json(nullptr) : json(ci.hi);
  doc["lo_unbounded"] = ci.lo_unbounded;
  doc["hi_unbounded"] = ci.hi_unbounded;
  return doc.dump(2) + "\n";
}

std::string predictions_csv(const Eigen::MatrixXd& pred) {
  std::string out;
  for (int j = 1; j <= pred.cols(); ++j) {
    if (j > 1) out += ',';
    out += "yhat" + std::to_string(j);
  }
  out += '\n';
  for (int i = 0; i < pred.rows(); ++i) {
    for (int j = 0; j < pred.cols(); ++j) {
      if (j) out += ',';
      out += format_double(pred(i, j));
    }
    out += '\n';
  }
  return out;
}

}  // namespace mixedreg
