#include "sharpiv/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "sharpiv/errors.hpp"
#include "sharpiv/rng.hpp"

namespace sharpiv {

namespace {

std::vector<std::string> split_csv_line(const std::string& line,
                                        std::size_t line_no,
                                        const std::string& origin) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted)
    fail(ErrorKind::Schema, origin + ":" + std::to_string(line_no) +
                                ": unterminated quoted field");
  fields.push_back(cur);
  return fields;
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r'))
    --e;
  return s.substr(b, e - b);
}

bool is_missing_token(const std::string& s) {
  if (s.empty()) return true;
  std::string low;
  low.reserve(s.size());
  for (char c : s) low.push_back(static_cast<char>(std::tolower(c)));
  return low == "na" || low == "nan" || low == "null";
}

double parse_field(const std::string& raw, const std::string& col,
                   std::size_t line_no, const std::string& origin) {
  const std::string s = trim(raw);
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e)
    fail(ErrorKind::Schema, origin + ":" + std::to_string(line_no) +
                                ": column '" + col +
                                "' is not a decimal number: '" + s + "'");
  if (!std::isfinite(v))
    fail(ErrorKind::Validation, origin + ":" + std::to_string(line_no) +
                                    ": column '" + col +
                                    "' must be finite, got '" + s + "'");
  return v;
}

std::size_t find_column(const std::vector<std::string>& header,
                        const std::string& name, const std::string& origin) {
  for (std::size_t j = 0; j < header.size(); ++j)
    if (trim(header[j]) == name) return j;
  fail(ErrorKind::Schema, origin + ": required column '" + name +
                              "' not found in header");
}

}  // namespace

Dataset ingest_csv_text(const std::string& text, const CsvSchema& schema,
                        const std::string& origin) {
  std::vector<std::string> lines;
  {
    std::string cur;
    for (char c : text) {
      if (c == '\n') {
        lines.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    if (!cur.empty()) lines.push_back(cur);
  }
  if (lines.empty()) fail(ErrorKind::Schema, origin + ": empty file");

  const auto header = split_csv_line(lines[0], 1, origin);
  const std::size_t jy = find_column(header, schema.y_col, origin);
  const std::size_t jd = find_column(header, schema.d_col, origin);
  if (schema.z_cols.empty())
    fail(ErrorKind::Config, "at least one instrument column is required");
  std::vector<std::size_t> jz, jx;
  for (const auto& c : schema.z_cols) jz.push_back(find_column(header, c, origin));
  for (const auto& c : schema.x_cols) jx.push_back(find_column(header, c, origin));

  Dataset ds;
  ds.z_names = schema.z_cols;
  ds.x_names = schema.x_cols;
  ds.z.resize(jz.size());
  ds.x.resize(jx.size());

  std::vector<std::size_t> cols;
  cols.push_back(jy);
  cols.push_back(jd);
  cols.insert(cols.end(), jz.begin(), jz.end());
  cols.insert(cols.end(), jx.begin(), jx.end());

  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (trim(lines[li]).empty()) continue;
    const std::size_t line_no = li + 1;
    const auto fields = split_csv_line(lines[li], line_no, origin);
    if (fields.size() < header.size())
      fail(ErrorKind::Schema, origin + ":" + std::to_string(line_no) +
                                  ": expected " + std::to_string(header.size()) +
                                  " fields, got " + std::to_string(fields.size()));
    bool missing = false;
    for (std::size_t c : cols)
      if (is_missing_token(trim(fields[c]))) missing = true;
    if (missing) {
      if (schema.drop_missing) continue;
      fail(ErrorKind::Validation, origin + ":" + std::to_string(line_no) +
                                      ": missing value (pass drop-missing to "
                                      "skip such rows)");
    }
    const double yv = parse_field(fields[jy], schema.y_col, line_no, origin);
    const double dv = parse_field(fields[jd], schema.d_col, line_no, origin);
    if (dv != 0.0 && dv != 1.0)
      fail(ErrorKind::Validation, origin + ":" + std::to_string(line_no) +
                                      ": column '" + schema.d_col +
                                      "' must be 0 or 1");
    ds.y.push_back(yv);
    ds.d.push_back(static_cast<std::int8_t>(dv));
    for (std::size_t k = 0; k < jz.size(); ++k)
      ds.z[k].push_back(
          parse_field(fields[jz[k]], schema.z_cols[k], line_no, origin));
    for (std::size_t k = 0; k < jx.size(); ++k)
      ds.x[k].push_back(
          parse_field(fields[jx[k]], schema.x_cols[k], line_no, origin));
  }
  if (ds.n() == 0)
    fail(ErrorKind::Validation, origin + ": no usable data rows");
  validate(ds);
  return ds;
}

Dataset ingest_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Schema, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return ingest_csv_text(buf.str(), schema, path);
}

void validate(const Dataset& ds) {
  const std::size_t n = ds.n();
  if (n == 0) fail(ErrorKind::Validation, "dataset is empty");
  if (ds.d.size() != n) fail(ErrorKind::Internal, "d length mismatch");
  if (ds.z.empty()) fail(ErrorKind::Validation, "no instrument column");
  for (const auto& col : ds.z)
    if (col.size() != n) fail(ErrorKind::Internal, "z length mismatch");
  for (const auto& col : ds.x)
    if (col.size() != n) fail(ErrorKind::Internal, "x length mismatch");
  if (ds.z_names.size() != ds.z.size() || ds.x_names.size() != ds.x.size())
    fail(ErrorKind::Internal, "column name/content mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(ds.y[i]))
      fail(ErrorKind::Validation,
           "y is not finite at row " + std::to_string(i));
    if (ds.d[i] != 0 && ds.d[i] != 1)
      fail(ErrorKind::Validation,
           "d must be 0 or 1 at row " + std::to_string(i));
  }
  for (const auto& col : ds.z)
    for (std::size_t i = 0; i < n; ++i)
      if (!std::isfinite(col[i]))
        fail(ErrorKind::Validation,
             "z is not finite at row " + std::to_string(i));
  for (const auto& col : ds.x)
    for (std::size_t i = 0; i < n; ++i)
      if (!std::isfinite(col[i]))
        fail(ErrorKind::Validation,
             "x is not finite at row " + std::to_string(i));
}

std::string format_double(double x) {
  char buf[40];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  (void)ec;
  return std::string(buf, p);
}

void write_csv(const Dataset& ds, std::ostream& out) {
  out << "y,d";
  for (const auto& nm : ds.z_names) out << ',' << nm;
  for (const auto& nm : ds.x_names) out << ',' << nm;
  out << '\n';
  for (std::size_t i = 0; i < ds.n(); ++i) {
    out << format_double(ds.y[i]) << ',' << int(ds.d[i]);
    for (const auto& col : ds.z) out << ',' << format_double(col[i]);
    for (const auto& col : ds.x) out << ',' << format_double(col[i]);
    out << '\n';
  }
}

void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Schema, "cannot open '" + path + "' for writing");
  write_csv(ds, out);
}

bool is_binary01(const std::vector<double>& y) {
  for (double v : y)
    if (v != 0.0 && v != 1.0) return false;
  return !y.empty();
}

const char* normalize_mode_name(NormalizeMode mode) {
  switch (mode) {
    case NormalizeMode::Auto: return "auto";
    case NormalizeMode::None: return "none";
    case NormalizeMode::KnownBounds: return "bounds";
    case NormalizeMode::SampleRange: return "range";
    case NormalizeMode::Gaussianize: return "gauss";
  }
  return "none";
}

NormalizedOutcome normalize_outcome(const std::vector<double>& y,
                                    NormalizeMode mode, double a, double b) {
  if (y.empty()) fail(ErrorKind::Validation, "empty outcome vector");
  NormalizedOutcome out;
  if (mode == NormalizeMode::Auto) {
    if (is_binary01(y)) {
      mode = NormalizeMode::None;
    } else {
      const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
      mode = (*lo >= 0.0 && *hi <= 1.0) ? NormalizeMode::None
                                        : NormalizeMode::Gaussianize;
    }
  }
  out.mode = mode;
  switch (mode) {
    case NormalizeMode::None: {
      for (double v : y)
        if (v < 0.0 || v > 1.0)
          fail(ErrorKind::Validation,
               "outcome outside [0,1]; pick a normalization mode");
      out.y = y;
      break;
    }
    case NormalizeMode::KnownBounds: {
      if (!(b > a))
        fail(ErrorKind::Config, "bounds normalization needs b > a");
      out.a = a;
      out.b = b;
      out.y.reserve(y.size());
      for (double v : y) {
        if (v < a || v > b)
          fail(ErrorKind::Validation,
               "outcome " + format_double(v) + " outside stated bounds [" +
                   format_double(a) + "," + format_double(b) + "]");
        out.y.push_back((v - a) / (b - a));
      }
      break;
    }
    case NormalizeMode::SampleRange: {
      const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
      if (*hi == *lo)
        fail(ErrorKind::Validation,
             "constant outcome cannot be range-normalized");
      out.a = *lo;
      out.b = *hi;
      out.y.reserve(y.size());
      for (double v : y) out.y.push_back((v - *lo) / (*hi - *lo));
      break;
    }
    case NormalizeMode::Gaussianize: {
      if (y.size() < 2)
        fail(ErrorKind::Validation, "gaussianize needs at least two rows");
      double mean = 0.0;
      for (double v : y) mean += v;
      mean /= static_cast<double>(y.size());
      double ss = 0.0;
      for (double v : y) ss += (v - mean) * (v - mean);
      const double sd = std::sqrt(ss / static_cast<double>(y.size() - 1));
      if (sd == 0.0)
        fail(ErrorKind::Validation,
             "constant outcome cannot be gaussianized");
      out.mean = mean;
      out.sd = sd;
      out.y.reserve(y.size());
      for (double v : y) out.y.push_back(rng::normal_cdf((v - mean) / sd));
      break;
    }
    case NormalizeMode::Auto:
      fail(ErrorKind::Internal, "unresolved normalization mode");
  }
  return out;
}

double apply_normalization(double v, const NormalizedOutcome& params) {
  switch (params.mode) {
    case NormalizeMode::None:
      return v;
    case NormalizeMode::KnownBounds:
    case NormalizeMode::SampleRange:
      return (v - params.a) / (params.b - params.a);
    case NormalizeMode::Gaussianize:
      return rng::normal_cdf((v - params.mean) / params.sd);
    case NormalizeMode::Auto:
      break;
  }
  fail(ErrorKind::Internal, "unresolved normalization mode");
}

}  // namespace sharpiv
