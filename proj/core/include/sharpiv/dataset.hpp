#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace sharpiv {

/* Column-oriented sample: outcome y, treatment decision d in {0,1}, one or
 * more instrument columns z (a single judge-id column in the discrete case,
 * a real vector when the propensity is parametric), optional covariates x. */
struct Dataset {
  std::vector<double> y;
  std::vector<std::int8_t> d;
  std::vector<std::string> z_names;
  std::vector<std::vector<double>> z;
  std::vector<std::string> x_names;
  std::vector<std::vector<double>> x;

  std::size_t n() const { return y.size(); }
  std::size_t kz() const { return z.size(); }
  std::size_t kx() const { return x.size(); }
};

struct CsvSchema {
  std::string y_col = "y";
  std::string d_col = "d";
  std::vector<std::string> z_cols = {"z"};
  std::vector<std::string> x_cols;
  bool drop_missing = false;
};

/* Reads a UTF-8 CSV with a header row.  Fields may be double-quoted; "" is
 * an escaped quote.  Empty fields and the literals NA/NaN (any case) are
 * missing values: an error naming the row unless schema.drop_missing.  All
 * mapped columns must parse as finite decimal numbers; d must be exactly
 * 0 or 1. */
Dataset ingest_csv(const std::string& path, const CsvSchema& schema);
Dataset ingest_csv_text(const std::string& text, const CsvSchema& schema,
                        const std::string& origin = "<memory>");

/* Shape/domain re-validation (used by every pipeline entry point). */
void validate(const Dataset& ds);

/* Writes y,d,z...,x... with shortest round-trip decimal formatting so a
 * re-ingest reproduces every double bit for bit. */
void write_csv(const Dataset& ds, std::ostream& out);
void write_csv(const Dataset& ds, const std::string& path);

/* Shortest decimal string that parses back to exactly x. */
std::string format_double(double x);

bool is_binary01(const std::vector<double>& y);

enum class NormalizeMode { Auto, None, KnownBounds, SampleRange, Gaussianize };

const char* normalize_mode_name(NormalizeMode mode);

/* Outcome mapped into [0,1] plus the transform actually applied.  All
 * transforms are strictly increasing, so interval statements about the
 * original outcome translate one-to-one. */
struct NormalizedOutcome {
  std::vector<double> y;
  NormalizeMode mode = NormalizeMode::None;  // resolved, never Auto
  double a = 0.0, b = 1.0;                   // affine bounds when applicable
  double mean = 0.0, sd = 1.0;               // gaussianize parameters
};

/* Auto resolves to: None for {0,1}-valued outcomes, None when all values
 * already lie in [0,1], Gaussianize otherwise (standardize, then standard
 * normal CDF). */
NormalizedOutcome normalize_outcome(const std::vector<double>& y,
                                    NormalizeMode mode, double a = 0.0,
                                    double b = 1.0);

/* Re-applies a frozen transform to fresh values (no re-estimation, no range
 * checks; values outside the frozen range map outside [0,1], where no cube
 * contains them). */
double apply_normalization(double v, const NormalizedOutcome& params);

}  // namespace sharpiv
