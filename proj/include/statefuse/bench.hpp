#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace statefuse {

enum class Mechanism { kSsm, kCrossAttention, kBoth };

const char* to_string(Mechanism m);
Mechanism mechanism_from_string(const std::string& s);

struct BenchConfig {
  std::vector<std::int64_t> n_values{64, 128, 256, 512, 1024, 2048};
  std::int64_t k = 2;
  std::int64_t d = 8;
  std::int64_t m = 16;
  int repetitions = 5;
  int warmup = 1;
  Mechanism mechanism = Mechanism::kBoth;
  std::uint64_t seed = 0;

  void validate() const;
};

struct BenchRow {
  std::string mechanism;
  std::int64_t n = 0;
  std::int64_t k = 0;
  std::int64_t d = 0;
  std::int64_t m = 0;
  double wall_nanos = 0.0;  // median over repetitions
  std::uint64_t peak_bytes = 0;
  std::string peak_bytes_source = "analytic";
  std::uint64_t op_count = 0;
  std::string warning;  // empty, or "measurement-unreliable"
};

/// Reference temporal fusion by self cross-attention over the N frame rows.
struct CrossAttentionParams {
  Eigen::MatrixXd w_q, w_k, w_v, w_o;  // E x E

  static CrossAttentionParams seeded(Eigen::Index width, std::uint64_t seed);
};

Eigen::MatrixXd cross_attention_fusion(const Eigen::MatrixXd& x, const CrossAttentionParams& p);

/// Exact byte model of the buffers each fusion path holds at its peak.
/// Affine in N for the SSM path; quadratic for cross-attention.
std::uint64_t analytic_peak_bytes(Mechanism mech, std::int64_t n, std::int64_t k, std::int64_t d,
                                  std::int64_t m);

/// Rows sorted by (mechanism, N).
std::vector<BenchRow> bench_scaling(const BenchConfig& cfg);

/// Least-squares slope of ln y on ln x.
double fit_loglog_slope(const std::vector<std::pair<double, double>>& points);

inline constexpr const char* kBenchCsvHeader =
    "mechanism,n,k,d,m,wall_nanos,peak_bytes,peak_bytes_source,op_count,warning";

std::string bench_csv(const std::vector<BenchRow>& rows);
std::vector<BenchRow> parse_bench_csv(const std::string& csv);
/// Log-log plot of wall time against N, one polyline per mechanism.
std::string bench_svg(const std::vector<BenchRow>& rows);

BenchConfig parse_bench_config(const std::string& json_text, std::uint64_t default_seed = 0);

}  // namespace statefuse
