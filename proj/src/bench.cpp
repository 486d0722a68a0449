#include "statefuse/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include <json.hpp>

#include "statefuse/error.hpp"
#include "statefuse/pipeline.hpp"
#include "statefuse/query_mamba.hpp"
#include "statefuse/random.hpp"

namespace statefuse {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_fixed(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Keeps the optimizer from discarding the measured computation.
volatile double g_sink = 0.0;

}  // namespace

const char* to_string(Mechanism m) {
  switch (m) {
    case Mechanism::kSsm: return "ssm";
    case Mechanism::kCrossAttention: return "cross_attention";
    case Mechanism::kBoth: return "both";
  }
  return "?";
}

Mechanism mechanism_from_string(const std::string& s) {
  if (s == "ssm") return Mechanism::kSsm;
  if (s == "cross_attention") return Mechanism::kCrossAttention;
  if (s == "both") return Mechanism::kBoth;
  throw Error(ErrorKind::kInvalidConfig, "unknown mechanism: " + s);
}

void BenchConfig::validate() const {
  require(!n_values.empty(), ErrorKind::kInvalidConfig, "N list must be non-empty");
  require(n_values.front() >= 1, ErrorKind::kInvalidConfig, "N values must be >= 1");
  for (std::size_t i = 1; i < n_values.size(); ++i)
    require(n_values[i] > n_values[i - 1], ErrorKind::kInvalidConfig,
            "N list must be strictly increasing");
  require(k >= 1 && d >= 1 && m >= 1, ErrorKind::kInvalidConfig, "K, D, M must be >= 1");
  require(repetitions >= 3, ErrorKind::kInvalidConfig, "repetitions must be >= 3");
  require(warmup >= 0, ErrorKind::kInvalidConfig, "warmup must be >= 0");
}

CrossAttentionParams CrossAttentionParams::seeded(Eigen::Index width, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0xc2055ULL));
  return {rng.uniform_matrix(width, width, -0.1, 0.1), rng.uniform_matrix(width, width, -0.1, 0.1),
          rng.uniform_matrix(width, width, -0.1, 0.1), rng.uniform_matrix(width, width, -0.1, 0.1)};
}

Eigen::MatrixXd cross_attention_fusion(const Eigen::MatrixXd& x, const CrossAttentionParams& p) {
  const Eigen::Index e = x.cols();
  require(p.w_q.rows() == e && p.w_q.cols() == e, ErrorKind::kInvalidParameter,
          "cross-attention projections must be E x E");
  const Eigen::MatrixXd q = x * p.w_q;
  const Eigen::MatrixXd k = x * p.w_k;
  const Eigen::MatrixXd v = x * p.w_v;
  Eigen::MatrixXd scores = (q * k.transpose()) / std::sqrt(static_cast<double>(e));
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    const double mx = scores.row(r).maxCoeff();
    scores.row(r) = (scores.row(r).array() - mx).exp();
    scores.row(r) /= scores.row(r).sum();
  }
  return (scores * v) * p.w_o;
}

std::uint64_t analytic_peak_bytes(Mechanism mech, std::int64_t n, std::int64_t k, std::int64_t d,
                                  std::int64_t m) {
  require(n >= 1 && k >= 1 && d >= 1 && m >= 1, ErrorKind::kInvalidParameter,
          "byte model inputs must be >= 1");
  const std::uint64_t un = static_cast<std::uint64_t>(n);
  const std::uint64_t e = static_cast<std::uint64_t>(k * d);
  const std::uint64_t um = static_cast<std::uint64_t>(m);
  constexpr std::uint64_t kDouble = sizeof(double);
  switch (mech) {
    case Mechanism::kSsm:
      // Twelve N x E activations of one Query Mamba block; weights: four
      // E x E projections, E x 3 taps, five E vectors, three E x M SSM tables
      // plus the E feed-through terms, and one M-wide scan state.
      return kDouble * (12 * un * e + 4 * e * e + 3 * e + 5 * e + 3 * e * um + e + um);
    case Mechanism::kCrossAttention:
      // Input, Q, K, V, context and output (six N x E), the N x N score
      // matrix, and four E x E projections.
      return kDouble * (6 * un * e + un * un + 4 * e * e);
    case Mechanism::kBoth: break;
  }
  throw Error(ErrorKind::kInvalidParameter, "byte model needs a single mechanism");
}

std::vector<BenchRow> bench_scaling(const BenchConfig& cfg) {
  cfg.validate();
  const Eigen::Index e = static_cast<Eigen::Index>(cfg.k * cfg.d);
  std::vector<Mechanism> mechs;
  if (cfg.mechanism != Mechanism::kCrossAttention) mechs.push_back(Mechanism::kSsm);
  if (cfg.mechanism != Mechanism::kSsm) mechs.push_back(Mechanism::kCrossAttention);

  const auto layer = QueryMambaLayerParams::random(e, cfg.m, kDefaultDwKernelSize, mix_seed(cfg.seed, 1));
  const auto xattn = CrossAttentionParams::seeded(e, mix_seed(cfg.seed, 2));

  std::vector<BenchRow> rows;
  using Clock = std::chrono::steady_clock;
  const double tick_ns =
      1e9 * static_cast<double>(Clock::period::num) / static_cast<double>(Clock::period::den);

  for (Mechanism mech : mechs) {
    for (std::int64_t n : cfg.n_values) {
      Rng rng(mix_seed(cfg.seed, 3, static_cast<std::uint64_t>(n)));
      FusedQuerySequence x;
      x.data = rng.uniform_matrix(n, e, -1.0, 1.0);
      x.k_queries = cfg.k;
      x.embed_dim = cfg.d;
      for (std::int64_t i = 0; i < n; ++i) x.frame_order.push_back(static_cast<int>(i));

      auto run_once = [&] {
        if (mech == Mechanism::kSsm)
          g_sink = g_sink + query_mamba_block(x, layer).data(n - 1, 0);
        else
          g_sink = g_sink + cross_attention_fusion(x.data, xattn)(n - 1, 0);
      };
      for (int w = 0; w < cfg.warmup; ++w) run_once();
      std::vector<double> samples;
      for (int r = 0; r < cfg.repetitions; ++r) {
        const auto t0 = Clock::now();
        run_once();
        const auto t1 = Clock::now();
        samples.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
      }

      BenchRow row;
      row.mechanism = to_string(mech);
      row.n = n;
      row.k = cfg.k;
      row.d = cfg.d;
      row.m = cfg.m;
      row.wall_nanos = std::max(median(samples), tick_ns);
      row.peak_bytes = analytic_peak_bytes(mech, n, cfg.k, cfg.d, cfg.m);
      row.op_count = mech == Mechanism::kSsm ? op_count_ssm(n, cfg.k, cfg.d, cfg.m)
                                             : op_count_cross_attention(n, cfg.k, cfg.d);
      if (row.wall_nanos < 100.0 * tick_ns) row.warning = "measurement-unreliable";
      rows.push_back(row);
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const BenchRow& a, const BenchRow& b) {
    return a.mechanism != b.mechanism ? a.mechanism < b.mechanism : a.n < b.n;
  });
  return rows;
}

double fit_loglog_slope(const std::vector<std::pair<double, double>>& points) {
  require(points.size() >= 3, ErrorKind::kInvalidInput, "slope fit needs at least 3 points");
  double sx = 0.0, sy = 0.0;
  for (const auto& [x, y] : points) {
    require(x > 0.0 && y > 0.0 && std::isfinite(x) && std::isfinite(y), ErrorKind::kInvalidInput,
            "slope fit needs positive finite values");
    sx += std::log(x);
    sy += std::log(y);
  }
  const double n = static_cast<double>(points.size());
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [x, y] : points) {
    const double dx = std::log(x) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(y) - my);
  }
  require(sxx > 0.0, ErrorKind::kInvalidInput, "slope fit needs distinct x values");
  return sxy / sxx;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::string out = std::string(kBenchCsvHeader) + "\n";
  for (const auto& r : rows)
    out += r.mechanism + "," + std::to_string(r.n) + "," + std::to_string(r.k) + "," +
           std::to_string(r.d) + "," + std::to_string(r.m) + "," + fmt17(r.wall_nanos) + "," +
           std::to_string(r.peak_bytes) + "," + r.peak_bytes_source + "," +
           std::to_string(r.op_count) + "," + r.warning + "\n";
  return out;
}

std::vector<BenchRow> parse_bench_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  require(std::getline(in, line) && line == kBenchCsvHeader, ErrorKind::kInvalidInput,
          "unexpected bench CSV header");
  std::vector<BenchRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    require(f.size() == 10, ErrorKind::kInvalidInput, "bench CSV row must have 10 fields");
    BenchRow r;
    r.mechanism = f[0];
    r.n = std::stoll(f[1]);
    r.k = std::stoll(f[2]);
    r.d = std::stoll(f[3]);
    r.m = std::stoll(f[4]);
    r.wall_nanos = std::stod(f[5]);
    r.peak_bytes = std::stoull(f[6]);
    r.peak_bytes_source = f[7];
    r.op_count = std::stoull(f[8]);
    r.warning = f[9];
    rows.push_back(r);
  }
  return rows;
}

std::string bench_svg(const std::vector<BenchRow>& rows) {
  constexpr double kW = 640, kH = 420, kLeft = 70, kRight = 150, kTop = 30, kBottom = 50;
  std::map<std::string, std::vector<std::pair<double, double>>> series;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& r : rows) {
    const double lx = std::log10(static_cast<double>(r.n));
    const double ly = std::log10(std::max(r.wall_nanos, 1.0));
    series[r.mechanism].emplace_back(lx, ly);
    xmin = std::min(xmin, lx);
    xmax = std::max(xmax, lx);
    ymin = std::min(ymin, ly);
    ymax = std::max(ymax, ly);
  }
  if (rows.empty()) xmin = ymin = 0.0, xmax = ymax = 1.0;
  if (xmax - xmin < 1e-9) xmax = xmin + 1.0;
  if (ymax - ymin < 1e-9) ymax = ymin + 1.0;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto px = [&](double lx) { return kLeft + (lx - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double ly) { return kTop + ph - (ly - ymin) / (ymax - ymin) * ph; };

  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + fmt_fixed(kW) +
       "\" height=\"" + fmt_fixed(kH) + "\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + fmt_fixed(kW) + "\" height=\"" + fmt_fixed(kH) +
       "\" fill=\"white\"/>\n";
  s += "<line x1=\"" + fmt_fixed(kLeft) + "\" y1=\"" + fmt_fixed(kTop + ph) + "\" x2=\"" +
       fmt_fixed(kLeft + pw) + "\" y2=\"" + fmt_fixed(kTop + ph) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + fmt_fixed(kLeft) + "\" y1=\"" + fmt_fixed(kTop) + "\" x2=\"" +
       fmt_fixed(kLeft) + "\" y2=\"" + fmt_fixed(kTop + ph) + "\" stroke=\"black\"/>\n";
  s += "<text x=\"" + fmt_fixed(kLeft + pw / 2) + "\" y=\"" + fmt_fixed(kH - 12) +
       "\" text-anchor=\"middle\" font-size=\"12\">log10 N (frames)</text>\n";
  s += "<text x=\"16\" y=\"" + fmt_fixed(kTop + ph / 2) + "\" font-size=\"12\" transform=\"rotate(-90 16 " +
       fmt_fixed(kTop + ph / 2) + ")\" text-anchor=\"middle\">log10 wall time (ns)</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double lx = xmin + (xmax - xmin) * i / 4.0;
    const double ly = ymin + (ymax - ymin) * i / 4.0;
    s += "<text x=\"" + fmt_fixed(px(lx)) + "\" y=\"" + fmt_fixed(kTop + ph + 16) +
         "\" text-anchor=\"middle\" font-size=\"10\">" + fmt_fixed(lx) + "</text>\n";
    s += "<text x=\"" + fmt_fixed(kLeft - 6) + "\" y=\"" + fmt_fixed(py(ly) + 3) +
         "\" text-anchor=\"end\" font-size=\"10\">" + fmt_fixed(ly) + "</text>\n";
  }
  static const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  int idx = 0;
  for (const auto& [name, pts] : series) {
    const char* color = kColors[idx % 4];
    std::string poly;
    for (const auto& [lx, ly] : pts) poly += fmt_fixed(px(lx)) + "," + fmt_fixed(py(ly)) + " ";
    if (!poly.empty()) poly.pop_back();
    s += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" +
         poly + "\"/>\n";
    s += "<text x=\"" + fmt_fixed(kLeft + pw + 10) + "\" y=\"" + fmt_fixed(kTop + 16 + 18 * idx) +
         "\" font-size=\"12\" fill=\"" + color + "\">" + name + "</text>\n";
    ++idx;
  }
  s += "</svg>\n";
  return s;
}

BenchConfig parse_bench_config(const std::string& json_text, std::uint64_t default_seed) {
  using nlohmann::json;
  BenchConfig cfg;
  cfg.seed = default_seed;
  try {
    const json j = json::parse(json_text);
    require(j.is_object(), ErrorKind::kInvalidConfig, "bench config must be a JSON object");
    for (const auto& [key, value] : j.items())
      require(key == "n_values" || key == "k" || key == "d" || key == "m" ||
                  key == "repetitions" || key == "warmup" || key == "mechanism" || key == "seed",
              ErrorKind::kInvalidConfig, "unknown bench config key: " + key);
    if (j.contains("n_values")) cfg.n_values = j.at("n_values").get<std::vector<std::int64_t>>();
    if (j.contains("k")) cfg.k = j.at("k").get<std::int64_t>();
    if (j.contains("d")) cfg.d = j.at("d").get<std::int64_t>();
    if (j.contains("m")) cfg.m = j.at("m").get<std::int64_t>();
    if (j.contains("repetitions")) cfg.repetitions = j.at("repetitions").get<int>();
    if (j.contains("warmup")) cfg.warmup = j.at("warmup").get<int>();
    if (j.contains("mechanism")) cfg.mechanism = mechanism_from_string(j.at("mechanism"));
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kInvalidConfig, std::string("bad bench config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

}  // namespace statefuse
