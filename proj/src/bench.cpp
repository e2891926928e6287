#include "lbla/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <new>
#include <numeric>
#include <set>
#include <sstream>

#include "lbla/attention.hpp"
#include "lbla/lbla.hpp"

namespace lbla {

std::string_view bench_kind_name(BenchKind kind) {
  switch (kind) {
    case BenchKind::kSoftmax:
      return "softmax";
    case BenchKind::kLblaRelu:
      return "lbla-relu";
    case BenchKind::kLblaExp:
      return "lbla-exp";
    case BenchKind::kLblaSigmoid:
      return "lbla-sigmoid";
    case BenchKind::kLblaIdentity:
      return "lbla-identity";
  }
  return "unknown";
}

std::optional<BenchKind> parse_bench_kind(std::string_view name) {
  for (BenchKind k : {BenchKind::kSoftmax, BenchKind::kLblaRelu, BenchKind::kLblaExp,
                      BenchKind::kLblaSigmoid, BenchKind::kLblaIdentity}) {
    if (bench_kind_name(k) == name) return k;
  }
  return std::nullopt;
}

std::optional<KernelKind> bench_kernel(BenchKind kind) {
  switch (kind) {
    case BenchKind::kSoftmax:
      return std::nullopt;
    case BenchKind::kLblaRelu:
      return KernelKind::kRelu;
    case BenchKind::kLblaExp:
      return KernelKind::kExponential;
    case BenchKind::kLblaSigmoid:
      return KernelKind::kSigmoid;
    case BenchKind::kLblaIdentity:
      return KernelKind::kIdentity;
  }
  return std::nullopt;
}

void BenchSpec::validate() const {
  if (repeats < 3) throw ConfigError("repeats must be >= 3");
  if (warmup < 0) throw ConfigError("warmup must be >= 0");
  if (lengths.empty()) throw ConfigError("at least one sequence length is required");
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    if (lengths[i] < 1) throw ConfigError("sequence lengths must be >= 1");
    if (i > 0 && lengths[i] <= lengths[i - 1]) {
      throw ConfigError("sequence lengths must be strictly increasing");
    }
  }
  if (kinds.empty()) throw ConfigError("at least one attention kind is required");
  if (d_model < 1 || heads < 1 || d_model % heads != 0) {
    throw ConfigError("d_model must be a positive multiple of heads");
  }
}

namespace {

std::int64_t nearest_rank(const std::vector<std::int64_t>& sorted, double p) {
  const auto n = static_cast<double>(sorted.size());
  const auto rank = static_cast<std::size_t>(std::max(1.0, std::ceil(p * n)));
  return sorted[rank - 1];
}

template <typename Scalar>
struct Cell {
  const Tensor<Scalar>& x;
  const AttentionParams<Scalar>& params;
};

template <typename Scalar>
Tensor<Scalar> run_layer(const Cell<Scalar>& cell, BenchKind kind, const BenchSpec& spec) {
  const auto kernel = bench_kernel(kind);
  if (!kernel) {
    return multi_head_attention(cell.x, cell.params,
                                [](const Tensor<Scalar>& q, const Tensor<Scalar>& k,
                                   const Tensor<Scalar>& v) { return softmax_attention(q, k, v); });
  }
  LblaOptions opts;
  opts.kernel = *kernel;
  if (spec.use_reweight) opts.reweight = build_reweight(cell.x.rows());
  return multi_head_attention(
      cell.x, cell.params,
      [&](const Tensor<Scalar>& q, const Tensor<Scalar>& k, const Tensor<Scalar>& v) {
        return spec.lbla_route == LblaRoute::kOracle ? lbla_oracle(q, k, v, opts)
                                                     : lbla_forward(q, k, v, opts);
      });
}

bool is_quadratic(BenchKind kind, const BenchSpec& spec) {
  return kind == BenchKind::kSoftmax || spec.lbla_route == LblaRoute::kOracle;
}

template <typename Scalar>
std::vector<BenchRecord> run_bench_typed(const BenchSpec& spec) {
  Rng weight_rng(spec.seed);
  const Eigen::Index d = spec.d_model;
  AttentionParams<double> params64{seeded_init(weight_rng, d, d, d), seeded_init(weight_rng, d, d, d),
                                   seeded_init(weight_rng, d, d, d), seeded_init(weight_rng, d, d, d),
                                   spec.heads};
  const AttentionParams<Scalar> params = params64.template cast<Scalar>();

  std::vector<BenchRecord> records;
  for (const Eigen::Index steps : spec.lengths) {
    Rng input_rng(spec.seed ^ (0x5851f42d4c957f2dULL * static_cast<std::uint64_t>(steps)));
    const Tensor<Scalar> x = uniform_tensor(input_rng, steps, d, -1.0, 1.0).template cast<Scalar>();
    const Cell<Scalar> cell{x, params};
    for (const BenchKind kind : spec.kinds) {
      BenchRecord rec;
      const auto kernel = bench_kernel(kind);
      rec.attn_kind = !kernel ? "softmax" : (spec.use_reweight ? "lbla" : "linear");
      rec.kernel = kernel ? std::string(kernel_name(*kernel)) : "none";
      rec.steps = steps;
      rec.d = d;
      rec.h = spec.heads;

      const std::uint64_t score_bytes =
          static_cast<std::uint64_t>(steps) * static_cast<std::uint64_t>(steps) * sizeof(Scalar);
      if (is_quadratic(kind, spec) && score_bytes > spec.max_score_bytes) {
        rec.skip_reason = "score matrix exceeds memory budget";
        records.push_back(std::move(rec));
        continue;
      }
      try {
        for (int i = 0; i < spec.warmup; ++i) run_layer(cell, kind, spec);
        std::vector<std::int64_t> samples;
        double checksum = 0.0;
        for (int i = 0; i < spec.repeats; ++i) {
          const auto start = std::chrono::steady_clock::now();
          const Tensor<Scalar> out = run_layer(cell, kind, spec);
          const auto stop = std::chrono::steady_clock::now();
          samples.push_back(
              std::chrono::duration_cast<std::chrono::nanoseconds>(stop - start).count());
          checksum = static_cast<double>(out.sum());
        }
        std::sort(samples.begin(), samples.end());
        rec.median_ns = nearest_rank(samples, 0.5);
        rec.p10_ns = nearest_rank(samples, 0.1);
        rec.p90_ns = nearest_rank(samples, 0.9);
        rec.checksum = checksum;
      } catch (const std::bad_alloc&) {
        rec.skip_reason = "out of memory";
      }
      records.push_back(std::move(rec));
    }
  }
  return records;
}

}  // namespace

std::vector<BenchRecord> run_bench(const BenchSpec& spec) {
  spec.validate();
  return spec.precision == Precision::kF32 ? run_bench_typed<float>(spec)
                                           : run_bench_typed<double>(spec);
}

double fit_slope(const std::vector<BenchRecord>& records) {
  std::vector<std::pair<double, double>> points;
  std::set<Eigen::Index> distinct;
  for (const BenchRecord& r : records) {
    if (r.skipped()) continue;
    if (r.steps < 1 || r.median_ns <= 0) {
      throw std::invalid_argument("fit_slope: non-positive T or median");
    }
    points.emplace_back(std::log(static_cast<double>(r.steps)),
                        std::log(static_cast<double>(r.median_ns)));
    distinct.insert(r.steps);
  }
  if (distinct.size() < 3) {
    throw std::invalid_argument("fit_slope: need at least 3 distinct sequence lengths, got " +
                                std::to_string(distinct.size()));
  }
  const double n = static_cast<double>(points.size());
  double mean_x = 0.0, mean_y = 0.0;
  for (const auto& [x, y] : points) {
    mean_x += x;
    mean_y += y;
  }
  mean_x /= n;
  mean_y /= n;
  double sxy = 0.0, sxx = 0.0;
  for (const auto& [x, y] : points) {
    sxy += (x - mean_x) * (y - mean_y);
    sxx += (x - mean_x) * (x - mean_x);
  }
  return sxy / sxx;
}

std::vector<BenchRecord> select_records(const std::vector<BenchRecord>& records,
                                        std::string_view attn_kind, std::string_view kernel) {
  std::vector<BenchRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [&](const BenchRecord& r) { return r.attn_kind == attn_kind && r.kernel == kernel; });
  return out;
}

// --- CSV -------------------------------------------------------------------

namespace {

constexpr std::string_view kSkipPrefix = "skipped:";

std::string plain_decimal(double v) {
  char buf[512];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed);
  if (ec != std::errc()) throw std::runtime_error("checksum not representable in fixed notation");
  return std::string(buf, ptr);
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    fields.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

template <typename T>
T parse_number(std::string_view field, const char* what) {
  T value{};
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw std::invalid_argument(std::string("csv: bad ") + what + " '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace

std::string format_csv(const std::vector<BenchRecord>& records) {
  std::string out(kCsvHeader);
  out += '\n';
  for (const BenchRecord& r : records) {
    out += r.attn_kind + ',' + r.kernel + ',' + std::to_string(r.steps) + ',' +
           std::to_string(r.d) + ',' + std::to_string(r.h) + ',';
    if (r.skipped()) {
      std::string reason = r.skip_reason;
      std::replace(reason.begin(), reason.end(), ',', ';');
      std::replace(reason.begin(), reason.end(), '\n', ' ');
      out += ",,," + std::string(kSkipPrefix) + reason;
    } else {
      out += std::to_string(r.median_ns) + ',' + std::to_string(r.p10_ns) + ',' +
             std::to_string(r.p90_ns) + ',' + plain_decimal(r.checksum);
    }
    out += '\n';
  }
  return out;
}

std::vector<BenchRecord> parse_csv(std::string_view text) {
  std::vector<BenchRecord> records;
  bool header_seen = false;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (!header_seen) {
      if (line != kCsvHeader) throw std::invalid_argument("csv: unexpected header");
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 9) throw std::invalid_argument("csv: expected 9 fields");
    BenchRecord r;
    r.attn_kind = std::string(f[0]);
    r.kernel = std::string(f[1]);
    r.steps = parse_number<Eigen::Index>(f[2], "T");
    r.d = parse_number<Eigen::Index>(f[3], "d");
    r.h = parse_number<Eigen::Index>(f[4], "h");
    if (f[8].starts_with(kSkipPrefix)) {
      r.skip_reason = std::string(f[8].substr(kSkipPrefix.size()));
    } else {
      r.median_ns = parse_number<std::int64_t>(f[5], "median_ns");
      r.p10_ns = parse_number<std::int64_t>(f[6], "p10_ns");
      r.p90_ns = parse_number<std::int64_t>(f[7], "p90_ns");
      r.checksum = parse_number<double>(f[8], "checksum");
    }
    records.push_back(std::move(r));
  }
  if (!header_seen) throw std::invalid_argument("csv: missing header");
  return records;
}

void emit_csv(const std::vector<BenchRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << format_csv(records);
  out.flush();
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

// --- Ablation --------------------------------------------------------------

std::string_view property_name(Property p) {
  switch (p) {
    case Property::kNonNegativity:
      return "non_negativity";
    case Property::kRowSum:
      return "row_sum";
    case Property::kPositionSensitivity:
      return "position_sensitivity";
    case Property::kOracleEquivalence:
      return "oracle_equivalence";
  }
  return "unknown";
}

bool ArmResult::property_holds(Property p) const {
  for (const auto& [prop, ok] : holds) {
    if (prop == p) return ok;
  }
  return false;
}

bool ArmResult::as_expected() const {
  if (!expected_break) {
    return std::all_of(holds.begin(), holds.end(), [](const auto& h) { return h.second; });
  }
  return !property_holds(*expected_break);
}

bool AblationReport::all_as_expected() const {
  return std::all_of(arms.begin(), arms.end(), [](const ArmResult& a) { return a.as_expected(); });
}

std::string AblationReport::to_string() const {
  std::ostringstream out;
  for (const ArmResult& arm : arms) {
    out << arm.arm << ":";
    for (const auto& [prop, ok] : arm.holds) {
      out << " " << property_name(prop) << "=" << (ok ? "PASS" : "FAIL");
    }
    if (arm.expected_break) {
      out << " | breaks " << property_name(*arm.expected_break) << ": "
          << (arm.as_expected() ? "FLAGGED" : "NOT FLAGGED");
    } else {
      out << " | " << (arm.as_expected() ? "all properties hold" : "UNEXPECTED FAILURE");
    }
    out << "\n";
  }
  return out.str();
}

namespace {

Tensord permute_rows(const Tensord& m, const std::vector<Eigen::Index>& perm) {
  Tensord out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.row(i) = m.row(perm[static_cast<std::size_t>(i)]);
  return out;
}

double row_relative_error(const Tensord& a, const Tensord& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double scale = std::max(b.row(i).cwiseAbs().maxCoeff(), 1e-300);
    worst = std::max(worst, (a.row(i) - b.row(i)).cwiseAbs().maxCoeff() / scale);
  }
  return worst;
}

ArmResult evaluate_arm(ArmResult arm, const AblationConfig& cfg) {
  Rng rng(cfg.seed);
  bool nonneg = true, row_sum = true, sensitive = true, equivalent = true;
  for (int n = 0; n < cfg.instances; ++n) {
    const Tensord q = uniform_tensor(rng, cfg.steps, cfg.d, -1.0, 1.0);
    const Tensord k = uniform_tensor(rng, cfg.steps, cfg.d, -1.0, 1.0);
    const Tensord v = uniform_tensor(rng, cfg.steps, cfg.d, -1.0, 1.0);
    LblaOptions opts = arm.options;
    if (arm.use_reweight) opts.reweight = build_reweight(cfg.steps);

    const Tensord prox = proximity_matrix(q, k, opts);
    nonneg = nonneg && (prox.array() >= 0.0).all();

    const Tensord w = implied_weights(q, k, opts);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      const double mass = std::max(1.0, w.row(i).cwiseAbs().sum());
      if (std::abs(w.row(i).sum() - 1.0) > 1e-12 * mass) row_sum = false;
    }

    std::vector<Eigen::Index> perm(static_cast<std::size_t>(cfg.steps));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    for (std::size_t i = perm.size(); i > 1; --i) {
      std::swap(perm[i - 1], perm[rng.below(i)]);
    }
    const Tensord out = lbla_forward(q, k, v, opts);
    const Tensord out_perm =
        lbla_forward(permute_rows(q, perm), permute_rows(k, perm), permute_rows(v, perm), opts);
    const double defect = (out_perm - permute_rows(out, perm)).cwiseAbs().maxCoeff();
    sensitive = sensitive && defect > 1e-6;

    equivalent = equivalent && row_relative_error(out, lbla_oracle(q, k, v, opts)) <= 1e-10;
  }
  arm.holds = {{Property::kNonNegativity, nonneg},
               {Property::kRowSum, row_sum},
               {Property::kPositionSensitivity, sensitive},
               {Property::kOracleEquivalence, equivalent}};
  return arm;
}

}  // namespace

AblationReport run_ablation(const AblationConfig& cfg) {
  if (cfg.d < 1 || cfg.d > 64 || cfg.steps < 2 || cfg.steps > 256 || cfg.instances < 1) {
    throw ConfigError("run_ablation: needs 1 <= d <= 64, 2 <= T <= 256, instances >= 1");
  }
  ArmResult full;
  full.arm = "full";
  full.options.kernel = KernelKind::kSigmoid;

  ArmResult no_reweight = full;
  no_reweight.arm = "no-reweight";
  no_reweight.use_reweight = false;
  no_reweight.expected_break = Property::kPositionSensitivity;

  ArmResult no_kernel = full;
  no_kernel.arm = "no-kernel";
  no_kernel.options.kernel = KernelKind::kIdentity;
  no_kernel.expected_break = Property::kNonNegativity;

  ArmResult no_norm = full;
  no_norm.arm = "no-normalization";
  no_norm.options.normalize = false;
  no_norm.expected_break = Property::kRowSum;

  AblationReport report;
  for (ArmResult arm : {full, no_reweight, no_kernel, no_norm}) {
    report.arms.push_back(evaluate_arm(std::move(arm), cfg));
  }
  return report;
}

}  // namespace lbla
