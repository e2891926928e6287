#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lbla/conformer.hpp"
#include "lbla/kernels.hpp"

namespace lbla {

enum class BenchKind { kSoftmax, kLblaRelu, kLblaExp, kLblaSigmoid, kLblaIdentity };
enum class Precision { kF64, kF32 };

std::string_view bench_kind_name(BenchKind kind);
std::optional<BenchKind> parse_bench_kind(std::string_view name);
std::optional<KernelKind> bench_kernel(BenchKind kind);

struct BenchSpec {
  std::vector<Eigen::Index> lengths = {512, 1024, 2048, 4096, 8192};
  Eigen::Index d_model = 256;
  Eigen::Index heads = 4;
  std::vector<BenchKind> kinds = {BenchKind::kSoftmax, BenchKind::kLblaSigmoid};
  bool use_reweight = true;
  int repeats = 5;
  int warmup = 1;
  Precision precision = Precision::kF64;
  std::uint64_t seed = 0;
  // LBLA cells can be routed through the O(T^2) oracle, e.g. to compare checksums.
  LblaRoute lbla_route = LblaRoute::kLinearized;
  // Quadratic cells whose T x T score matrix would exceed this are skipped, not run.
  std::uint64_t max_score_bytes = std::uint64_t{3} << 30;

  void validate() const;
};

struct BenchRecord {
  std::string attn_kind;  // softmax | lbla | linear (LBLA without re-weighting)
  std::string kernel;     // none for softmax
  Eigen::Index steps = 0;
  Eigen::Index d = 0;
  Eigen::Index h = 0;
  std::int64_t median_ns = 0;
  std::int64_t p10_ns = 0;
  std::int64_t p90_ns = 0;
  double checksum = 0.0;
  // Non-empty when the cell was not run; timing fields are then meaningless.
  std::string skip_reason;

  bool skipped() const { return !skip_reason.empty(); }
  bool operator==(const BenchRecord&) const = default;
};

// Times the multi-head attention layer (projections included) for every (T, kind) cell.
// Warmup runs are discarded; the same seeded input and weights are shared by all kinds at a T.
std::vector<BenchRecord> run_bench(const BenchSpec& spec);

// Least-squares slope of log(median_ns) against log(T). Skipped records are ignored;
// needs at least three distinct T.
double fit_slope(const std::vector<BenchRecord>& records);

std::vector<BenchRecord> select_records(const std::vector<BenchRecord>& records,
                                        std::string_view attn_kind, std::string_view kernel);

inline constexpr std::string_view kCsvHeader =
    "attn_kind,kernel,T,d,h,median_ns,p10_ns,p90_ns,checksum";

std::string format_csv(const std::vector<BenchRecord>& records);
std::vector<BenchRecord> parse_csv(std::string_view text);
void emit_csv(const std::vector<BenchRecord>& records, const std::filesystem::path& path);

// Structural ablation of the attention mechanism.
enum class Property { kNonNegativity, kRowSum, kPositionSensitivity, kOracleEquivalence };
std::string_view property_name(Property p);

struct AblationConfig {
  Eigen::Index d = 16;
  Eigen::Index steps = 48;
  int instances = 20;
  std::uint64_t seed = 0;
};

struct ArmResult {
  std::string arm;
  LblaOptions options;  // reweight left empty; built per instance when use_reweight
  bool use_reweight = true;
  std::optional<Property> expected_break;
  std::vector<std::pair<Property, bool>> holds;

  bool property_holds(Property p) const;
  // Full arm: everything holds. Ablation arm: its targeted property is broken.
  bool as_expected() const;
};

struct AblationReport {
  std::vector<ArmResult> arms;
  bool all_as_expected() const;
  std::string to_string() const;
};

AblationReport run_ablation(const AblationConfig& cfg);

}  // namespace lbla
