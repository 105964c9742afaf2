// Copyright 2026 Sonamix Authors
// Runtime/FLOP scaling and parameter-size benchmarks.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sonamix/encoder.hpp"

namespace sonamix {

enum class ReportFormat { Csv, Json, Markdown };

ReportFormat parse_report_format(const std::string& name);

struct ScalingReport {
  std::string block_kind;
  std::string branch;
  int dim = 0;
  int reps = 0;
  std::vector<int> lengths;
  std::vector<double> median_ms;          // per forward pass
  std::vector<uint64_t> flops;            // analytic, per forward pass
  std::vector<uint64_t> mem_hwm_bytes;    // best-effort VmHWM after each length
  double slope = 0.0;                     // log-log wallclock, largest half of lengths
};

// Forward-only timings of one encoder block over random inputs. Medians over
// `reps` repetitions (two discarded warmup runs per length); repetitions are
// auto-batched when a single run is below timer resolution.
ScalingReport bench_scaling(BlockKind block, GlobalBranch branch, int dim,
                            const std::vector<int>& lengths, int reps, uint64_t seed);

// Analytic FLOPs of one block forward at sequence length T (no timing).
uint64_t block_forward_flops(BlockKind block, GlobalBranch branch, int dim, int length,
                             uint64_t seed = 0);

struct SizeCase {
  std::string label;
  EncoderConfig attention;
  EncoderConfig summary;
  double reference_pct = 0.0;  // published reduction this row is compared against
};

struct SizeRow {
  std::string label;
  uint64_t attention_total = 0;
  uint64_t summary_total = 0;
  double reduction_pct = 0.0;
  double reference_pct = 0.0;
};

struct SizeReport {
  std::vector<SizeRow> rows;
};

// Census for each pair; the two configs must differ only in global_branch.
SizeReport bench_size(const std::vector<SizeCase>& cases);

// The two large Table-2-style configurations (dim 1024, 12 layers).
std::vector<SizeCase> standard_size_cases();

std::string emit_report(const ScalingReport& report, ReportFormat format);
std::string emit_report(const SizeReport& report, ReportFormat format);

// Inverse of emit_report(..., Csv) for ScalingReport.
ScalingReport parse_scaling_csv(const std::string& text);

// Minimal structural JSON-schema check (type / required / properties / items).
// Throws InputError with a path on the first violation.
void validate_json_schema(const std::string& instance_json, const std::string& schema_json);

}  // namespace sonamix
