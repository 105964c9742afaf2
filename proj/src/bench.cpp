// Copyright 2026 Sonamix Authors
// Runtime/FLOP scaling and parameter-size benchmarks.
//
// Licensed under the Apache License, Version 2.0

#include "sonamix/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sonamix/rng.hpp"

namespace sonamix {

namespace {

using nlohmann::json;

uint64_t read_vm_hwm_bytes() {
  std::ifstream f("/proc/self/status");
  std::string line;
  while (std::getline(f, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      uint64_t kb = 0;
      std::sscanf(line.c_str(), "VmHWM: %llu", reinterpret_cast<unsigned long long*>(&kb));
      return kb * 1024;
    }
  }
  return 0;
}

EncoderConfig bench_config(BlockKind block, GlobalBranch branch, int dim, uint64_t seed) {
  EncoderConfig cfg;
  cfg.block_kind = block;
  cfg.global_branch = branch;
  cfg.num_layers = 1;
  cfg.model_dim = dim;
  cfg.num_heads = dim % 8 == 0 && dim / 8 % 2 == 0 ? 8 : 4;
  cfg.dropout = 0.0;
  cfg.vocab_size = 64;  // heads are not benchmarked
  cfg.mel_dim = 16;
  cfg.seed = seed;
  return cfg;
}

double fit_loglog_slope(const std::vector<int>& lengths, const std::vector<double>& median_ms) {
  // Least squares over the largest half of the lengths to suppress the
  // constant-overhead regime.
  const size_t n = lengths.size();
  const size_t take = (n + 1) / 2;
  const size_t start = n - take;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = start; i < n; ++i) {
    const double x = std::log(static_cast<double>(lengths[i]));
    const double y = std::log(median_ms[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double k = static_cast<double>(take);
  return (k * sxy - sx * sy) / (k * sxx - sx * sx);
}

}  // namespace

ReportFormat parse_report_format(const std::string& name) {
  if (name == "csv") return ReportFormat::Csv;
  if (name == "json") return ReportFormat::Json;
  if (name == "markdown" || name == "markdown-table") return ReportFormat::Markdown;
  throw ConfigError("unknown report format: " + name);
}

uint64_t block_forward_flops(BlockKind block, GlobalBranch branch, int dim, int length,
                             uint64_t seed) {
  EncoderModel<float> model(bench_config(block, branch, dim, seed));
  Rng rng(mix_seed(seed, "flops-input"));
  ag::Graph<float> g;
  g.grad_enabled = false;
  auto vars = model.bind(g);
  auto h = g.input(standard_normal<float>(length, dim, rng));
  g.reset_flops();
  (void)model.block_forward(g, vars, 0, h);
  return g.flops();
}

ScalingReport bench_scaling(BlockKind block, GlobalBranch branch, int dim,
                            const std::vector<int>& lengths, int reps, uint64_t seed) {
  if (lengths.size() < 2) throw ConfigError("bench_scaling needs at least two lengths");
  if (!std::is_sorted(lengths.begin(), lengths.end()))
    throw ConfigError("bench_scaling lengths must be ascending");
  if (reps < 20) throw ConfigError("bench_scaling needs reps >= 20");

  EncoderModel<float> model(bench_config(block, branch, dim, seed));
  Rng rng(mix_seed(seed, "bench-input"));

  ScalingReport report;
  report.block_kind = to_string(block);
  report.branch = to_string(branch);
  report.dim = dim;
  report.reps = reps;
  report.lengths = lengths;

  for (int T : lengths) {
    const MatF input = standard_normal<float>(T, dim, rng);

    auto run_once = [&]() {
      ag::Graph<float> g;
      g.grad_enabled = false;
      auto vars = model.bind(g);
      auto h = g.input(input);
      auto out = model.block_forward(g, vars, 0, h);
      // Fold the output into a scalar so the pass cannot be elided.
      volatile float sink = out->value(0, 0);
      (void)sink;
    };

    // Warmup, then decide how many runs per timing sample (auto-batching when
    // a single run is below timer resolution).
    run_once();
    run_once();
    const auto probe_start = std::chrono::steady_clock::now();
    run_once();
    const double probe_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - probe_start).count();
    const int batch = probe_s < 1e-3 ? std::max(1, static_cast<int>(1e-3 / std::max(probe_s, 1e-7)))
                                     : 1;

    std::vector<double> samples(static_cast<size_t>(reps));
    for (int r = 0; r < reps; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      for (int b = 0; b < batch; ++b) run_once();
      const double dt =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      samples[static_cast<size_t>(r)] = dt / batch;
    }
    std::sort(samples.begin(), samples.end());
    const double median = reps % 2 == 1
                              ? samples[static_cast<size_t>(reps / 2)]
                              : 0.5 * (samples[static_cast<size_t>(reps / 2 - 1)] +
                                       samples[static_cast<size_t>(reps / 2)]);
    report.median_ms.push_back(median * 1e3);
    report.flops.push_back(block_forward_flops(block, branch, dim, T, seed));
    report.mem_hwm_bytes.push_back(read_vm_hwm_bytes());
  }

  report.slope = fit_loglog_slope(report.lengths, report.median_ms);
  return report;
}

SizeReport bench_size(const std::vector<SizeCase>& cases) {
  SizeReport report;
  for (const auto& c : cases) {
    EncoderConfig a = c.attention;
    EncoderConfig s = c.summary;
    if (a.global_branch != GlobalBranch::Attention || s.global_branch != GlobalBranch::SummaryMixing)
      throw ConfigError("size case must pair an attention config with a summary_mixing config");
    EncoderConfig a_neutral = a;
    EncoderConfig s_neutral = s;
    a_neutral.global_branch = s_neutral.global_branch = GlobalBranch::Attention;
    a_neutral.seed = s_neutral.seed = 0;
    const auto same = [](const EncoderConfig& x, const EncoderConfig& y) {
      return x.block_kind == y.block_kind && x.num_layers == y.num_layers &&
             x.model_dim == y.model_dim && x.num_heads == y.num_heads &&
             x.ffn_mult == y.ffn_mult && x.cgmlp_mult == y.cgmlp_mult &&
             x.summary_mult == y.summary_mult && x.conv_kernel == y.conv_kernel &&
             x.vocab_size == y.vocab_size && x.mel_dim == y.mel_dim;
    };
    if (!same(a_neutral, s_neutral))
      throw ConfigError("size case configs must differ only in global_branch");

    SizeRow row;
    row.label = c.label;
    row.attention_total = count_parameters(a).total;
    row.summary_total = count_parameters(s).total;
    row.reduction_pct = 100.0 *
                        (static_cast<double>(row.attention_total) -
                         static_cast<double>(row.summary_total)) /
                        static_cast<double>(row.attention_total);
    row.reference_pct = c.reference_pct;
    report.rows.push_back(row);
  }
  return report;
}

std::vector<SizeCase> standard_size_cases() {
  std::vector<SizeCase> cases;
  for (BlockKind kind : {BlockKind::Branchformer, BlockKind::Conformer}) {
    SizeCase c;
    c.attention.block_kind = kind;
    c.attention.global_branch = GlobalBranch::Attention;
    c.attention.num_layers = 12;
    c.attention.model_dim = 1024;
    c.attention.num_heads = 8;
    c.summary = c.attention;
    c.summary.global_branch = GlobalBranch::SummaryMixing;
    c.label = to_string(kind) + "-1024x12";
    c.reference_pct = kind == BlockKind::Branchformer ? 12.3 : 8.5;
    cases.push_back(c);
  }
  return cases;
}

// ---- report serialization -----------------------------------------------------

std::string emit_report(const ScalingReport& r, ReportFormat format) {
  std::ostringstream os;
  switch (format) {
    case ReportFormat::Csv: {
      os << "# block_kind=" << r.block_kind << " branch=" << r.branch << " dim=" << r.dim
         << " reps=" << r.reps << "\n";
      char slope_buf[64];
      std::snprintf(slope_buf, sizeof(slope_buf), "%.17g", r.slope);
      os << "# slope=" << slope_buf << "\n";
      os << "length,median_ms,flops,mem_hwm_bytes\n";
      for (size_t i = 0; i < r.lengths.size(); ++i) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%llu,%llu\n", r.lengths[i], r.median_ms[i],
                      static_cast<unsigned long long>(r.flops[i]),
                      static_cast<unsigned long long>(r.mem_hwm_bytes[i]));
        os << buf;
      }
      return os.str();
    }
    case ReportFormat::Json: {
      json j{{"block_kind", r.block_kind},
             {"branch", r.branch},
             {"dim", r.dim},
             {"reps", r.reps},
             {"lengths", r.lengths},
             {"median_ms", r.median_ms},
             {"flops", r.flops},
             {"mem_hwm_bytes", r.mem_hwm_bytes},
             {"slope", r.slope}};
      return j.dump(2);
    }
    case ReportFormat::Markdown: {
      os << "| length | median_ms | flops | mem_hwm_bytes |\n";
      os << "|---|---|---|---|\n";
      for (size_t i = 0; i < r.lengths.size(); ++i)
        os << "| " << r.lengths[i] << " | " << r.median_ms[i] << " | " << r.flops[i] << " | "
           << r.mem_hwm_bytes[i] << " |\n";
      return os.str();
    }
  }
  throw ConfigError("unreachable report format");
}

std::string emit_report(const SizeReport& r, ReportFormat format) {
  std::ostringstream os;
  switch (format) {
    case ReportFormat::Csv: {
      os << "label,attention_total,summary_total,reduction_pct,reference_pct\n";
      for (const auto& row : r.rows) {
        char buf[224];
        std::snprintf(buf, sizeof(buf), "%s,%llu,%llu,%.6f,%.6f\n", row.label.c_str(),
                      static_cast<unsigned long long>(row.attention_total),
                      static_cast<unsigned long long>(row.summary_total), row.reduction_pct,
                      row.reference_pct);
        os << buf;
      }
      return os.str();
    }
    case ReportFormat::Json: {
      json rows = json::array();
      for (const auto& row : r.rows)
        rows.push_back({{"label", row.label},
                        {"attention_total", row.attention_total},
                        {"summary_total", row.summary_total},
                        {"reduction_pct", row.reduction_pct},
                        {"reference_pct", row.reference_pct}});
      return json{{"rows", rows}}.dump(2);
    }
    case ReportFormat::Markdown: {
      os << "| label | attention | summary_mixing | reduction % | reference % |\n";
      os << "|---|---|---|---|---|\n";
      for (const auto& row : r.rows)
        os << "| " << row.label << " | " << row.attention_total << " | " << row.summary_total
           << " | " << row.reduction_pct << " | " << row.reference_pct << " |\n";
      return os.str();
    }
  }
  throw ConfigError("unreachable report format");
}

ScalingReport parse_scaling_csv(const std::string& text) {
  ScalingReport r;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ls(line.substr(1));
      std::string kv;
      while (ls >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = kv.substr(0, eq);
        const std::string val = kv.substr(eq + 1);
        if (key == "block_kind") r.block_kind = val;
        else if (key == "branch") r.branch = val;
        else if (key == "dim") r.dim = std::stoi(val);
        else if (key == "reps") r.reps = std::stoi(val);
        else if (key == "slope") r.slope = std::stod(val);
      }
      continue;
    }
    if (line.rfind("length,", 0) == 0) continue;  // header
    int length = 0;
    double median = 0;
    unsigned long long flops = 0, mem = 0;
    if (std::sscanf(line.c_str(), "%d,%lf,%llu,%llu", &length, &median, &flops, &mem) != 4)
      throw InputError("malformed scaling csv row: " + line);
    r.lengths.push_back(length);
    r.median_ms.push_back(median);
    r.flops.push_back(flops);
    r.mem_hwm_bytes.push_back(mem);
  }
  return r;
}

// ---- minimal JSON-schema subset ---------------------------------------------

namespace {

void check_schema(const json& inst, const json& schema, const std::string& path) {
  if (schema.contains("type")) {
    const std::string type = schema["type"].get<std::string>();
    const bool ok = (type == "object" && inst.is_object()) ||
                    (type == "array" && inst.is_array()) ||
                    (type == "string" && inst.is_string()) ||
                    (type == "number" && inst.is_number()) ||
                    (type == "integer" && inst.is_number_integer()) ||
                    (type == "boolean" && inst.is_boolean());
    if (!ok) throw InputError("schema violation at " + path + ": expected " + type);
  }
  if (schema.contains("required"))
    for (const auto& key : schema["required"]) {
      const std::string k = key.get<std::string>();
      if (!inst.contains(k)) throw InputError("schema violation at " + path + ": missing " + k);
    }
  if (schema.contains("properties") && inst.is_object())
    for (const auto& [key, sub] : schema["properties"].items())
      if (inst.contains(key)) check_schema(inst.at(key), sub, path + "/" + key);
  if (schema.contains("items") && inst.is_array())
    for (size_t i = 0; i < inst.size(); ++i)
      check_schema(inst[i], schema["items"], path + "[" + std::to_string(i) + "]");
}

}  // namespace

void validate_json_schema(const std::string& instance_json, const std::string& schema_json) {
  const json inst = json::parse(instance_json);
  const json schema = json::parse(schema_json);
  check_schema(inst, schema, "");
}

}  // namespace sonamix
