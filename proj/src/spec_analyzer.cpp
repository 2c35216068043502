#include "mpfk/spec_analyzer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "mpfk/errors.hpp"
#include "mpfk/text.hpp"

namespace mpfk {
namespace {

using nlohmann::json;

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

// 1-based line of the first occurrence of "key" in the document, for messages.
std::string locate(std::string_view text, std::string_view key) {
  const std::string quoted = "\"" + std::string(key) + "\"";
  const auto pos = text.find(quoted);
  if (pos == std::string_view::npos) return "";
  const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n');
  return " (line " + std::to_string(line) + ")";
}

double positive_number(const json& v, std::string_view what, std::string_view text, std::string_view key) {
  if (!v.is_number() || !(v.get<double>() > 0.0) || !std::isfinite(v.get<double>())) {
    throw SpecError(std::string(what) + " must be a positive number" + locate(text, key));
  }
  return v.get<double>();
}

std::map<ThroughputKey, double> load_table(const json& obj, std::string_view field, std::string_view text) {
  if (!obj.is_object()) throw SpecError(std::string(field) + " must be an object" + locate(text, field));
  std::map<ThroughputKey, double> table;
  for (const auto& [key, value] : obj.items()) {
    ThroughputKey k;
    try {
      k = ThroughputKey::parse(key);
    } catch (const SpecError& e) {
      throw SpecError(std::string(e.what()) + locate(text, key));
    }
    table[k] = positive_number(value, std::string(field) + "." + key, text, key);
  }
  return table;
}

HardwareSpec make_spec(std::string name, double bw, std::initializer_list<std::pair<const char*, double>> tput,
                       std::initializer_list<std::pair<const char*, double>> printed) {
  HardwareSpec s;
  s.name = std::move(name);
  s.memory_bw_tbps = bw;
  for (const auto& [k, v] : tput) s.throughput_tflops[ThroughputKey::parse(k)] = v;
  for (const auto& [k, v] : printed) s.published_bytes_per_flop[ThroughputKey::parse(k)] = v;
  return s;
}

SeriesRow series_row(const HardwareSpec& spec, const ThroughputKey& key) {
  SeriesRow row;
  row.system = spec.name;
  row.key = key;
  row.memory_bw_tbps = spec.memory_bw_tbps;
  if (const auto it = spec.throughput_tflops.find(key); it != spec.throughput_tflops.end()) {
    row.throughput_tflops = it->second;
    row.bytes_per_flop = spec.memory_bw_tbps / it->second;
  }
  if (const auto it = spec.published_bytes_per_flop.find(key); it != spec.published_bytes_per_flop.end()) {
    row.published_bytes_per_flop = it->second;
  }
  return row;
}

}  // namespace

std::string_view to_string(ComputePath p) noexcept {
  switch (p) {
    case ComputePath::fma:
      return "fma";
    case ComputePath::tensor:
      return "tensor";
    case ComputePath::emulated:
      return "emulated";
  }
  return "?";
}

ComputePath parse_compute_path(std::string_view text) {
  const std::string t = lower(text);
  if (t == "fma") return ComputePath::fma;
  if (t == "tensor") return ComputePath::tensor;
  if (t == "emulated") return ComputePath::emulated;
  throw SpecError("unknown compute path '" + std::string(text) + "' (expected fma, tensor, or emulated)");
}

std::string_view to_string(Bound b) noexcept { return b == Bound::memory_bound ? "memory_bound" : "compute_bound"; }

std::string ThroughputKey::str() const { return precision + "." + std::string(to_string(path)); }

ThroughputKey ThroughputKey::parse(std::string_view text) {
  const auto dot = text.find('.');
  if (dot == std::string_view::npos || dot == 0) {
    throw SpecError("throughput key '" + std::string(text) + "' is not of the form <precision>.<path>");
  }
  return ThroughputKey{lower(text.substr(0, dot)), parse_compute_path(text.substr(dot + 1))};
}

double HardwareSpec::throughput(const ThroughputKey& key) const {
  const auto it = throughput_tflops.find(key);
  if (it == throughput_tflops.end()) throw SpecError(name + ": no throughput entry for " + key.str());
  return it->second;
}

void HardwareSpec::validate() const {
  if (name.empty()) throw SpecError("hardware spec has an empty name");
  if (!(memory_bw_tbps > 0.0)) throw SpecError(name + ": memory bandwidth must be positive");
  for (const auto& [k, v] : throughput_tflops) {
    if (!(v > 0.0)) throw SpecError(name + ": throughput " + k.str() + " must be positive");
  }
  if (power_w && !(*power_w > 0.0)) throw SpecError(name + ": power must be positive");
}

HardwareSpec load_hardware_spec(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw SpecError(std::string("malformed hardware spec: ") + e.what());
  }
  if (!doc.is_object()) throw SpecError("hardware spec must be a JSON object");
  static const std::vector<std::string> known{"name", "memory_bw_tbps", "power_w", "throughput_tflops",
                                              "published_bytes_per_flop"};
  for (const auto& [key, _] : doc.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw SpecError("unknown field '" + key + "'" + locate(text, key));
    }
  }

  HardwareSpec spec;
  if (!doc.contains("name") || !doc["name"].is_string() || doc["name"].get<std::string>().empty()) {
    throw SpecError("field 'name' must be a non-empty string" + locate(text, "name"));
  }
  spec.name = doc["name"].get<std::string>();
  if (!doc.contains("memory_bw_tbps")) throw SpecError("missing field 'memory_bw_tbps'");
  spec.memory_bw_tbps = positive_number(doc["memory_bw_tbps"], "memory_bw_tbps", text, "memory_bw_tbps");
  if (doc.contains("power_w")) spec.power_w = positive_number(doc["power_w"], "power_w", text, "power_w");
  if (!doc.contains("throughput_tflops")) throw SpecError("missing field 'throughput_tflops'");
  spec.throughput_tflops = load_table(doc["throughput_tflops"], "throughput_tflops", text);
  if (doc.contains("published_bytes_per_flop")) {
    spec.published_bytes_per_flop = load_table(doc["published_bytes_per_flop"], "published_bytes_per_flop", text);
  }
  return spec;
}

HardwareSpec load_hardware_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot open hardware spec file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return load_hardware_spec(buf.str());
  } catch (const SpecError& e) {
    throw SpecError(path + ": " + e.what());
  }
}

std::string serialize_hardware_spec(const HardwareSpec& spec) {
  json doc;
  doc["name"] = spec.name;
  doc["memory_bw_tbps"] = spec.memory_bw_tbps;
  if (spec.power_w) doc["power_w"] = *spec.power_w;
  doc["throughput_tflops"] = json::object();
  for (const auto& [k, v] : spec.throughput_tflops) doc["throughput_tflops"][k.str()] = v;
  if (!spec.published_bytes_per_flop.empty()) {
    doc["published_bytes_per_flop"] = json::object();
    for (const auto& [k, v] : spec.published_bytes_per_flop) doc["published_bytes_per_flop"][k.str()] = v;
  }
  return doc.dump(2) + "\n";
}

std::vector<HardwareSpec> builtin_specs() {
  return {
      make_spec("V100", 0.9, {{"fp64.fma", 7.8}, {"fp16.fma", 31.4}, {"fp16.tensor", 125}},
                {{"fp64.fma", 0.124}, {"fp16.fma", 0.031}, {"fp16.tensor", 0.008}}),
      make_spec("A100", 2.0, {{"fp64.fma", 9.75}, {"fp64.tensor", 19.5}, {"fp16.fma", 78}, {"fp16.tensor", 312}},
                {{"fp64.fma", 0.225}, {"fp64.tensor", 0.112}, {"fp16.fma", 0.028}, {"fp16.tensor", 0.007}}),
      make_spec("H200", 4.8, {{"fp64.fma", 33.5}, {"fp64.tensor", 67}, {"fp16.fma", 134}, {"fp16.tensor", 989}},
                {{"fp64.fma", 0.158}, {"fp64.tensor", 0.079}, {"fp16.fma", 0.039}, {"fp16.tensor", 0.005}}),
      make_spec("B200", 8.0, {{"fp64.fma", 40}, {"fp64.tensor", 40}, {"fp16.fma", 80}, {"fp16.tensor", 2250}},
                {{"fp64.fma", 0.220}, {"fp64.tensor", 0.220}, {"fp16.fma", 0.110}, {"fp16.tensor", 0.004}}),
  };
}

HardwareSpec builtin_spec(std::string_view name) {
  for (auto& s : builtin_specs()) {
    if (lower(s.name) == lower(name)) return s;
  }
  throw SpecError("unknown builtin spec '" + std::string(name) + "' (expected v100, a100, h200, or b200)");
}

double bytes_per_flop(const HardwareSpec& spec, const ThroughputKey& key) {
  return spec.memory_bw_tbps / spec.throughput(key);
}

double ridge_point(const HardwareSpec& spec, const ThroughputKey& key) {
  return spec.throughput(key) / spec.memory_bw_tbps;
}

RooflineResult attainable(const HardwareSpec& spec, double intensity, const ThroughputKey& key) {
  if (!(intensity >= 0.0)) throw SpecError("arithmetic intensity must be non-negative");
  const double peak = spec.throughput(key);
  const double memory_roof = std::isinf(intensity) ? std::numeric_limits<double>::infinity()
                                                   : spec.memory_bw_tbps * intensity;
  RooflineResult r;
  r.intensity = intensity;
  if (memory_roof >= peak) {
    r.attainable_tflops = peak;
    r.bound = Bound::compute_bound;
  } else {
    r.attainable_tflops = memory_roof;
    r.bound = Bound::memory_bound;
  }
  return r;
}

double speedup(const BenchmarkRecord& a, const BenchmarkRecord& b) {
  if (a.system != b.system) throw SpecError("speedup compares runs on one system: " + a.system + " vs " + b.system);
  if (!(a.perf_tflops > 0.0) || !(b.perf_tflops > 0.0)) throw SpecError("benchmark performance must be positive");
  return b.perf_tflops / a.perf_tflops;
}

double efficiency_gain(const BenchmarkRecord& a, const BenchmarkRecord& b) {
  if (a.system != b.system) throw SpecError("efficiency_gain compares runs on one system");
  if (!a.efficiency_gflops_per_watt || !b.efficiency_gflops_per_watt) {
    throw SpecError("efficiency_gain: record without an efficiency figure (" + a.mode + " / " + b.mode + ")");
  }
  return *b.efficiency_gflops_per_watt / *a.efficiency_gflops_per_watt;
}

std::vector<BenchmarkRecord> published_ir_records() {
  return {
      {"V100", "fp64", 6.6, 28}, {"V100", "fp16+fp64 mxp", 34.6, 173},
      {"A100", "fp64", 16.9, 45}, {"A100", "fp16+fp64 mxp", 74.6, 262},
      {"H200", "fp64", 42.6, 78}, {"H200", "fp16+fp64 mxp", 124.2, 529},
  };
}

std::vector<BenchmarkRecord> published_emulation_records() {
  return {
      {"B200 max-perf", "fp64", 34.5, 41.7},
      {"B200 max-perf", "emulation s=7", 68.4, 71.3},
      {"B200 max-eff", "fp64", 23.1, 51.4},
      {"B200 max-eff", "emulation s=7", 53.4, 82.1},
  };
}

BenchmarkRecord find_record(const std::vector<BenchmarkRecord>& records, std::string_view system,
                            std::string_view mode) {
  for (const auto& r : records) {
    if (r.system == system && r.mode == mode) return r;
  }
  throw SpecError("no benchmark record for " + std::string(system) + " / " + std::string(mode));
}

std::vector<Discrepancy> consistency_report(const HardwareSpec& spec, double flag_threshold) {
  std::vector<Discrepancy> out;
  for (const auto& [key, published] : spec.published_bytes_per_flop) {
    const auto it = spec.throughput_tflops.find(key);
    if (it == spec.throughput_tflops.end()) continue;
    Discrepancy d;
    d.system = spec.name;
    d.key = key;
    d.computed = spec.memory_bw_tbps / it->second;
    d.published = published;
    d.relative_difference = std::fabs(d.computed - published) / published;
    // Agreement to ~1e-12 is exact up to decimal representation of the inputs.
    if (d.relative_difference <= 1e-12) continue;
    d.flagged = d.relative_difference > flag_threshold;
    out.push_back(d);
  }
  return out;
}

std::vector<SeriesRow> figure4_series(const std::vector<HardwareSpec>& specs,
                                      const std::map<std::string, double>& emulated_tflops) {
  for (const auto& [system, tflops] : emulated_tflops) {
    const bool known = std::any_of(specs.begin(), specs.end(), [&](const auto& s) { return lower(s.name) == lower(system); });
    if (!known) throw SpecError("emulated throughput given for unknown system '" + system + "'");
    if (!(tflops > 0.0)) throw SpecError("emulated throughput for '" + system + "' must be positive");
  }
  static const std::vector<ThroughputKey> keys{{"fp64", ComputePath::fma},
                                               {"fp64", ComputePath::tensor},
                                               {"fp16", ComputePath::fma},
                                               {"fp16", ComputePath::tensor}};
  std::vector<SeriesRow> rows;
  for (const auto& spec : specs) {
    for (const auto& key : keys) rows.push_back(series_row(spec, key));
    const ThroughputKey emu{"fp64", ComputePath::emulated};
    std::optional<double> tflops;
    for (const auto& [system, v] : emulated_tflops) {
      if (lower(system) == lower(spec.name)) tflops = v;
    }
    if (!tflops && spec.throughput_tflops.count(emu)) tflops = spec.throughput_tflops.at(emu);
    if (tflops) {
      HardwareSpec with_emu = spec;
      with_emu.throughput_tflops[emu] = *tflops;
      rows.push_back(series_row(with_emu, emu));
    }
  }
  return rows;
}

std::vector<SeriesRow> spec_series(const HardwareSpec& spec) {
  std::vector<SeriesRow> rows;
  for (const auto& [key, _] : spec.throughput_tflops) rows.push_back(series_row(spec, key));
  return rows;
}

std::string series_csv(const std::vector<SeriesRow>& rows) {
  std::string out = "system,precision,path,throughput_tflops,memory_bw_tbps,bytes_per_flop,published_bytes_per_flop\n";
  for (const auto& r : rows) {
    out += r.system + "," + r.key.precision + "," + std::string(to_string(r.key.path)) + "," +
           format_optional(r.throughput_tflops) + "," + format_number(r.memory_bw_tbps) + "," +
           format_optional(r.bytes_per_flop) + "," + format_optional(r.published_bytes_per_flop) + "\n";
  }
  return out;
}

std::string discrepancy_csv(const std::vector<Discrepancy>& rows) {
  std::string out = "system,precision,path,computed,published,relative_difference,flagged\n";
  for (const auto& d : rows) {
    out += d.system + "," + d.key.precision + "," + std::string(to_string(d.key.path)) + "," +
           format_number(d.computed) + "," + format_number(d.published) + "," +
           format_number(d.relative_difference) + "," + (d.flagged ? "true" : "false") + "\n";
  }
  return out;
}

}  // namespace mpfk
