#pragma once

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "comfed/model.hpp"
#include "comfed/orchestrator.hpp"
#include "comfed/params.hpp"

namespace comfed {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shortest round-trip decimal form; "nan" for NaN.
inline std::string format_real(double x) {
  if (std::isnan(x)) return "nan";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc{}) throw std::runtime_error("format_real: to_chars failed");
  return std::string(buf, end);
}

inline double parse_real(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) throw std::invalid_argument("not a real: '" + s + "'");
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

// One row of the per-run metrics CSV.
struct MetricsRow {
  std::uint64_t round = 0;
  std::string algorithm;
  std::string opt_c;
  std::string opt_s;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double test_acc = 0.0;
  double best_acc = 0.0;
  double wall_ms = 0.0;
  std::uint64_t payload_bytes = 0;
  std::string status;

  // NaN-aware: two NaN fields compare equal.
  friend bool operator==(const MetricsRow& a, const MetricsRow& b) {
    auto eq = [](double x, double y) { return std::isnan(x) ? std::isnan(y) : x == y; };
    return a.round == b.round && a.algorithm == b.algorithm && a.opt_c == b.opt_c && a.opt_s == b.opt_s &&
           eq(a.train_loss, b.train_loss) && eq(a.test_loss, b.test_loss) && eq(a.test_acc, b.test_acc) &&
           eq(a.best_acc, b.best_acc) && eq(a.wall_ms, b.wall_ms) && a.payload_bytes == b.payload_bytes &&
           a.status == b.status;
  }
};

inline constexpr const char* kMetricsHeader =
    "round,algorithm_name,opt_c,opt_s,train_loss,test_loss,test_acc,best_acc,wall_ms,payload_bytes,status";

inline std::vector<MetricsRow> metrics_rows(const ExperimentConfig& cfg, const ExperimentResult& res) {
  std::vector<MetricsRow> rows;
  for (const auto& m : res.metrics)
    rows.push_back({m.round, res.algorithm, std::string(token(cfg.opt_c)), std::string(token(cfg.opt_s)),
                    m.train_loss, m.test_loss, m.test_acc, m.best_acc, m.wall_ms, m.payload_bytes,
                    status_token(m.status)});
  return rows;
}

inline std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.round) + "," + r.algorithm + "," + r.opt_c + "," + r.opt_s + "," +
           format_real(r.train_loss) + "," + format_real(r.test_loss) + "," + format_real(r.test_acc) + "," +
           format_real(r.best_acc) + "," + format_real(r.wall_ms) + "," + std::to_string(r.payload_bytes) + "," +
           r.status + "\n";
  }
  return out;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << text;
  if (!out.flush()) throw IoError(path.string() + ": write failed");
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void emit_report(const std::vector<MetricsRow>& rows, const std::filesystem::path& path) {
  write_text_file(path, metrics_csv(rows));
}

inline std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw IoError(path.string() + ": bad metrics header");
  std::vector<MetricsRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto c = split_csv_line(line);
    if (c.size() != 11) throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected 11 columns");
    try {
      rows.push_back({std::stoull(c[0]), c[1], c[2], c[3], parse_real(c[4]), parse_real(c[5]), parse_real(c[6]),
                      parse_real(c[7]), parse_real(c[8]), std::stoull(c[9]), c[10]});
    } catch (const std::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

// Flat binary: uint64 element count then the values, both little-endian.
inline void save_params(const ParamVector& p, const std::filesystem::path& path) {
  static_assert(std::endian::native == std::endian::little, "model files are written in native little-endian order");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  const std::uint64_t n = p.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(p.raw().data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!out.flush()) throw IoError(path.string() + ": write failed");
}

inline ParamVector load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open");
  std::uint64_t n = 0;
  if (!in.read(reinterpret_cast<char*>(&n), sizeof n)) throw IoError(path.string() + ": truncated header");
  std::vector<double> v(n);
  if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double))))
    throw IoError(path.string() + ": truncated body");
  return ParamVector(std::move(v));
}

inline std::string model_sidecar(const ModelSpec& spec) {
  std::string s;
  s += "kind = " + std::string(spec.kind == ModelKind::logistic ? "logistic" : "mlp1") + "\n";
  s += "input_dim = " + std::to_string(spec.input_dim) + "\n";
  s += "num_classes = " + std::to_string(spec.num_classes) + "\n";
  if (spec.kind == ModelKind::mlp1) {
    s += "hidden_dim = " + std::to_string(spec.hidden_dim) + "\n";
    s += "activation = " + std::string(spec.activation == Activation::relu ? "relu" : "tanh") + "\n";
  }
  s += "param_count = " + std::to_string(spec.param_count()) + "\n";
  s += "layout = " + layout_description(spec) + "\n";
  s += "encoding = uint64 count, then float64 values, little-endian\n";
  return s;
}

inline void save_model(const ParamVector& p, const ModelSpec& spec, const std::filesystem::path& bin_path) {
  if (p.size() != spec.param_count())
    throw std::invalid_argument("save_model: parameter count does not match the model spec");
  save_params(p, bin_path);
  auto side = bin_path;
  side.replace_extension(".txt");
  write_text_file(side, model_sidecar(spec));
}

}  // namespace comfed
