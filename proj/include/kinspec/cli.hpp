#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "kinspec/operators.hpp"

namespace kinspec::cli {

enum class ValueType { Real, Int, Text, List, Bool };

struct ConfigKey {
  std::string key;
  ValueType type;
  std::string def;
  std::string doc;
};

// Every accepted key with its default; the single place defaults live.
const std::vector<ConfigKey>& config_registry();

class Config {
 public:
  static Config defaults();
  // `key = value` lines, `#` comments; unknown keys, type and range errors carry the line number
  static Config parse(const std::string& text, const std::string& source = "<config>");
  static Config load(const std::string& path);

  double real(const std::string& key) const;
  int integer(const std::string& key) const;
  bool flag(const std::string& key) const;
  const std::string& text(const std::string& key) const;
  std::vector<double> list(const std::string& key) const;
  void set(const std::string& key, const std::string& value, int line = 0);

  KernelParams kernel() const;
  GridPtr grid() const;
  AssemblyOptions assembly() const;
  nlohmann::json to_json() const;

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, int> lines_;  // 0: default
  std::string source_;
  void validate() const;
  [[noreturn]] void fail(const std::string& key, const std::string& msg) const;
};

// Tag -> statement certified by a pass/fail entry of a summary.
const std::map<std::string, std::string>& check_registry();

class Summary {
 public:
  Summary(const std::string& command, const Config& cfg);
  // measured value against a bound; tags must be registered
  void check(const std::string& tag, double measured, double bound, bool pass, const std::string& detail = "");
  nlohmann::json& data() { return j_["results"]; }
  bool all_pass() const;
  nlohmann::json to_json() const;

 private:
  nlohmann::json j_;
};

static constexpr int kSchemaVersion = 1;
static constexpr const char* kCodeVersion = "kinspec-1";

// RFC 4180 CSV; reals with 17 significant digits.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);
  CsvWriter& add(double v);
  CsvWriter& add(long long v);
  CsvWriter& add(int v) { return add(static_cast<long long>(v)); }
  CsvWriter& add(const std::string& v);
  void end_row();

 private:
  std::string path_;
  std::size_t cols_ = 0, pending_ = 0;
  std::string buf_;
  void field(const std::string& s);
};
std::string format_real(double v);

// Binary layout (little-endian):
//   char[8] "KINSPEC\0", u32 version, u32 d, f64 gamma, u64 grid hash, u64 content key, u32 count,
//   then `count` records of u64 rows, u64 cols, rows*cols complex entries (f64 re, f64 im) row-major.
struct CacheHeader {
  std::uint32_t version = 1;
  std::uint32_t d = 3;
  double gamma = 0.0;
  std::uint64_t grid_hash = 0;
  std::uint64_t key = 0;
};
void write_cache(const std::string& path, const CacheHeader& h, const std::vector<Eigen::MatrixXcd>& records);
// Throws Io on a missing or malformed file, Precondition when the header differs from `expect`.
std::vector<Eigen::MatrixXcd> read_cache(const std::string& path, const CacheHeader& expect);
std::uint64_t content_key(const Config& cfg);
std::uint64_t operator_hash(const Eigen::MatrixXd& m);

struct SystemSource {
  LinearSystem system;
  bool from_cache = false;
  std::string path;
  std::uint64_t hash = 0;  // of the nodal K payload
};
SystemSource load_system(const Config& cfg, const std::string& cache_dir, bool use_cache);

// Runs one command; writes <out>/<command>*.csv and <out>/<command>.json. Returns the summary.
nlohmann::json run(const std::string& command, const Config& cfg, const std::string& out, bool use_cache);
const std::vector<std::string>& commands();

}  // namespace kinspec::cli
