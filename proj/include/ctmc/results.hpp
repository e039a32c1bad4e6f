#pragma once

// Append-only result rows and their CSV form. The header never changes;
// values are written with %.17g so a CSV reproduces the doubles exactly.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace ctmc {

struct ResultRow {
  std::string experiment_id;
  std::string sampler;
  std::int64_t nfe = 0;
  std::uint64_t seed = 0;
  std::string metric;
  double value = 0.0;
  std::string flags;

  bool operator==(const ResultRow&) const = default;
};

class ResultTable {
 public:
  static constexpr int kSchemaVersion = 1;
  static constexpr const char* kHeader = "experiment_id,sampler,nfe,seed,metric,value,flags";

  void add(ResultRow row) { rows_.push_back(std::move(row)); }
  void append(const ResultTable& other) { rows_.insert(rows_.end(), other.rows_.begin(), other.rows_.end()); }
  const std::vector<ResultRow>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }

  /// Rows matching every non-empty filter.
  std::vector<ResultRow> select(const std::string& experiment_id, const std::string& sampler,
                                const std::string& metric) const;

  void write_csv(std::ostream& os) const;
  std::string to_csv() const;
  /// Writes to `path`, or to stdout when path is empty or "-".
  void save(const std::string& path) const;

  static ResultTable parse_csv(const std::string& text);

 private:
  std::vector<ResultRow> rows_;
};

std::string format_double(double v);

}  // namespace ctmc
