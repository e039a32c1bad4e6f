#include "ctmc/results.hpp"

#include "ctmc/process.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace ctmc {

namespace {

// Fields never contain newlines; commas and quotes get RFC 4180 quoting.
std::string quote(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<ResultRow> ResultTable::select(const std::string& experiment_id, const std::string& sampler,
                                           const std::string& metric) const {
  std::vector<ResultRow> out;
  for (const auto& r : rows_) {
    if (!experiment_id.empty() && r.experiment_id != experiment_id) continue;
    if (!sampler.empty() && r.sampler != sampler) continue;
    if (!metric.empty() && r.metric != metric) continue;
    out.push_back(r);
  }
  return out;
}

void ResultTable::write_csv(std::ostream& os) const {
  os << kHeader << '\n';
  for (const auto& r : rows_) {
    os << quote(r.experiment_id) << ',' << quote(r.sampler) << ',' << r.nfe << ',' << r.seed << ','
       << quote(r.metric) << ',' << format_double(r.value) << ',' << quote(r.flags) << '\n';
  }
}

std::string ResultTable::to_csv() const {
  std::ostringstream os;
  write_csv(os);
  return os.str();
}

void ResultTable::save(const std::string& path) const {
  if (path.empty() || path == "-") {
    write_csv(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  write_csv(f);
}

ResultTable ResultTable::parse_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kHeader) throw DomainError("CSV header mismatch");
  ResultTable t;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_line(line);
    if (f.size() != 7) throw DomainError("CSV row has " + std::to_string(f.size()) + " fields");
    ResultRow r;
    r.experiment_id = f[0];
    r.sampler = f[1];
    r.nfe = std::stoll(f[2]);
    r.seed = std::stoull(f[3]);
    r.metric = f[4];
    r.value = std::strtod(f[5].c_str(), nullptr);
    r.flags = f[6];
    t.add(std::move(r));
  }
  return t;
}

}  // namespace ctmc
