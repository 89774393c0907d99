#include "jointfit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "jointfit/error.hpp"

namespace jointfit {

JointDataset validate_and_join(std::vector<LongitudinalRecord> longitudinal,
                               std::vector<SurvivalRecord> survival) {
  if (survival.empty()) throw InputError("survival data is empty");
  JointDataset data;
  for (std::size_t i = 0; i < survival.size(); ++i) {
    const auto& s = survival[i];
    if (!(s.time > 0.0) || !std::isfinite(s.time)) {
      throw InputError("survival row " + std::to_string(i + 1) + " (subject " + s.subject_id +
                       "): follow-up time must be positive");
    }
    if (s.event != 0 && s.event != 1) {
      throw InputError("survival row " + std::to_string(i + 1) + " (subject " + s.subject_id +
                       "): event must be 0 or 1");
    }
    if (!data.subject_index_.emplace(s.subject_id, static_cast<int>(i)).second) {
      throw InputError("duplicate survival record for subject " + s.subject_id);
    }
  }
  std::vector<int> subject(longitudinal.size());
  for (std::size_t r = 0; r < longitudinal.size(); ++r) {
    const auto& l = longitudinal[r];
    const auto it = data.subject_index_.find(l.subject_id);
    if (it == data.subject_index_.end()) {
      throw InputError("longitudinal row " + std::to_string(r + 1) + ": orphan subject " +
                       l.subject_id + " has no survival record");
    }
    if (!(l.t >= 0.0) || !std::isfinite(l.t)) {
      throw InputError("longitudinal row " + std::to_string(r + 1) + ": time must be >= 0");
    }
    if (!std::isfinite(l.y)) {
      throw InputError("longitudinal row " + std::to_string(r + 1) + ": column y is not finite");
    }
    const double end = survival[it->second].time;
    if (l.t > end + 1e-9) {
      throw InputError("longitudinal row " + std::to_string(r + 1) + ": measurement at t=" +
                       std::to_string(l.t) + " after follow-up end " + std::to_string(end) +
                       " of subject " + l.subject_id);
    }
    subject[r] = it->second;
  }
  std::vector<std::size_t> order(longitudinal.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (subject[a] != subject[b]) return subject[a] < subject[b];
    return longitudinal[a].t < longitudinal[b].t;
  });
  data.longitudinal_.reserve(longitudinal.size());
  data.record_subject_.reserve(longitudinal.size());
  for (std::size_t r : order) {
    data.longitudinal_.push_back(std::move(longitudinal[r]));
    data.record_subject_.push_back(subject[r]);
  }
  data.survival_ = std::move(survival);
  data.offsets_.assign(data.survival_.size() + 1, 0);
  for (int s : data.record_subject_) ++data.offsets_[static_cast<std::size_t>(s) + 1];
  for (std::size_t i = 1; i < data.offsets_.size(); ++i) data.offsets_[i] += data.offsets_[i - 1];
  return data;
}

namespace {

class Fnv1a {
 public:
  void add(const std::string& s) {
    for (unsigned char c : s) {
      hash_ ^= c;
      hash_ *= 0x100000001b3ULL;
    }
    hash_ ^= 0xff;
    hash_ *= 0x100000001b3ULL;
  }
  void add(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    add(std::string(buf));
  }
  std::string hex() const {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_));
    return buf;
  }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

}  // namespace

std::string JointDataset::fingerprint() const {
  Fnv1a h;
  for (const auto& s : survival_) {
    h.add(s.subject_id);
    h.add(s.time);
    h.add(static_cast<double>(s.event));
    for (const auto& [k, v] : s.covariates) {
      h.add(k);
      h.add(v);
    }
  }
  for (const auto& l : longitudinal_) {
    h.add(l.subject_id);
    h.add(l.t);
    h.add(l.y);
    for (const auto& [k, v] : l.covariates) {
      h.add(k);
      h.add(v);
    }
  }
  return h.hex();
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell += c;
    }
  }
  out.push_back(cell);
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw InputError(path + ": missing header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);
  table.header = split_csv_line(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (cells.size() != table.header.size()) {
      throw InputError(path + ": row " + std::to_string(lineno) + " has " +
                       std::to_string(cells.size()) + " fields, header has " +
                       std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(cells));
  }
  return table;
}

double parse_required(const std::string& cell, const std::string& path, std::size_t row,
                      const std::string& column) {
  std::size_t used = 0;
  double v = std::numeric_limits<double>::quiet_NaN();
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != cell.size() || !std::isfinite(v)) {
    throw InputError(path + ": row " + std::to_string(row) + ", column '" + column +
                     "': invalid or missing value '" + cell + "'");
  }
  return v;
}

double parse_optional(const std::string& cell) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used == cell.size()) return v;
  } catch (const std::exception&) {
  }
  return std::numeric_limits<double>::quiet_NaN();
}

void expect_header(const CsvTable& t, const std::string& path,
                   const std::vector<std::string>& leading) {
  for (std::size_t i = 0; i < leading.size(); ++i) {
    if (i >= t.header.size() || t.header[i] != leading[i]) {
      throw InputError(path + ": expected column " + std::to_string(i + 1) + " to be '" +
                       leading[i] + "'");
    }
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> covariate_names(const std::vector<Covariates>& all) {
  std::set<std::string> names;
  for (const auto& c : all) {
    for (const auto& [k, v] : c) names.insert(k);
  }
  return {names.begin(), names.end()};
}

}  // namespace

std::vector<LongitudinalRecord> read_longitudinal_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  expect_header(t, path, {"id", "time", "y"});
  std::vector<LongitudinalRecord> out;
  out.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    LongitudinalRecord rec;
    rec.subject_id = row[0];
    if (rec.subject_id.empty()) {
      throw InputError(path + ": row " + std::to_string(r + 2) + ", column 'id' is empty");
    }
    rec.t = parse_required(row[1], path, r + 2, "time");
    rec.y = parse_required(row[2], path, r + 2, "y");
    for (std::size_t c = 3; c < row.size(); ++c) rec.covariates[t.header[c]] = parse_optional(row[c]);
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<SurvivalRecord> read_survival_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  expect_header(t, path, {"id", "time", "event"});
  std::vector<SurvivalRecord> out;
  out.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    SurvivalRecord rec;
    rec.subject_id = row[0];
    if (rec.subject_id.empty()) {
      throw InputError(path + ": row " + std::to_string(r + 2) + ", column 'id' is empty");
    }
    rec.time = parse_required(row[1], path, r + 2, "time");
    const double ev = parse_required(row[2], path, r + 2, "event");
    if (ev != 0.0 && ev != 1.0) {
      throw InputError(path + ": row " + std::to_string(r + 2) + ", column 'event' must be 0/1");
    }
    rec.event = static_cast<int>(ev);
    for (std::size_t c = 3; c < row.size(); ++c) rec.covariates[t.header[c]] = parse_optional(row[c]);
    out.push_back(std::move(rec));
  }
  return out;
}

void write_longitudinal_csv(const std::string& path,
                            const std::vector<LongitudinalRecord>& records) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  std::vector<Covariates> all;
  all.reserve(records.size());
  for (const auto& r : records) all.push_back(r.covariates);
  const auto names = covariate_names(all);
  out << "id,time,y";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (const auto& r : records) {
    out << r.subject_id << ',' << format_double(r.t) << ',' << format_double(r.y);
    for (const auto& n : names) {
      const auto it = r.covariates.find(n);
      out << ',';
      if (it != r.covariates.end() && std::isfinite(it->second)) out << format_double(it->second);
    }
    out << '\n';
  }
}

void write_survival_csv(const std::string& path, const std::vector<SurvivalRecord>& records) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  std::vector<Covariates> all;
  all.reserve(records.size());
  for (const auto& r : records) all.push_back(r.covariates);
  const auto names = covariate_names(all);
  out << "id,time,event";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (const auto& r : records) {
    out << r.subject_id << ',' << format_double(r.time) << ',' << r.event;
    for (const auto& n : names) {
      const auto it = r.covariates.find(n);
      out << ',';
      if (it != r.covariates.end() && std::isfinite(it->second)) out << format_double(it->second);
    }
    out << '\n';
  }
}

}  // namespace jointfit
