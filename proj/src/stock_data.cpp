#include "samspline/stock_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <tuple>

#include "samspline/csv.hpp"
#include "samspline/error.hpp"

namespace samspline {
namespace fs = std::filesystem;

const char* aux_file_name(AuxKind kind) {
  switch (kind) {
    case AuxKind::NaturalMortality: return "natmort.csv";
    case AuxKind::StockWeight: return "stockweight.csv";
    case AuxKind::CatchWeight: return "catchweight.csv";
    case AuxKind::Maturity: return "maturity.csv";
    case AuxKind::PropFBeforeSpawn: return "propf.csv";
    case AuxKind::PropMBeforeSpawn: return "propm.csv";
  }
  return "";
}

double AuxTable::at(int year, int age_index) const {
  if (year < first_year_) {
    throw Error(ErrorCode::YearOutOfRange, std::string(aux_file_name(kind_)) + ": year " +
                                               std::to_string(year) + " precedes table");
  }
  int row = std::min(year - first_year_, static_cast<int>(values_.rows()) - 1);
  return values_(row, age_index);
}

Eigen::VectorXd AuxTable::row(int year) const {
  Eigen::VectorXd out(values_.cols());
  for (int a = 0; a < values_.cols(); ++a) out(a) = at(year, a);
  return out;
}

std::vector<int> StockData::observed_age_indices(int fleet) const {
  std::set<int> idx;
  for (const auto& r : obs) {
    if (r.fleet == fleet) idx.insert(ages.index(r.age));
  }
  return {idx.begin(), idx.end()};
}

namespace {

[[noreturn]] void violation(const std::string& what) {
  throw Error(ErrorCode::InvariantViolation, what);
}

void validate_aux(const StockData& data, const AuxTable& t) {
  const std::string name = aux_file_name(t.kind());
  if (t.values().cols() != data.n_ages()) {
    violation(name + ": expected " + std::to_string(data.n_ages()) + " age columns");
  }
  if (t.values().rows() == 0) violation(name + ": no rows");
  if (t.first_year() > data.first_year()) {
    violation(name + ": does not cover year " + std::to_string(data.first_year()));
  }
  for (int r = 0; r < t.values().rows(); ++r) {
    for (int c = 0; c < t.values().cols(); ++c) {
      const double v = t.values()(r, c);
      const std::string loc = name + " year " + std::to_string(t.first_year() + r) + " age " +
                              std::to_string(data.ages.age(c));
      if (!std::isfinite(v)) violation(loc + ": non-finite value");
      switch (t.kind()) {
        case AuxKind::NaturalMortality:
        case AuxKind::StockWeight:
        case AuxKind::CatchWeight:
          if (v < 0) violation(loc + ": negative value");
          break;
        case AuxKind::Maturity:
        case AuxKind::PropFBeforeSpawn:
        case AuxKind::PropMBeforeSpawn:
          if (v < 0 || v > 1) violation(loc + ": value outside [0,1]");
          break;
      }
    }
  }
}

}  // namespace

void validate(const StockData& data, bool require_catch_each_year) {
  if (data.ages.min_age < 0) violation("min_age must be >= 0");
  if (data.ages.max_age <= data.ages.min_age) violation("max_age must exceed min_age");
  if (data.years.empty()) violation("no years");
  for (size_t i = 1; i < data.years.size(); ++i) {
    if (data.years[i] != data.years[i - 1] + 1) {
      violation("years are not contiguous at " + std::to_string(data.years[i - 1]));
    }
  }
  if (data.fleets.empty() || data.fleets[0].kind != FleetKind::Catch) {
    violation("fleet 0 must be the catch fleet");
  }
  for (size_t f = 0; f < data.fleets.size(); ++f) {
    const auto& m = data.fleets[f];
    if (m.fleet != static_cast<int>(f)) violation("fleet ids must be 0..J in order");
    if (f > 0 && m.kind != FleetKind::Survey) violation("only one catch fleet is supported");
    if (m.kind == FleetKind::Catch && m.timing != 0.0) violation("catch fleet timing must be 0");
    if (m.timing < 0.0 || m.timing >= 1.0) {
      violation("fleet " + std::to_string(m.source_id) + ": timing outside [0,1)");
    }
  }
  std::set<std::tuple<int, int, int>> seen;
  std::vector<bool> catch_year(data.years.size(), false);
  for (const auto& r : data.obs) {
    const std::string loc = "record (year " + std::to_string(r.year) + ", fleet " +
                            std::to_string(r.fleet) + ", age " + std::to_string(r.age) + ")";
    if (r.year < data.first_year() || r.year > data.last_year()) violation(loc + ": year out of range");
    if (!data.ages.contains(r.age)) violation(loc + ": age out of range");
    if (r.fleet < 0 || r.fleet >= static_cast<int>(data.fleets.size())) {
      violation(loc + ": unknown fleet");
    }
    if (!r.missing && !(r.value > 0.0 && std::isfinite(r.value))) {
      violation(loc + ": value must be positive");
    }
    if (!seen.insert({r.year, r.fleet, r.age}).second) violation(loc + ": duplicate");
    if (r.fleet == 0 && !r.missing) catch_year[data.year_index(r.year)] = true;
  }
  for (size_t i = 0; i < catch_year.size(); ++i) {
    if (require_catch_each_year && !catch_year[i]) {
      violation("year " + std::to_string(data.years[i]) + " has no catch observation");
    }
  }
  for (int k = 0; k < kAuxKindCount; ++k) {
    if (data.aux[k].kind() != static_cast<AuxKind>(k)) violation("aux tables out of order");
    validate_aux(data, data.aux[k]);
  }
}

namespace {

const csv::Table& require_header(const csv::Table& t, const std::vector<std::string>& cols,
                                 const std::string& name) {
  if (t.header != cols) {
    std::string want;
    for (const auto& c : cols) want += (want.empty() ? "" : ",") + c;
    throw Error(ErrorCode::ParseError, name + ":1: header must be '" + want + "'");
  }
  return t;
}

AuxTable read_aux(const fs::path& dir, AuxKind kind, const AgeRange& ages) {
  const std::string name = aux_file_name(kind);
  const fs::path path = dir / name;
  if (!fs::exists(path)) throw Error(ErrorCode::MissingFile, path.string());
  csv::Table t = csv::read(path);
  if (t.header.empty() || t.header[0] != "year") {
    throw Error(ErrorCode::ParseError, name + ":1: first column must be 'year'");
  }
  std::map<int, int> col_of_age;
  for (size_t c = 1; c < t.header.size(); ++c) {
    col_of_age[csv::parse_int(t.header[c], name, 1)] = static_cast<int>(c);
  }
  for (int a = ages.min_age; a <= ages.max_age; ++a) {
    if (!col_of_age.count(a)) {
      throw Error(ErrorCode::InvariantViolation, name + ": missing column for age " + std::to_string(a));
    }
  }
  std::map<int, size_t> row_of_year;
  for (size_t r = 0; r < t.rows.size(); ++r) {
    int y = csv::parse_int(t.rows[r][0], name, t.line_numbers[r]);
    if (!row_of_year.emplace(y, r).second) {
      throw Error(ErrorCode::InvariantViolation, name + ": duplicate year " + std::to_string(y));
    }
  }
  if (row_of_year.empty()) throw Error(ErrorCode::InvariantViolation, name + ": no rows");
  const int first = row_of_year.begin()->first;
  const int last = row_of_year.rbegin()->first;
  if (static_cast<int>(row_of_year.size()) != last - first + 1) {
    throw Error(ErrorCode::InvariantViolation, name + ": years are not contiguous");
  }
  Eigen::MatrixXd values(last - first + 1, ages.count());
  for (const auto& [year, r] : row_of_year) {
    for (int a = 0; a < ages.count(); ++a) {
      const auto& cell = t.rows[r][col_of_age[ages.age(a)]];
      values(year - first, a) = csv::parse_double(cell, name, t.line_numbers[r]);
    }
  }
  return AuxTable(kind, first, std::move(values));
}

}  // namespace

StockData load_stock(const fs::path& dir) {
  for (const char* f : {"obs.csv", "fleets.csv"}) {
    if (!fs::exists(dir / f)) throw Error(ErrorCode::MissingFile, (dir / f).string());
  }
  csv::Table ft = csv::read(dir / "fleets.csv");
  require_header(ft, {"fleet", "kind", "timing"}, "fleets.csv");
  struct RawFleet {
    int id;
    FleetKind kind;
    double timing;
  };
  std::vector<RawFleet> raw_fleets;
  std::set<int> fleet_ids;
  for (size_t r = 0; r < ft.rows.size(); ++r) {
    const int line = ft.line_numbers[r];
    RawFleet f;
    f.id = csv::parse_int(ft.rows[r][0], "fleets.csv", line);
    const auto& kind = ft.rows[r][1];
    if (kind == "catch") {
      f.kind = FleetKind::Catch;
    } else if (kind == "survey") {
      f.kind = FleetKind::Survey;
    } else {
      throw Error(ErrorCode::ParseError,
                  "fleets.csv:" + std::to_string(line) + ": kind must be catch or survey");
    }
    f.timing = csv::parse_double(ft.rows[r][2], "fleets.csv", line);
    if (!fleet_ids.insert(f.id).second) {
      throw Error(ErrorCode::InvariantViolation, "fleets.csv: duplicate fleet " + std::to_string(f.id));
    }
    raw_fleets.push_back(f);
  }
  if (std::count_if(raw_fleets.begin(), raw_fleets.end(),
                    [](const RawFleet& f) { return f.kind == FleetKind::Catch; }) != 1) {
    throw Error(ErrorCode::InvariantViolation, "fleets.csv: exactly one catch fleet required");
  }

  csv::Table ot = csv::read(dir / "obs.csv");
  require_header(ot, {"year", "fleet", "age", "value"}, "obs.csv");
  std::vector<ObsRecord> records;
  records.reserve(ot.rows.size());
  for (size_t r = 0; r < ot.rows.size(); ++r) {
    const int line = ot.line_numbers[r];
    ObsRecord rec;
    rec.year = csv::parse_int(ot.rows[r][0], "obs.csv", line);
    rec.fleet = csv::parse_int(ot.rows[r][1], "obs.csv", line);
    rec.age = csv::parse_int(ot.rows[r][2], "obs.csv", line);
    auto v = csv::parse_value(ot.rows[r][3], "obs.csv", line);
    rec.missing = !v.has_value();
    rec.value = v.value_or(0.0);
    if (!fleet_ids.count(rec.fleet)) {
      throw Error(ErrorCode::InvariantViolation,
                  "obs.csv:" + std::to_string(line) + ": fleet " + std::to_string(rec.fleet) +
                      " not in fleets.csv");
    }
    if (!rec.missing && !(rec.value > 0.0)) {
      throw Error(ErrorCode::InvariantViolation,
                  "obs.csv:" + std::to_string(line) + ": value must be positive");
    }
    records.push_back(rec);
  }
  if (records.empty()) throw Error(ErrorCode::InvariantViolation, "obs.csv: no records");

  StockData data;
  auto [amin, amax] = std::minmax_element(records.begin(), records.end(),
                                          [](const auto& a, const auto& b) { return a.age < b.age; });
  data.ages = {amin->age, amax->age};
  auto [ymin, ymax] = std::minmax_element(
      records.begin(), records.end(), [](const auto& a, const auto& b) { return a.year < b.year; });
  for (int y = ymin->year; y <= ymax->year; ++y) data.years.push_back(y);

  // Surveys are ordered by the first year they report data; source id breaks ties.
  std::map<int, std::pair<int, int>> span;  // source id -> (first, last)
  for (const auto& rec : records) {
    auto it = span.find(rec.fleet);
    if (it == span.end()) {
      span[rec.fleet] = {rec.year, rec.year};
    } else {
      it->second.first = std::min(it->second.first, rec.year);
      it->second.second = std::max(it->second.second, rec.year);
    }
  }
  std::vector<RawFleet> surveys;
  const RawFleet* catch_fleet = nullptr;
  for (const auto& f : raw_fleets) {
    if (f.kind == FleetKind::Catch) {
      catch_fleet = &f;
    } else if (span.count(f.id)) {
      surveys.push_back(f);
    }
  }
  std::sort(surveys.begin(), surveys.end(), [&](const RawFleet& a, const RawFleet& b) {
    return std::make_pair(span[a.id].first, a.id) < std::make_pair(span[b.id].first, b.id);
  });
  std::map<int, int> internal_id;
  auto add_fleet = [&](const RawFleet& f) {
    FleetMeta m;
    m.fleet = static_cast<int>(data.fleets.size());
    m.kind = f.kind;
    m.timing = f.timing;
    m.source_id = f.id;
    auto it = span.find(f.id);
    if (it != span.end()) {
      m.first_year = it->second.first;
      m.last_year = it->second.second;
    }
    internal_id[f.id] = m.fleet;
    data.fleets.push_back(m);
  };
  add_fleet(*catch_fleet);
  for (const auto& f : surveys) add_fleet(f);
  for (auto& rec : records) rec.fleet = internal_id.at(rec.fleet);
  std::sort(records.begin(), records.end(), [](const ObsRecord& a, const ObsRecord& b) {
    return std::tie(a.fleet, a.year, a.age) < std::tie(b.fleet, b.year, b.age);
  });
  data.obs = std::move(records);

  for (int k = 0; k < kAuxKindCount; ++k) {
    data.aux[k] = read_aux(dir, static_cast<AuxKind>(k), data.ages);
  }
  validate(data);
  return data;
}

void save_stock(const StockData& data, const fs::path& dir) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "fleets.csv", std::ios::binary);
    out << "fleet,kind,timing\n";
    for (const auto& f : data.fleets) {
      out << f.source_id << ',' << (f.kind == FleetKind::Catch ? "catch" : "survey") << ','
          << csv::format_double(f.timing) << '\n';
    }
  }
  {
    std::ofstream out(dir / "obs.csv", std::ios::binary);
    out << "year,fleet,age,value\n";
    for (const auto& r : data.obs) {
      out << r.year << ',' << data.fleets[r.fleet].source_id << ',' << r.age << ','
          << (r.missing ? std::string("NA") : csv::format_double(r.value)) << '\n';
    }
  }
  for (const auto& t : data.aux) {
    std::ofstream out(dir / aux_file_name(t.kind()), std::ios::binary);
    out << "year";
    for (int a = 0; a < data.n_ages(); ++a) out << ',' << data.ages.age(a);
    out << '\n';
    for (int r = 0; r < t.values().rows(); ++r) {
      out << t.first_year() + r;
      for (int a = 0; a < t.values().cols(); ++a) out << ',' << csv::format_double(t.values()(r, a));
      out << '\n';
    }
  }
}

StockData mask_observations(const StockData& data, int year,
                            const std::optional<std::vector<int>>& fleets) {
  if (data.years.empty() || year < data.first_year() || year > data.last_year()) {
    throw Error(ErrorCode::YearOutOfRange, "year " + std::to_string(year) + " not in data");
  }
  StockData out = data;
  for (auto& r : out.obs) {
    if (r.year != year) continue;
    if (fleets && std::find(fleets->begin(), fleets->end(), r.fleet) == fleets->end()) continue;
    r.missing = true;
  }
  return out;
}

}  // namespace samspline
