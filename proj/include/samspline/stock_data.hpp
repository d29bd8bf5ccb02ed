#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace samspline {

// Ages as they appear in the data files. The model works with zero-based
// age indices 0..count()-1; the last index is the plus group.
struct AgeRange {
  int min_age = 1;
  int max_age = 2;

  int count() const { return max_age - min_age + 1; }
  int index(int age) const { return age - min_age; }
  int age(int index) const { return min_age + index; }
  bool contains(int age) const { return age >= min_age && age <= max_age; }
  bool operator==(const AgeRange&) const = default;
};

enum class FleetKind { Catch, Survey };

struct FleetMeta {
  int fleet = 0;       // internal id: 0 is the catch fleet, surveys 1..J by first year
  FleetKind kind = FleetKind::Catch;
  double timing = 0.0;  // fraction of the year
  int first_year = 0;
  int last_year = 0;
  int source_id = 0;    // id used in the input files
  bool operator==(const FleetMeta&) const = default;
};

struct ObsRecord {
  int year = 0;
  int fleet = 0;
  int age = 0;  // data age, not index
  double value = 0.0;
  bool missing = false;
  bool operator==(const ObsRecord&) const = default;
};

enum class AuxKind {
  NaturalMortality,
  StockWeight,
  CatchWeight,
  Maturity,
  PropFBeforeSpawn,
  PropMBeforeSpawn,
};
inline constexpr int kAuxKindCount = 6;

const char* aux_file_name(AuxKind kind);

// Year x age table. Lookups past the final row reuse the final row, which is
// what forecasts beyond the data need.
class AuxTable {
 public:
  AuxTable() = default;
  AuxTable(AuxKind kind, int first_year, Eigen::MatrixXd values)
      : kind_(kind), first_year_(first_year), values_(std::move(values)) {}

  AuxKind kind() const { return kind_; }
  int first_year() const { return first_year_; }
  int last_year() const { return first_year_ + static_cast<int>(values_.rows()) - 1; }
  const Eigen::MatrixXd& values() const { return values_; }

  double at(int year, int age_index) const;
  Eigen::VectorXd row(int year) const;

  bool operator==(const AuxTable& other) const {
    return kind_ == other.kind_ && first_year_ == other.first_year_ &&
           values_.rows() == other.values_.rows() && values_.cols() == other.values_.cols() &&
           values_ == other.values_;
  }

 private:
  AuxKind kind_ = AuxKind::NaturalMortality;
  int first_year_ = 0;
  Eigen::MatrixXd values_;
};

struct StockData {
  AgeRange ages;
  std::vector<int> years;  // contiguous, ascending
  std::vector<FleetMeta> fleets;  // index == internal fleet id
  std::vector<ObsRecord> obs;
  std::array<AuxTable, kAuxKindCount> aux;

  int n_ages() const { return ages.count(); }
  int n_years() const { return static_cast<int>(years.size()); }
  int first_year() const { return years.front(); }
  int last_year() const { return years.back(); }
  int n_surveys() const { return static_cast<int>(fleets.size()) - 1; }
  int year_index(int year) const { return year - years.front(); }
  const AuxTable& table(AuxKind kind) const { return aux[static_cast<int>(kind)]; }

  // Ages a fleet has records for (missing or not), as sorted age indices.
  std::vector<int> observed_age_indices(int fleet) const;

  bool operator==(const StockData&) const = default;
};

// Checks every data invariant; throws Error(InvariantViolation) on failure.
// Masked training sets may leave a year without catch data; pass
// require_catch_each_year = false for those.
void validate(const StockData& data, bool require_catch_each_year = true);

// Reads obs.csv, fleets.csv and the auxiliary tables from a directory.
StockData load_stock(const std::filesystem::path& dir);

// Writes the same layout load_stock reads. Values are written with enough
// digits to round-trip exactly.
void save_stock(const StockData& data, const std::filesystem::path& dir);

// Copy of data with the records of one year flagged missing, optionally
// restricted to a set of internal fleet ids.
StockData mask_observations(const StockData& data, int year,
                            const std::optional<std::vector<int>>& fleets = std::nullopt);

}  // namespace samspline
