#pragma once

#include "calendar.hpp"
#include "temporal.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace u5apc {

// One child from the birth-history questionnaire.
struct BirthRecord {
    std::string child_id;
    MonthIndex birth_month = 0;
    std::optional<MonthIndex> death_month;
    MonthIndex interview_month = 0;
    std::string cluster_id;
    std::string region_id;
    bool is_urban = false;
    double weight = 1.0;  // design weight of the responding mother
};

// A single life-month attributed to an age band.
struct PersonMonth {
    int age_band = 0;
    int period = 0;        // calendar year of the life-month
    int cohort = 0;        // calendar year of birth
    int months_at_risk = 0;
    int died = 0;          // 1 only in the band containing the death month
};

// Aggregated deaths/exposure for one (age band, period, cohort, cluster).
struct CountCell {
    int age_band = 0;
    int period = 0;
    int cohort = 0;
    std::string cluster_id;
    std::string region_id;
    bool is_urban = false;
    long long deaths = 0;    // y
    long long exposure = 0;  // n, person-months
};

// Validates record invariants; returns a diagnostic for rejected records.
std::optional<std::string> validate_record(const BirthRecord& record);

// Expands one child into per-(band, period) months at risk. Exposure runs
// from age 0 up to the earlier of the death month and the month before the
// interview; ages at or past 60 months contribute nothing. Throws
// std::invalid_argument when the record fails validation.
std::vector<PersonMonth> expand_birth_history(const BirthRecord& record,
                                              const AgeBandSchema& schema);

// Sums died flags and months at risk per distinct (band, period, cohort,
// cluster) key. Cells with zero exposure are never emitted.
struct ExpandedRecord {
    const BirthRecord* record;
    std::vector<PersonMonth> months;
};
std::vector<CountCell> aggregate_cells(const std::vector<ExpandedRecord>& rows);

struct RejectedRow {
    long long row = 0;  // 1-based data row number
    std::string reason;
};

struct SurveyData {
    std::vector<BirthRecord> records;
    std::vector<RejectedRow> rejections;
};

// Loads the survey CSV (columns: child_id, birth_month, death_month,
// interview_month, cluster_id, region_id, urban, weight). Malformed rows are
// collected into the rejection report, never silently dropped.
SurveyData load_survey_csv(const std::filesystem::path& path);

void write_rejections_csv(const std::vector<RejectedRow>& rejections,
                          const std::filesystem::path& path);

// Expansion + aggregation over a whole survey, with per-record validation
// feeding the rejection report.
std::vector<CountCell> expand_and_aggregate(const std::vector<BirthRecord>& records,
                                            const AgeBandSchema& schema,
                                            std::vector<RejectedRow>* rejections = nullptr);

void write_cells_csv(const std::vector<CountCell>& cells, const std::filesystem::path& path);
std::vector<CountCell> read_cells_csv(const std::filesystem::path& path);

} // namespace u5apc
