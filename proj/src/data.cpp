#include "data.hpp"

#include "csv.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>
#include <tuple>

namespace u5apc {

std::optional<std::string> validate_record(const BirthRecord& record) {
    if (!(record.weight > 0.0)) return "non-positive weight";
    if (record.death_month) {
        if (*record.death_month < record.birth_month) return "death before birth";
        if (*record.death_month > record.interview_month) return "death after interview";
    }
    if (record.interview_month < record.birth_month) return "birth after interview";
    return std::nullopt;
}

std::vector<PersonMonth> expand_birth_history(const BirthRecord& record,
                                              const AgeBandSchema& schema) {
    if (auto why = validate_record(record)) {
        throw std::invalid_argument("invalid birth record: " + *why);
    }
    std::vector<PersonMonth> out;
    // The interview month is incomplete, so exposure stops the month before;
    // a death recorded in the interview month is censored out with it.
    const int censor_age = record.interview_month - record.birth_month;  // exclusive
    int last_age = censor_age - 1;
    int death_age = -1;
    if (record.death_month && *record.death_month < record.interview_month) {
        death_age = *record.death_month - record.birth_month;
        last_age = std::min(last_age, death_age);
    }
    last_age = std::min(last_age, schema.boundaries.back() - 1);
    for (int a = 0; a <= last_age; ++a) {
        const MonthIndex life_month = record.birth_month + a;
        PersonMonth pm;
        pm.age_band = schema.band_of_age(a);
        pm.period = year_of(life_month);
        pm.cohort = year_of(record.birth_month);
        pm.months_at_risk = 1;
        pm.died = (a == death_age) ? 1 : 0;
        if (!out.empty() && out.back().age_band == pm.age_band &&
            out.back().period == pm.period) {
            out.back().months_at_risk += 1;
            out.back().died += pm.died;
        } else {
            out.push_back(pm);
        }
    }
    return out;
}

std::vector<CountCell> aggregate_cells(const std::vector<ExpandedRecord>& rows) {
    // Key: (band, period, cohort, cluster). Region/stratum ride along with
    // the cluster.
    struct Key {
        int band, period, cohort;
        std::string cluster;
        bool operator<(const Key& o) const {
            return std::tie(band, period, cohort, cluster) <
                   std::tie(o.band, o.period, o.cohort, o.cluster);
        }
    };
    std::map<Key, CountCell> cells;
    for (const auto& row : rows) {
        for (const auto& pm : row.months) {
            Key key{pm.age_band, pm.period, pm.cohort, row.record->cluster_id};
            auto [it, inserted] = cells.try_emplace(key);
            CountCell& cell = it->second;
            if (inserted) {
                cell.age_band = pm.age_band;
                cell.period = pm.period;
                cell.cohort = pm.cohort;
                cell.cluster_id = row.record->cluster_id;
                cell.region_id = row.record->region_id;
                cell.is_urban = row.record->is_urban;
            }
            cell.deaths += pm.died;
            cell.exposure += pm.months_at_risk;
        }
    }
    std::vector<CountCell> out;
    out.reserve(cells.size());
    for (auto& [key, cell] : cells) {
        if (cell.exposure >= 1) out.push_back(std::move(cell));
    }
    return out;
}

SurveyData load_survey_csv(const std::filesystem::path& path) {
    const CsvTable table = read_csv(path);
    const auto c_child = table.column("child_id");
    const auto c_birth = table.column("birth_month");
    const auto c_death = table.column("death_month");
    const auto c_interview = table.column("interview_month");
    const auto c_cluster = table.column("cluster_id");
    const auto c_region = table.column("region_id");
    const auto c_urban = table.column("urban");
    const auto c_weight = table.column("weight");

    SurveyData data;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const long long rowno = static_cast<long long>(r) + 1;
        if (row.size() < table.header.size()) {
            data.rejections.push_back({rowno, "wrong field count"});
            continue;
        }
        BirthRecord rec;
        try {
            rec.child_id = row[c_child];
            rec.birth_month = parse_month(row[c_birth]);
            if (!row[c_death].empty()) rec.death_month = parse_month(row[c_death]);
            rec.interview_month = parse_month(row[c_interview]);
            rec.cluster_id = row[c_cluster];
            rec.region_id = row[c_region];
            if (row[c_urban] != "0" && row[c_urban] != "1") {
                throw std::invalid_argument("urban flag must be 0 or 1");
            }
            rec.is_urban = row[c_urban] == "1";
            if (row[c_weight].empty()) throw std::invalid_argument("missing weight");
            std::size_t pos = 0;
            rec.weight = std::stod(row[c_weight], &pos);
            if (pos != row[c_weight].size()) throw std::invalid_argument("malformed weight");
            if (rec.region_id.empty()) throw std::invalid_argument("missing region id");
        } catch (const std::exception& e) {
            data.rejections.push_back({rowno, e.what()});
            continue;
        }
        if (auto why = validate_record(rec)) {
            data.rejections.push_back({rowno, *why});
            continue;
        }
        data.records.push_back(std::move(rec));
    }
    return data;
}

void write_rejections_csv(const std::vector<RejectedRow>& rejections,
                          const std::filesystem::path& path) {
    CsvWriter out(path);
    out.row({"row", "reason"});
    for (const auto& rej : rejections) {
        std::string reason = rej.reason;
        std::replace(reason.begin(), reason.end(), ',', ';');
        out.row({std::to_string(rej.row), reason});
    }
    out.close();
}

std::vector<CountCell> expand_and_aggregate(const std::vector<BirthRecord>& records,
                                            const AgeBandSchema& schema,
                                            std::vector<RejectedRow>* rejections) {
    std::vector<std::vector<PersonMonth>> expanded(records.size());
    std::vector<ExpandedRecord> rows;
    rows.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (auto why = validate_record(records[i])) {
            if (rejections) {
                rejections->push_back({static_cast<long long>(i) + 1, *why});
            }
            continue;
        }
        expanded[i] = expand_birth_history(records[i], schema);
        rows.push_back({&records[i], std::move(expanded[i])});
    }
    return aggregate_cells(rows);
}

void write_cells_csv(const std::vector<CountCell>& cells, const std::filesystem::path& path) {
    CsvWriter out(path);
    out.row({"age_band", "period", "cohort", "cluster_id", "region_id", "urban", "deaths",
             "exposure"});
    for (const auto& c : cells) {
        out.row({std::to_string(c.age_band), std::to_string(c.period), std::to_string(c.cohort),
                 c.cluster_id, c.region_id, c.is_urban ? "1" : "0", std::to_string(c.deaths),
                 std::to_string(c.exposure)});
    }
    out.close();
}

std::vector<CountCell> read_cells_csv(const std::filesystem::path& path) {
    const CsvTable table = read_csv(path);
    const auto c_band = table.column("age_band");
    const auto c_period = table.column("period");
    const auto c_cohort = table.column("cohort");
    const auto c_cluster = table.column("cluster_id");
    const auto c_region = table.column("region_id");
    const auto c_urban = table.column("urban");
    const auto c_deaths = table.column("deaths");
    const auto c_exposure = table.column("exposure");
    std::vector<CountCell> cells;
    cells.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        CountCell c;
        c.age_band = std::stoi(row[c_band]);
        c.period = std::stoi(row[c_period]);
        c.cohort = std::stoi(row[c_cohort]);
        c.cluster_id = row[c_cluster];
        c.region_id = row[c_region];
        c.is_urban = row[c_urban] == "1";
        c.deaths = std::stoll(row[c_deaths]);
        c.exposure = std::stoll(row[c_exposure]);
        cells.push_back(std::move(c));
    }
    return cells;
}

} // namespace u5apc
