#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

namespace u5apc {

// Minimal CSV support for the file schemas this project reads and writes.
// Fields are comma separated without quoting; none of our schemas carry
// embedded commas. CRLF input is tolerated.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Index of a required column; throws std::runtime_error when missing.
    std::size_t column(const std::string& name) const;
    // Index of an optional column, -1 when absent.
    long long column_if_present(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

// Buffered writer with printf-style numeric formatting so reruns are
// byte-identical.
class CsvWriter {
  public:
    explicit CsvWriter(const std::filesystem::path& path);
    ~CsvWriter();
    CsvWriter(const CsvWriter&) = delete;
    CsvWriter& operator=(const CsvWriter&) = delete;

    void row(const std::vector<std::string>& fields);
    void close();

    static std::string num(double v);       // shortest round-trippable
    static std::string fixed(double v, int digits);

  private:
    std::FILE* file_ = nullptr;
    std::string path_;
};

} // namespace u5apc
