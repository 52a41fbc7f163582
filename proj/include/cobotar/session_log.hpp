#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace cobotar {

using Record = nlohmann::ordered_json;

class LogParseError : public std::runtime_error {
public:
    LogParseError(std::size_t line, const std::string& what);
    std::size_t line;
};

/**
 * Ordered records of one task execution, persisted as JSON lines.
 *
 * Record kinds: "session" (header: mode, participant, task), "sample",
 * "input" (task markers are inputs with "input":"task"), "press", "fault".
 */
class SessionLog {
public:
    void append(Record r) { records_.push_back(std::move(r)); }
    const std::vector<Record>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }

    const Record* header() const;
    /// Time of the first task marker with the given event ("start" / "end").
    std::optional<double> marker(const std::string& event) const;

    void write(std::ostream& os) const;
    std::string to_string() const;
    void save(const std::filesystem::path& path) const;

    static SessionLog parse(std::istream& is);
    static SessionLog parse(const std::string& text);
    static SessionLog load(const std::filesystem::path& path);

private:
    std::vector<Record> records_;
};

}  // namespace cobotar
