#include "cobotar/session_log.hpp"

#include <fstream>
#include <sstream>

namespace cobotar {

LogParseError::LogParseError(std::size_t ln, const std::string& what)
    : std::runtime_error("line " + std::to_string(ln) + ": " + what), line(ln) {}

const Record* SessionLog::header() const {
    for (const auto& r : records_) {
        if (r.value("kind", "") == "session") return &r;
    }
    return nullptr;
}

std::optional<double> SessionLog::marker(const std::string& event) const {
    for (const auto& r : records_) {
        if (r.value("kind", "") == "input" && r.value("input", "") == "task" && r.value("event", "") == event) {
            return r.at("t").get<double>();
        }
    }
    return std::nullopt;
}

void SessionLog::write(std::ostream& os) const {
    for (const auto& r : records_) os << r.dump() << '\n';
}

std::string SessionLog::to_string() const {
    std::ostringstream os;
    write(os);
    return os.str();
}

void SessionLog::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write session log " + path.string());
    write(out);
}

SessionLog SessionLog::parse(std::istream& is) {
    SessionLog log;
    std::string line;
    std::size_t n = 0;
    while (std::getline(is, line)) {
        ++n;
        if (line.empty()) continue;
        Record r;
        try {
            r = Record::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw LogParseError(n, std::string("malformed JSON: ") + e.what());
        }
        if (!r.is_object() || !r.contains("kind") || !r["kind"].is_string()) {
            throw LogParseError(n, "record must be an object with a string \"kind\"");
        }
        const std::string kind = r["kind"].get<std::string>();
        if (kind != "session" && !r.contains("t")) throw LogParseError(n, "record has no \"t\"");
        if (kind == "sample" && (!r.contains("tcp") || !r["tcp"].is_array() || r["tcp"].size() != 3)) {
            throw LogParseError(n, "sample record needs \"tcp\":[x,y,z]");
        }
        log.append(std::move(r));
    }
    return log;
}

SessionLog SessionLog::parse(const std::string& text) {
    std::istringstream is(text);
    return parse(is);
}

SessionLog SessionLog::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read session log " + path.string());
    return parse(in);
}

}  // namespace cobotar
