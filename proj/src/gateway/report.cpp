#include "cobotar/gateway/report.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <openssl/evp.h>

namespace cobotar::gateway {

namespace {

constexpr std::array<const char*, 3> kModeOrder{"gamepad", "cobotar", "pendant"};

int mode_rank(const std::string& m) {
    for (std::size_t i = 0; i < kModeOrder.size(); ++i) {
        if (m == kModeOrder[i]) return static_cast<int>(i);
    }
    return static_cast<int>(kModeOrder.size());
}

struct KindType {
    const char* kind;
    const char* type;
};
constexpr std::array<KindType, 5> kKindTypes{{{"session", "session"},
                                              {"sample", "state"},
                                              {"input", "input"},
                                              {"press", "press_event"},
                                              {"fault", "fault"}}};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double metric_of(const SessionMetrics& s, const std::string& metric) {
    return metric == "time_s" ? s.time_s : s.error_mm;
}

std::string digest_of(const std::string& test, const std::string& metric, const std::vector<std::string>& groups,
                      const std::vector<std::vector<double>>& data) {
    nlohmann::json doc;
    doc["test"] = test;
    doc["metric"] = metric;
    doc["groups"] = groups;
    doc["data"] = data;
    return sha256_hex(doc.dump());
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("SHA-256 failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xf];
    }
    return out;
}

SessionMetrics session_metrics(const SessionLog& log, const std::string& source) {
    const Record* header = log.header();
    if (!header) throw SessionError("no session header");
    SessionMetrics m;
    m.source = source;
    try {
        m.mode = header->at("mode").get<std::string>();
        m.participant = header->value("participant", 0L);
        const auto& task = header->at("task");
        if (task.value("kind", "square") != "square") throw SessionError("unsupported task kind");
        metrics::SquareTask sq;
        sq.center = {task.at("center").at(0).get<double>(), task.at("center").at(1).get<double>()};
        sq.side = task.at("side").get<double>();

        const auto start = log.marker("start");
        const auto end = log.marker("end");
        if (!start) throw SessionError("no task start marker");
        if (!end) throw SessionError("no task end marker");
        if (*end < *start) throw SessionError("task end precedes task start");
        m.time_s = *end - *start;

        std::vector<metrics::TrajectorySample> samples;
        for (const auto& r : log.records()) {
            const std::string kind = r.at("kind").get<std::string>();
            if (kind == "fault") ++m.faults;
            if (kind != "sample") continue;
            const double t = r.at("t").get<double>();
            if (t < *start || t > *end) continue;
            const auto& tcp = r.at("tcp");
            samples.push_back({t, tcp.at(0).get<double>() * 1000.0, tcp.at(1).get<double>() * 1000.0});
        }
        if (samples.empty()) throw SessionError("no samples between the task markers");
        m.samples = samples.size();
        m.error_mm = metrics::path_error(metrics::Trajectory(std::move(samples)), sq);
    } catch (const nlohmann::json::exception& e) {
        throw SessionError(std::string("malformed record: ") + e.what());
    } catch (const metrics::MetricsError& e) {
        throw SessionError(e.what());
    }
    return m;
}

std::vector<TlxEntry> parse_tlx(const std::string& text) {
    std::vector<TlxEntry> out;
    const auto doc = nlohmann::json::parse(text);
    if (!doc.is_array()) throw std::runtime_error("TLX file must be a JSON array");
    for (const auto& e : doc) {
        TlxEntry t;
        t.participant = e.at("participant").get<long>();
        t.mode = e.at("mode").get<std::string>();
        t.scale_max = e.value("scale_max", 10.0);
        const auto& s = e.at("scores");
        if (!s.is_array() || s.size() != 6) throw std::runtime_error("TLX \"scores\" must hold six subscales");
        for (std::size_t i = 0; i < 6; ++i) t.sheet.scores[i] = s[i].get<double>();
        (void)metrics::raw_tlx(t.sheet, t.scale_max);  // range check
        out.push_back(t);
    }
    return out;
}

SessionLog parse_any_log(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto first = nlohmann::json::parse(line, nullptr, false);
        if (first.is_object() && first.contains("type") && !first.contains("kind")) return capture_to_log(text);
        break;
    }
    return SessionLog::parse(text);
}

MetricsReport build_report(const std::vector<LogSource>& sources, const std::vector<TlxEntry>& tlx) {
    MetricsReport report;
    for (const auto& src : sources) {
        try {
            SessionMetrics m = session_metrics(parse_any_log(src.text), src.name);
            for (const auto& t : tlx) {
                if (t.participant == m.participant && t.mode == m.mode) m.tlx = metrics::raw_tlx(t.sheet, t.scale_max);
            }
            report.sessions.push_back(std::move(m));
        } catch (const LogParseError& e) {
            report.errors.push_back({src.name, e.line, e.what()});
        } catch (const std::exception& e) {
            report.errors.push_back({src.name, std::nullopt, e.what()});
        }
    }

    std::vector<std::string> groups;
    for (const auto& s : report.sessions) {
        if (std::find(groups.begin(), groups.end(), s.mode) == groups.end()) groups.push_back(s.mode);
    }
    std::stable_sort(groups.begin(), groups.end(), [](const std::string& a, const std::string& b) {
        return mode_rank(a) != mode_rank(b) ? mode_rank(a) < mode_rank(b) : a < b;
    });
    if (groups.size() < 2) return report;

    // participant -> mode -> session; first session wins on duplicates.
    std::map<long, std::map<std::string, const SessionMetrics*>> by_participant;
    for (const auto& s : report.sessions) {
        auto& slot = by_participant[s.participant][s.mode];
        if (slot) {
            report.notes.push_back("participant " + std::to_string(s.participant) + " has more than one " + s.mode +
                                   " session; repeated-measures tests use the first (" + slot->source + ")");
        } else {
            slot = &s;
        }
    }

    auto& stats = report.statistics.emplace();
    auto attempt = [&](Analysis a, const std::vector<std::vector<double>>& data, auto&& fn) {
        a.inputs_digest = digest_of(a.test, a.metric, a.groups, data);
        try {
            a.result = fn();
            stats.push_back(std::move(a));
        } catch (const metrics::MetricsError& e) {
            std::string label = a.test + " on " + a.metric;
            for (const auto& g : a.groups) label += " " + g;
            report.notes.push_back(label + " skipped: " + e.what());
        }
    };

    for (const std::string metric : {"time_s", "error_mm"}) {
        std::vector<std::vector<double>> data;
        for (const auto& g : groups) {
            auto& col = data.emplace_back();
            for (const auto& s : report.sessions) {
                if (s.mode == g) col.push_back(metric_of(s, metric));
            }
        }
        attempt({metric, "one_way_anova", groups, {}, {}}, data, [&] { return metrics::one_way_anova(data); });

        std::vector<long> complete;
        for (const auto& [p, modes] : by_participant) {
            if (std::all_of(groups.begin(), groups.end(), [&](const auto& g) { return modes.count(g) > 0; })) {
                complete.push_back(p);
            }
        }
        // Rows are participants, columns interfaces.
        std::vector<std::vector<double>> rm_rows;
        Eigen::MatrixXd rm(static_cast<Eigen::Index>(complete.size()), static_cast<Eigen::Index>(groups.size()));
        for (std::size_t i = 0; i < complete.size(); ++i) {
            auto& row = rm_rows.emplace_back();
            for (std::size_t j = 0; j < groups.size(); ++j) {
                const double v = metric_of(*by_participant[complete[i]][groups[j]], metric);
                rm(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
                row.push_back(v);
            }
        }
        attempt({metric, "rm_anova", groups, {}, {}}, rm_rows, [&] { return metrics::rm_anova(rm); });

        for (std::size_t a = 0; a < groups.size(); ++a) {
            for (std::size_t b = a + 1; b < groups.size(); ++b) {
                std::vector<double> xa, xb;
                for (const auto& [p, modes] : by_participant) {
                    if (modes.count(groups[a]) && modes.count(groups[b])) {
                        xa.push_back(metric_of(*modes.at(groups[a]), metric));
                        xb.push_back(metric_of(*modes.at(groups[b]), metric));
                    }
                }
                attempt({metric, "paired_t", {groups[a], groups[b]}, {}, {}}, {xa, xb},
                        [&] { return metrics::paired_t_test(xa, xb); });
            }
        }
    }
    return report;
}

Record MetricsReport::to_json() const {
    Record doc;
    doc["sessions"] = Record::array();
    for (const auto& s : sessions) {
        Record r;
        r["source"] = s.source;
        r["participant"] = s.participant;
        r["mode"] = s.mode;
        r["time_s"] = s.time_s;
        r["error_mm"] = s.error_mm;
        r["samples"] = s.samples;
        r["faults"] = s.faults;
        if (s.tlx) r["tlx"] = *s.tlx;
        doc["sessions"].push_back(std::move(r));
    }
    doc["errors"] = Record::array();
    for (const auto& e : errors) {
        Record r;
        r["source"] = e.source;
        if (e.line) r["line"] = *e.line;
        r["message"] = e.message;
        doc["errors"].push_back(std::move(r));
    }
    if (statistics) {
        doc["statistics"] = Record::array();
        for (const auto& a : *statistics) {
            Record r;
            r["metric"] = a.metric;
            r["test"] = a.test;
            r["groups"] = a.groups;
            r["value"] = a.result.statistic;
            r["df"] = a.test == "paired_t" ? Record::array({a.result.df1}) : Record::array({a.result.df1, a.result.df2});
            r["p"] = a.result.p_value;
            r["inputs_digest"] = a.inputs_digest;
            doc["statistics"].push_back(std::move(r));
        }
    }
    if (!notes.empty()) doc["notes"] = notes;
    return doc;
}

void MetricsReport::write_csv(std::ostream& os) const {
    os << "participant,interface,time_s,error_mm,tlx\n";
    for (const auto& s : sessions) {
        os << s.participant << ',' << s.mode << ',' << fmt(s.time_s) << ',' << fmt(s.error_mm) << ','
           << (s.tlx ? fmt(*s.tlx) : std::string()) << '\n';
    }
}

void replay(const SessionLog& log, double speed, std::ostream& out, const std::function<void(double)>& sleep) {
    if (!(speed > 0.0) || !std::isfinite(speed)) throw std::invalid_argument("replay speed must be a positive number");
    std::optional<double> last_t;
    long seq = 0;
    for (const auto& r : log.records()) {
        const std::string kind = r.at("kind").get<std::string>();
        const auto kt = std::find_if(kKindTypes.begin(), kKindTypes.end(), [&](const KindType& k) { return kind == k.kind; });
        if (kt == kKindTypes.end()) throw std::runtime_error("cannot replay record kind \"" + kind + "\"");
        if (r.contains("t")) {
            const double t = r["t"].get<double>();
            if (last_t && t > *last_t && sleep) sleep((t - *last_t) / speed);
            last_t = t;
        }
        Record msg;
        msg["v"] = 1;
        msg["seq"] = ++seq;
        msg["type"] = kt->type;
        for (const auto& [key, value] : r.items()) {
            if (key != "kind") msg[key] = value;
        }
        out << msg.dump() << '\n';
        out.flush();
    }
}

SessionLog capture_to_log(const std::string& text) {
    std::istringstream is(text);
    std::ostringstream rebuilt;
    std::string line;
    std::size_t n = 0;
    long last_seq = 0;
    while (std::getline(is, line)) {
        ++n;
        if (line.empty()) continue;
        Record msg;
        try {
            msg = Record::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw LogParseError(n, std::string("malformed JSON: ") + e.what());
        }
        if (!msg.is_object() || msg.value("v", 0) != 1) throw LogParseError(n, "message is not a v1 protocol frame");
        const long seq = msg.value("seq", 0L);
        if (seq <= last_seq) throw LogParseError(n, "sequence number does not increase");
        last_seq = seq;
        const std::string type = msg.value("type", "");
        const auto kt = std::find_if(kKindTypes.begin(), kKindTypes.end(), [&](const KindType& k) { return type == k.type; });
        if (kt == kKindTypes.end()) throw LogParseError(n, "unexpected message type \"" + type + "\"");
        Record r;
        r["kind"] = kt->kind;
        // the header's own format version rides in the frame's "v"
        if (r["kind"] == "session") r["v"] = msg["v"];
        for (const auto& [key, value] : msg.items()) {
            if (key != "v" && key != "seq" && key != "type") r[key] = value;
        }
        rebuilt << r.dump() << '\n';
    }
    return SessionLog::parse(rebuilt.str());
}

}  // namespace cobotar::gateway
