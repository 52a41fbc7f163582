#pragma once

#include "cobotar/metrics.hpp"
#include "cobotar/session_log.hpp"

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace cobotar::gateway {

struct SessionMetrics {
    std::string source;
    std::string mode;
    long participant = 0;
    double time_s = 0.0;
    double error_mm = 0.0;
    std::size_t samples = 0;
    std::size_t faults = 0;
    std::optional<double> tlx;
};

struct SessionFailure {
    std::string source;
    std::optional<std::size_t> line;
    std::string message;
};

struct Analysis {
    std::string metric;  // "time_s" or "error_mm"
    std::string test;    // "one_way_anova", "rm_anova", "paired_t"
    std::vector<std::string> groups;
    metrics::StatResult result;
    std::string inputs_digest;  // SHA-256 of the exact inputs
};

struct MetricsReport {
    std::vector<SessionMetrics> sessions;
    std::vector<SessionFailure> errors;
    std::optional<std::vector<Analysis>> statistics;  // present with two or more interfaces
    std::vector<std::string> notes;

    Record to_json() const;
    void write_csv(std::ostream& os) const;
};

class SessionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Completion time and path error between the task markers. Throws SessionError.
SessionMetrics session_metrics(const SessionLog& log, const std::string& source = {});

struct LogSource {
    std::string name;
    std::string text;  // session log or replay capture
};

struct TlxEntry {
    long participant = 0;
    std::string mode;
    double scale_max = 10.0;
    metrics::TlxSheet sheet;
};

MetricsReport build_report(const std::vector<LogSource>& sources, const std::vector<TlxEntry>& tlx = {});

/// JSON array of {participant, mode, scale_max, scores[6]}.
std::vector<TlxEntry> parse_tlx(const std::string& text);

std::string sha256_hex(const std::string& bytes);

/// Accepts a session log or a replay capture.
SessionLog parse_any_log(const std::string& text);

/**
 * Re-emits a log as protocol messages, one JSON object per line. Each message
 * waits `sleep(seconds)` for the log's inter-record gap divided by `speed`.
 */
void replay(const SessionLog& log, double speed, std::ostream& out,
            const std::function<void(double)>& sleep = {});

/// Inverse of replay: rebuilds the session log from a captured stream.
SessionLog capture_to_log(const std::string& text);

}  // namespace cobotar::gateway
