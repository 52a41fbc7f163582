#include "cobotar/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace cobotar::metrics {

Trajectory::Trajectory(std::vector<TrajectorySample> samples) : samples_(std::move(samples)) {
    for (std::size_t i = 1; i < samples_.size(); ++i) {
        if (!(samples_[i].t > samples_[i - 1].t)) {
            throw MetricsError("trajectory time must be strictly increasing (sample " + std::to_string(i) + ")");
        }
    }
}

std::array<Eigen::Vector2d, 4> SquareTask::corners() const {
    const double h = side / 2.0;
    return {center + Eigen::Vector2d(-h, -h), center + Eigen::Vector2d(h, -h), center + Eigen::Vector2d(h, h),
            center + Eigen::Vector2d(-h, h)};
}

namespace {

double point_segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    const Eigen::Vector2d ab = b - a;
    const double len_sq = ab.squaredNorm();
    const double s = len_sq > 0.0 ? std::clamp((p - a).dot(ab) / len_sq, 0.0, 1.0) : 0.0;
    return (p - (a + s * ab)).norm();
}

double mean(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIter = 10000;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) return h;
    }
    throw MetricsError("incomplete beta continued fraction did not converge");
}

}  // namespace

double distance_to_square(const SquareTask& task, const Eigen::Vector2d& p) {
    const auto c = task.corners();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < 4; ++i) best = std::min(best, point_segment_distance(p, c[i], c[(i + 1) % 4]));
    return best;
}

double path_error(const Trajectory& traj, const SquareTask& task) {
    if (traj.empty()) throw MetricsError("path error of an empty trajectory");
    double sum = 0.0;
    for (const auto& s : traj.samples()) sum += distance_to_square(task, {s.x, s.y});
    return sum / static_cast<double>(traj.samples().size());
}

double raw_tlx(const TlxSheet& sheet, double scale_max) {
    if (!(scale_max > 0.0)) throw MetricsError("TLX scale maximum must be positive");
    double sum = 0.0;
    for (double s : sheet.scores) {
        if (!(s >= 0.0 && s <= scale_max)) throw MetricsError("TLX score " + std::to_string(s) + " out of range");
        sum += s;
    }
    return sum / 6.0 / scale_max * 100.0;
}

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0) || !(x >= 0.0 && x <= 1.0)) {
        throw MetricsError("incomplete beta domain: a, b > 0 and x in [0, 1]");
    }
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double f_upper_tail(double f, double d1, double d2) {
    if (!(d1 > 0.0) || !(d2 > 0.0)) throw MetricsError("F distribution needs positive degrees of freedom");
    if (f <= 0.0) return 1.0;
    if (std::isinf(f)) return 0.0;
    return incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f));
}

double t_two_sided(double t, double df) {
    if (!(df > 0.0)) throw MetricsError("t distribution needs positive degrees of freedom");
    if (std::isinf(t)) return 0.0;
    return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

StatResult one_way_anova(std::span<const std::vector<double>> groups) {
    if (groups.size() < 2) throw MetricsError("one-way ANOVA needs at least two groups");
    std::size_t total_n = 0;
    double grand = 0.0;
    for (const auto& g : groups) {
        if (g.size() < 2) throw MetricsError("each ANOVA group needs at least two observations");
        total_n += g.size();
        for (double x : g) grand += x;
    }
    grand /= static_cast<double>(total_n);

    double ss_between = 0.0, ss_within = 0.0, ss_total = 0.0;
    for (const auto& g : groups) {
        const double m = mean(g);
        ss_between += static_cast<double>(g.size()) * (m - grand) * (m - grand);
        for (double x : g) {
            ss_within += (x - m) * (x - m);
            ss_total += (x - grand) * (x - grand);
        }
    }
    if (ss_total == 0.0) throw ZeroVariance("one-way ANOVA on constant data");

    const double k = static_cast<double>(groups.size());
    const double n = static_cast<double>(total_n);
    StatResult r{0.0, k - 1.0, n - k, 1.0};
    if (ss_between <= 1e-28 * ss_total) return r;
    if (ss_within <= 1e-28 * ss_total) throw ZeroVariance("one-way ANOVA with zero within-group variance");
    r.statistic = (ss_between / r.df1) / (ss_within / r.df2);
    r.p_value = f_upper_tail(r.statistic, r.df1, r.df2);
    return r;
}

StatResult rm_anova(const Eigen::MatrixXd& data) {
    const Eigen::Index n = data.rows(), k = data.cols();
    if (n < 2 || k < 2) throw MetricsError("repeated-measures ANOVA needs at least 2 subjects and 2 conditions");
    const double grand = data.mean();
    const Eigen::VectorXd subj = data.rowwise().mean();
    const Eigen::RowVectorXd cond = data.colwise().mean();

    double ss_cond = 0.0, ss_err = 0.0, ss_total = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) ss_cond += static_cast<double>(n) * (cond(j) - grand) * (cond(j) - grand);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) {
            const double resid = data(i, j) - subj(i) - cond(j) + grand;
            ss_err += resid * resid;
            ss_total += (data(i, j) - grand) * (data(i, j) - grand);
        }
    }
    if (ss_total == 0.0) throw ZeroVariance("repeated-measures ANOVA on constant data");

    StatResult r{0.0, static_cast<double>(k - 1), static_cast<double>((k - 1) * (n - 1)), 1.0};
    if (ss_cond <= 1e-28 * ss_total) return r;
    if (ss_err <= 1e-28 * ss_total) throw ZeroVariance("repeated-measures ANOVA with zero error variance");
    r.statistic = (ss_cond / r.df1) / (ss_err / r.df2);
    r.p_value = f_upper_tail(r.statistic, r.df1, r.df2);
    return r;
}

StatResult paired_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw MetricsError("paired t-test needs equal-length samples");
    if (a.size() < 2) throw MetricsError("paired t-test needs at least two pairs");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    const double n = static_cast<double>(d.size());
    const double md = mean(d);
    double ss = 0.0;
    for (double x : d) ss += (x - md) * (x - md);
    const double sd = std::sqrt(ss / (n - 1.0));

    StatResult r{0.0, n - 1.0, 0.0, 1.0};
    if (sd == 0.0) {
        if (md != 0.0) throw ZeroVariance("paired differences are constant and non-zero");
        return r;
    }
    r.statistic = md / (sd / std::sqrt(n));
    r.p_value = t_two_sided(r.statistic, r.df1);
    return r;
}

}  // namespace cobotar::metrics
