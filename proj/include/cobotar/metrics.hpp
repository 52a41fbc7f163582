#pragma once

#include <Eigen/Dense>

#include <array>
#include <span>
#include <stdexcept>
#include <vector>

namespace cobotar::metrics {

class MetricsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ZeroVariance : public MetricsError {
public:
    using MetricsError::MetricsError;
};

struct TrajectorySample {
    double t = 0.0;   // s
    double x = 0.0;   // mm
    double y = 0.0;   // mm
};

/// Samples with strictly increasing time.
class Trajectory {
public:
    Trajectory() = default;
    explicit Trajectory(std::vector<TrajectorySample> samples);

    const std::vector<TrajectorySample>& samples() const { return samples_; }
    bool empty() const { return samples_.empty(); }

private:
    std::vector<TrajectorySample> samples_;
};

struct SquareTask {
    Eigen::Vector2d center = Eigen::Vector2d::Zero();  // mm
    double side = 150.0;                                // mm

    /// Corners counter-clockwise from the min corner.
    std::array<Eigen::Vector2d, 4> corners() const;
};

/// Distance from a point to the square's perimeter (not its interior).
double distance_to_square(const SquareTask& task, const Eigen::Vector2d& p);

/// Mean over samples of the distance to the square's perimeter, in mm.
double path_error(const Trajectory& traj, const SquareTask& task);

struct TlxSheet {
    // mental, physical, temporal, performance, effort, frustration
    std::array<double, 6> scores{};
};

/// Unweighted mean of the six subscales, rescaled to [0, 100].
double raw_tlx(const TlxSheet& sheet, double scale_max);

struct StatResult {
    double statistic = 0.0;
    double df1 = 0.0;
    double df2 = 0.0;  // zero for single-df statistics
    double p_value = 1.0;
};

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// Upper tail P(F > f) of the F(d1, d2) distribution.
double f_upper_tail(double f, double d1, double d2);

/// Two-sided P(|T| > |t|) for Student's t with `df` degrees of freedom.
double t_two_sided(double t, double df);

/// Between-subjects single factor ANOVA.
StatResult one_way_anova(std::span<const std::vector<double>> groups);

/**
 * Single factor repeated-measures ANOVA. Rows are subjects, columns are
 * conditions; the subject effect is removed from the error term.
 */
StatResult rm_anova(const Eigen::MatrixXd& data);

/// Two-sided paired t-test on a - b.
StatResult paired_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace cobotar::metrics
