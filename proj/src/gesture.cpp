#include "cobotar/gesture.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <nlohmann/json.hpp>

namespace cobotar::gesture {

namespace {

struct Finger {
    std::size_t mcp;
    std::size_t tip;
};

// thumb, index, middle, ring, pinky
constexpr std::array<Finger, 5> kFingers{{{2, 4}, {5, 8}, {9, 12}, {13, 16}, {17, 20}}};

double planar_distance(const Landmark& a, const Landmark& b) { return (a.head<2>() - b.head<2>()).norm(); }

}  // namespace

void HandFrame::validate() const {
    if (landmarks.size() != kLandmarkCount) {
        throw GestureError("hand frame has " + std::to_string(landmarks.size()) + " landmarks, expected 21");
    }
    for (const auto& lm : landmarks) {
        if (!lm.allFinite() || lm.x() < 0.0 || lm.x() > 1.0 || lm.y() < 0.0 || lm.y() > 1.0) {
            throw GestureError("hand landmark outside the normalized image");
        }
    }
}

HandFrame HandFrame::from_json(const nlohmann::json& doc) {
    HandFrame h;
    h.timestamp = doc.at("t").get<double>();
    const auto& lm = doc.at("lm");
    if (!lm.is_array()) throw GestureError("\"lm\" must be an array");
    for (const auto& p : lm) {
        if (!p.is_array() || p.size() != 3) throw GestureError("landmark must be [x, y, z]");
        h.landmarks.emplace_back(p[0].get<double>(), p[1].get<double>(), p[2].get<double>());
    }
    h.validate();
    return h;
}

nlohmann::json HandFrame::to_json() const {
    nlohmann::json lm = nlohmann::json::array();
    for (const auto& p : landmarks) lm.push_back({p.x(), p.y(), p.z()});
    return {{"t", timestamp}, {"lm", lm}};
}

std::string_view to_string(GestureLabel g) {
    switch (g) {
        case GestureLabel::Palm: return "Palm";
        case GestureLabel::One: return "One";
        case GestureLabel::Two: return "Two";
        case GestureLabel::Three: return "Three";
        case GestureLabel::Four: return "Four";
        case GestureLabel::Fist: return "Fist";
        case GestureLabel::Thumb: return "Thumb";
        case GestureLabel::Pinky: return "Pinky";
        case GestureLabel::Unknown: return "Unknown";
    }
    return "Unknown";
}

GestureLabel gesture_from_string(std::string_view s) {
    for (auto g : {GestureLabel::Palm, GestureLabel::One, GestureLabel::Two, GestureLabel::Three, GestureLabel::Four,
                   GestureLabel::Fist, GestureLabel::Thumb, GestureLabel::Pinky, GestureLabel::Unknown}) {
        if (to_string(g) == s) return g;
    }
    throw GestureError("unknown gesture \"" + std::string(s) + "\"");
}

std::string_view to_string(PressKind k) { return k == PressKind::Activated ? "activated" : "released"; }

GestureLabel classify_gesture(const HandFrame& h, const ClassifierConfig& cfg) {
    if (h.landmarks.size() != kLandmarkCount) {
        throw GestureError("hand frame has " + std::to_string(h.landmarks.size()) + " landmarks, expected 21");
    }
    const Landmark& wrist = h.landmarks[kWrist];
    std::array<bool, 5> ext{};
    for (std::size_t f = 0; f < kFingers.size(); ++f) {
        const double tip = planar_distance(h.landmarks[kFingers[f].tip], wrist);
        const double mcp = planar_distance(h.landmarks[kFingers[f].mcp], wrist);
        ext[f] = tip > cfg.extension_ratio * mcp;
    }
    const bool thumb = ext[0], index = ext[1], pinky = ext[4];
    int count = 0;
    for (bool e : ext) count += e ? 1 : 0;

    if (count == 5) return GestureLabel::Palm;
    if (count == 0) return GestureLabel::Fist;
    if (index) {
        switch (count) {
            case 1: return GestureLabel::One;
            case 2: return GestureLabel::Two;
            case 3: return GestureLabel::Three;
            case 4: return GestureLabel::Four;
            default: break;
        }
    }
    if (count == 1 && thumb) return GestureLabel::Thumb;
    if (count == 1 && pinky) return GestureLabel::Pinky;
    return GestureLabel::Unknown;
}

HandFrame make_canonical_hand(const Eigen::Vector2d& fingertip, GestureLabel label, double timestamp, double size) {
    std::array<bool, 5> ext{};
    switch (label) {
        case GestureLabel::Palm: ext = {true, true, true, true, true}; break;
        case GestureLabel::One: ext = {false, true, false, false, false}; break;
        case GestureLabel::Two: ext = {false, true, true, false, false}; break;
        case GestureLabel::Three: ext = {false, true, true, true, false}; break;
        case GestureLabel::Four: ext = {false, true, true, true, true}; break;
        case GestureLabel::Fist: break;
        case GestureLabel::Thumb: ext = {true, false, false, false, false}; break;
        case GestureLabel::Pinky: ext = {false, false, false, false, true}; break;
        case GestureLabel::Unknown: ext = {true, false, true, false, false}; break;
    }

    // Finger rays fan out upwards in the image (-y); the index ray points straight up.
    constexpr double deg = std::numbers::pi / 180.0;
    constexpr std::array<double, 5> ray_angle{-50.0 * deg, -12.0 * deg, 0.0, 12.0 * deg, 24.0 * deg};
    constexpr std::array<double, 5> mcp_scale{0.55, 1.0, 1.0, 0.95, 0.85};

    const double index_reach = (ext[1] ? 2.0 : 1.0) * size;
    const Eigen::Vector2d index_dir(std::sin(ray_angle[1]), -std::cos(ray_angle[1]));
    const Eigen::Vector2d wrist = fingertip - index_reach * index_dir;

    HandFrame h;
    h.timestamp = timestamp;
    h.landmarks.assign(kLandmarkCount, Landmark(wrist.x(), wrist.y(), 0.0));
    for (std::size_t f = 0; f < kFingers.size(); ++f) {
        const Eigen::Vector2d dir(std::sin(ray_angle[f]), -std::cos(ray_angle[f]));
        const double mcp_r = mcp_scale[f] * size;
        const double tip_r = (ext[f] ? 2.0 : 1.0) * mcp_r;
        const std::size_t base = kFingers[f].tip - 3;  // thumb: CMC, others: MCP
        for (std::size_t j = 0; j < 4; ++j) {
            double r;
            if (base + j < kFingers[f].mcp) {
                r = 0.5 * mcp_r;
            } else {
                const double frac = static_cast<double>(base + j - kFingers[f].mcp) /
                                    static_cast<double>(kFingers[f].tip - kFingers[f].mcp);
                r = mcp_r + frac * (tip_r - mcp_r);
            }
            const Eigen::Vector2d p = wrist + r * dir;
            h.landmarks[base + j] = Landmark(p.x(), p.y(), -0.01 * static_cast<double>(j));
        }
    }
    h.landmarks[kIndexTip].head<2>() = fingertip;
    return h;
}

GestureObservation observe(const HandFrame& h, const ClassifierConfig& cfg) {
    return {h.timestamp, classify_gesture(h, cfg), h.index_tip()};
}

PressUpdate update_press_detector(const PressDetectorState& state, const GestureObservation& obs,
                                  const projection::GuiLayout& layout, const projection::Homography& cam_to_gui,
                                  const PressDetectorConfig& cfg) {
    PressUpdate out{state, {}};
    PressDetectorState& s = out.state;
    const int n = std::max(1, cfg.debounce_frames);

    if (obs.label == s.candidate_gesture) {
        s.candidate_count = std::min(s.candidate_count + 1, n);
    } else {
        s.candidate_gesture = obs.label;
        s.candidate_count = 1;
    }

    std::optional<projection::ButtonId> under;
    try {
        under = projection::hit_test(layout, projection::apply_homography(cam_to_gui, obs.fingertip));
    } catch (const projection::PointAtInfinity&) {
        under.reset();
    }

    const std::optional<GestureLabel> previous = s.stable_gesture;
    if (s.candidate_count >= n && s.candidate_gesture != GestureLabel::Unknown &&
        s.stable_gesture != s.candidate_gesture) {
        s.stable_gesture = s.candidate_gesture;
    }

    if (s.active_button) {
        const bool left_one = s.stable_gesture != GestureLabel::One;
        const bool left_region = under != s.active_button;
        if (left_one || left_region) {
            out.events.push_back({obs.timestamp, *s.active_button, PressKind::Released});
            s.active_button.reset();
        }
    }

    if (previous == GestureLabel::Palm && s.stable_gesture == GestureLabel::One && under) {
        s.active_button = under;
        out.events.push_back({obs.timestamp, *under, PressKind::Activated});
    }

    s.armed_button = s.stable_gesture == GestureLabel::Palm ? under : std::nullopt;
    return out;
}

PressUpdate update_press_detector(const PressDetectorState& state, const HandFrame& h,
                                  const projection::GuiLayout& layout, const projection::Homography& cam_to_gui,
                                  const PressDetectorConfig& cfg) {
    return update_press_detector(state, observe(h, cfg.classifier), layout, cam_to_gui, cfg);
}

}  // namespace cobotar::gesture
