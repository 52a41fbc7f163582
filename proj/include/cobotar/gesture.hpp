#pragma once

#include "cobotar/projection.hpp"

#include <Eigen/Dense>

#include <array>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace cobotar::gesture {

inline constexpr std::size_t kLandmarkCount = 21;
inline constexpr std::size_t kWrist = 0;
inline constexpr std::size_t kIndexTip = 8;

class GestureError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// x, y normalized image coordinates, z relative depth.
using Landmark = Eigen::Vector3d;

struct HandFrame {
    double timestamp = 0.0;
    std::vector<Landmark> landmarks;

    /// Exactly 21 landmarks with x, y in [0, 1].
    void validate() const;
    Eigen::Vector2d index_tip() const { return landmarks.at(kIndexTip).head<2>(); }

    /// {"t": ..., "lm": [[x, y, z] x 21]}
    static HandFrame from_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;
};

enum class GestureLabel { Palm, One, Two, Three, Four, Fist, Thumb, Pinky, Unknown };

std::string_view to_string(GestureLabel g);
GestureLabel gesture_from_string(std::string_view s);

struct ClassifierConfig {
    double extension_ratio = 1.6;
};

/**
 * Distance-ratio classifier over the 21-point hand topology.
 *
 * A finger is extended when its tip is farther from the wrist than
 * extension_ratio times its MCP joint. Only image-plane (x, y) distances
 * are used, so the label is invariant to translation and scale.
 */
GestureLabel classify_gesture(const HandFrame& h, const ClassifierConfig& cfg = {});

/**
 * Synthetic hand whose index fingertip sits at `fingertip` (normalized image
 * coordinates). Extended fingers are placed at twice their MCP radius, folded
 * ones at their MCP radius. `size` is the wrist-to-index-MCP distance.
 */
HandFrame make_canonical_hand(const Eigen::Vector2d& fingertip, GestureLabel label, double timestamp = 0.0,
                              double size = 0.05);

/// Either landmarks or a label already decided upstream, plus the fingertip in the image.
struct GestureObservation {
    double timestamp = 0.0;
    GestureLabel label = GestureLabel::Unknown;
    Eigen::Vector2d fingertip = Eigen::Vector2d::Zero();
};

GestureObservation observe(const HandFrame& h, const ClassifierConfig& cfg = {});

struct PressDetectorConfig {
    int debounce_frames = 3;
    ClassifierConfig classifier{};
};

struct PressDetectorState {
    std::optional<GestureLabel> stable_gesture;  // nullopt while idle
    GestureLabel candidate_gesture = GestureLabel::Unknown;
    int candidate_count = 0;
    std::optional<projection::ButtonId> armed_button;   // under the fingertip while stable Palm
    std::optional<projection::ButtonId> active_button;
};

enum class PressKind { Activated, Released };

std::string_view to_string(PressKind k);

struct PressEvent {
    double timestamp = 0.0;
    projection::ButtonId button;
    PressKind kind = PressKind::Activated;

    bool operator==(const PressEvent&) const = default;
};

struct PressUpdate {
    PressDetectorState state;
    std::vector<PressEvent> events;
};

/**
 * Advances the press detector by one camera frame.
 *
 * A button is activated when the debounced gesture goes Palm -> One while
 * the index fingertip, mapped through `cam_to_gui`, lies in its rectangle.
 * It is released when the debounced gesture leaves One or the fingertip
 * leaves the rectangle. `cam_to_gui` maps normalized image coordinates to
 * GUI millimeters.
 */
PressUpdate update_press_detector(const PressDetectorState& state, const GestureObservation& obs,
                                  const projection::GuiLayout& layout, const projection::Homography& cam_to_gui,
                                  const PressDetectorConfig& cfg = {});

PressUpdate update_press_detector(const PressDetectorState& state, const HandFrame& h,
                                  const projection::GuiLayout& layout, const projection::Homography& cam_to_gui,
                                  const PressDetectorConfig& cfg = {});

}  // namespace cobotar::gesture
