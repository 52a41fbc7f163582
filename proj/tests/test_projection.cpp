#include "cobotar/projection.hpp"
#include "oracle.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <random>

using namespace cobotar;
using namespace cobotar::projection;

namespace {

Eigen::Isometry3d iso(const kin::RigidTransform& T) {
    Eigen::Isometry3d out = Eigen::Isometry3d::Identity();
    out.linear() = T.rotation;
    out.translation() = T.translation;
    return out;
}

std::vector<PointPair> pairs(const std::vector<Eigen::Vector2d>& src, const std::vector<Eigen::Vector2d>& dst) {
    std::vector<PointPair> out;
    for (std::size_t i = 0; i < src.size(); ++i) out.push_back({src[i], dst[i]});
    return out;
}

const std::vector<Eigen::Vector2d> kUnit{{0, 0}, {1, 0}, {1, 1}, {0, 1}};

}  // namespace

TEST_SUITE("projection") {

TEST_CASE("camera_project") {
    const CameraIntrinsics intr;
    const auto cam = kin::RigidTransform::identity();
    CHECK((camera_project(intr, cam, {0, 0, 3.7}) - Eigen::Vector2d(640, 360)).norm() < 1e-12);
    CHECK((camera_project(intr, cam, {0.1, 0, 1}) - Eigen::Vector2d(740, 360)).norm() < 1e-12);
    CHECK_THROWS_AS(camera_project(intr, cam, {0, 0, -0.5}), BehindCamera);
    CHECK_THROWS_AS(camera_project(intr, cam, {0.2, 0.1, 0.0}), BehindCamera);

    SUBCASE("posed camera agrees with the oracle") {
        std::mt19937_64 rng(21);
        std::uniform_real_distribution<double> U(-1, 1);
        for (int i = 0; i < 100; ++i) {
            const auto pose = kin::RigidTransform::translate({U(rng), U(rng), U(rng)}) * kin::RigidTransform::rot_z(U(rng)) *
                              kin::RigidTransform::rot_x(0.3 * U(rng));
            const Eigen::Vector3d p = pose * Eigen::Vector3d(U(rng), U(rng), 2.0 + U(rng));
            const auto ref = oracle::project(intr.fx, intr.fy, intr.cx, intr.cy, iso(pose), p);
            CHECK((camera_project(intr, pose, p) - ref).norm() < 1e-9);
        }
    }
}

TEST_CASE("intrinsics validation") {
    CameraIntrinsics intr;
    CHECK(intr.valid());
    intr.fx = 0;
    CHECK_FALSE(intr.valid());
    CHECK_THROWS_AS(camera_project(intr, kin::RigidTransform::identity(), {0, 0, 1}), ProjectionError);
}

TEST_CASE("estimate_homography") {
    SUBCASE("identity") {
        const auto H = estimate_homography(pairs(kUnit, kUnit));
        CHECK((H.matrix() - Eigen::Matrix3d::Identity()).norm() < 1e-12);
    }
    SUBCASE("translation") {
        std::vector<Eigen::Vector2d> moved;
        for (const auto& p : kUnit) moved.push_back(p + Eigen::Vector2d(10, 5));
        const auto H = estimate_homography(pairs(kUnit, moved));
        Eigen::Matrix3d expected;
        expected << 1, 0, 10, 0, 1, 5, 0, 0, 1;
        CHECK((H.matrix() - expected).norm() < 1e-10);
    }
    SUBCASE("general quad matches the 8x8 solve") {
        const std::vector<Eigen::Vector2d> quad{{0, 0}, {1, 0}, {1.2, 1.1}, {-0.1, 1}};
        const auto H = estimate_homography(pairs(kUnit, quad));
        for (int i = 0; i < 4; ++i) CHECK((apply_homography(H, kUnit[i]) - quad[i]).norm() < 1e-9);
        const Eigen::Matrix3d ref = oracle::homography_8x8(kUnit, quad);
        CHECK((H.matrix() - ref).norm() < 1e-9);
    }
    SUBCASE("over-determined exact data") {
        const auto H0 = estimate_homography(pairs(kUnit, {{0, 0}, {2, 0.1}, {2.2, 1.9}, {-0.3, 1.4}}));
        std::vector<Eigen::Vector2d> src, dst;
        std::mt19937_64 rng(4);
        std::uniform_real_distribution<double> U(-2, 2);
        for (int i = 0; i < 12; ++i) {
            src.emplace_back(U(rng), U(rng));
            dst.push_back(apply_homography(H0, src.back()));
        }
        const auto H = estimate_homography(pairs(src, dst));
        CHECK((H.matrix() - H0.matrix()).norm() < 1e-8);
    }
    SUBCASE("degenerate configurations") {
        const std::vector<Eigen::Vector2d> line{{0, 0}, {1, 1}, {2, 2}, {3, 3}};
        CHECK_THROWS_AS(estimate_homography(pairs(line, kUnit)), DegenerateConfiguration);
        const std::vector<Eigen::Vector2d> three{{0, 0}, {1, 0}, {1, 1}, {0.5, 0.5}};
        CHECK_THROWS_AS(estimate_homography(pairs(three, kUnit)), DegenerateConfiguration);
        CHECK_THROWS_AS(estimate_homography(pairs({{0, 0}, {1, 0}, {1, 1}}, {{0, 0}, {1, 0}, {1, 1}})),
                        DegenerateConfiguration);
    }
}

TEST_CASE("apply_homography") {
    const Homography I;
    CHECK(apply_homography(I, {3.5, -2}) == Eigen::Vector2d(3.5, -2));

    Eigen::Matrix3d s = Eigen::Matrix3d::Identity();
    s(0, 0) = s(1, 1) = 2;
    CHECK((apply_homography(Homography(s), {3, 4}) - Eigen::Vector2d(6, 8)).norm() < 1e-15);

    const auto H = estimate_homography(pairs(kUnit, {{0, 0}, {1, 0}, {1.2, 1.1}, {-0.1, 1}}));
    for (const Eigen::Vector2d p : {Eigen::Vector2d(0.3, 0.4), Eigen::Vector2d(-5, 2), Eigen::Vector2d(0.9, 0.1)}) {
        CHECK((apply_homography(H.inverse(), apply_homography(H, p)) - p).norm() < 1e-9);
    }

    Eigen::Matrix3d proj = Eigen::Matrix3d::Identity();
    proj(2, 0) = 1;  // w = x + 1
    CHECK_THROWS_AS(apply_homography(Homography(proj), {-1, 5}), PointAtInfinity);
}

TEST_CASE("layout and hit test") {
    const auto layout = GuiLayout::standard();
    const auto& up = layout.button_for(Action::PosY);
    CHECK(hit_test(layout, up.rect.center()) == up.id);
    CHECK_FALSE(hit_test(layout, {0, 0}));
    CHECK_FALSE(hit_test(layout, {-layout.extent().x() / 2, -layout.extent().y() / 2}));
    for (const auto& b : layout.buttons()) {
        CHECK(hit_test(layout, b.rect.center()) == b.id);
        CHECK(hit_test(layout, {b.rect.x, b.rect.y}) == b.id);  // closed bounds
        CHECK(layout.button(b.id).action == b.action);
    }
    CHECK(action_direction(Action::PosX) == Eigen::Vector2d(1, 0));
    CHECK(action_direction(Action::NegY) == Eigen::Vector2d(0, -1));
    CHECK(action_from_string(to_string(Action::NegX)) == Action::NegX);
    CHECK_THROWS(action_from_string("diagonal"));
}

TEST_CASE("layout validation") {
    auto buttons = GuiLayout::standard().buttons();
    const Eigen::Vector2d extent = GuiLayout::standard().extent();

    SUBCASE("overlap") {
        buttons[1].rect = buttons[0].rect;
        buttons[1].rect.x += 1;
        CHECK_THROWS(GuiLayout(buttons, extent));
    }
    SUBCASE("duplicate id") {
        buttons[1].id = buttons[0].id;
        CHECK_THROWS(GuiLayout(buttons, extent));
    }
    SUBCASE("duplicate action") {
        buttons[1].action = buttons[0].action;
        CHECK_THROWS(GuiLayout(buttons, extent));
    }
    SUBCASE("wrong count") {
        buttons.pop_back();
        CHECK_THROWS(GuiLayout(buttons, extent));
    }
    SUBCASE("JSON round trip") {
        const auto back = GuiLayout::from_json(GuiLayout::standard().to_json());
        REQUIRE(back.buttons().size() == 4);
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(back.buttons()[i].id == buttons[i].id);
            CHECK(back.buttons()[i].action == buttons[i].action);
            CHECK(back.buttons()[i].rect.center() == buttons[i].rect.center());
        }
    }
}

TEST_CASE("gui_world_pose") {
    const auto layout = GuiLayout::standard();
    SUBCASE("identity target keeps local offsets") {
        const auto rects = gui_world_pose(kin::RigidTransform::identity(), layout);
        REQUIRE(rects.size() == 4);
        for (std::size_t i = 0; i < 4; ++i) {
            const auto& r = layout.buttons()[i].rect;
            CHECK((rects[i].corners[0] - Eigen::Vector3d(r.x, r.y, 0) / 1000.0).norm() < 1e-15);
            CHECK((rects[i].corners[2] - Eigen::Vector3d(r.x + r.w, r.y + r.h, 0) / 1000.0).norm() < 1e-15);
        }
    }
    SUBCASE("rotated target rotates the rectangles") {
        const auto Rz = kin::RigidTransform::rot_z(M_PI / 2);
        const auto base = gui_world_pose(kin::RigidTransform::identity(), layout);
        const auto turned = gui_world_pose(Rz, layout);
        for (std::size_t i = 0; i < 4; ++i) {
            for (int c = 0; c < 4; ++c) CHECK((turned[i].corners[c] - Rz * base[i].corners[c]).norm() < 1e-15);
        }
    }
    SUBCASE("rigid along a sweep") {
        auto dists = [](const std::vector<WorldRect>& r) {
            std::vector<double> d;
            for (std::size_t i = 0; i < r.size(); ++i)
                for (std::size_t j = i + 1; j < r.size(); ++j) d.push_back((r[i].corners[0] - r[j].corners[0]).norm());
            return d;
        };
        const auto ref = dists(gui_world_pose(kin::projection_target_pose(Eigen::VectorXd::Zero(6)), layout));
        for (int k = 0; k < 100; ++k) {
            Eigen::VectorXd q = Eigen::VectorXd::Zero(6);
            q[0] = 0.03 * k;
            q[1] = -1.5 + 0.01 * k;
            const auto d = dists(gui_world_pose(kin::projection_target_pose(q), layout));
            for (std::size_t i = 0; i < d.size(); ++i) CHECK(std::abs(d[i] - ref[i]) < 1e-12);
        }
    }
}

TEST_CASE("camera to GUI chain") {
    const auto layout = GuiLayout::standard();
    const CameraIntrinsics intr;
    Eigen::VectorXd q(6);
    q << -0.28, -1.64, 1.89, -0.25 - M_PI / 2, -M_PI / 2, -0.28;
    const auto target = kin::projection_target_pose(q);
    const auto cam = kin::follower_pose(target, 0.6);
    const auto H = camera_to_gui(intr, cam, target, layout);

    for (const auto& b : layout.buttons()) {
        const Eigen::Vector2d img = gui_to_image(intr, cam, target, b.rect.center());
        CHECK((apply_homography(H, img) - b.rect.center()).norm() < 1e-6);
        CHECK(hit_test(layout, apply_homography(H, img)) == b.id);
    }
    const auto corners = layout.plane_corners();
    for (const auto& c : corners) {
        const Eigen::Vector2d img = gui_to_image(intr, cam, target, c);
        CHECK(img.x() >= 0.0);
        CHECK(img.x() <= 1.0);
        CHECK(img.y() >= 0.0);
        CHECK(img.y() <= 1.0);
    }
}

}  // TEST_SUITE
