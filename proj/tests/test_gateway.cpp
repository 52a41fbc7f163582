#include "cobotar/gateway/config.hpp"
#include "cobotar/gateway/protocol.hpp"
#include "cobotar/gateway/report.hpp"
#include "cobotar/gateway/server.hpp"

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <doctest.h>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

using namespace cobotar;
using namespace cobotar::gateway;
using nlohmann::json;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("cobotar-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

SessionConfig defaults() { return parse_config(json::object(), "."); }

std::string log_text(sim::Mode mode, const std::string& agent) {
    const auto cfg = defaults();
    return sim::run_scripted_agent(sim::AgentSpec::parse(agent, mode), cfg.task(), cfg.sim).to_string();
}

std::string msg(long seq, const std::string& type, json body = json::object()) {
    body["v"] = 1;
    body["seq"] = seq;
    body["type"] = type;
    return body.dump();
}

std::vector<json> frames(const Reply& r) {
    std::vector<json> out;
    for (const auto& f : r.frames) out.push_back(json::parse(f));
    return out;
}

}  // namespace

TEST_SUITE("gateway") {

TEST_CASE("config defaults and overrides") {
    const auto d = defaults();
    CHECK(d.mode == sim::Mode::CobotAR);
    CHECK(d.sim.sim_rate_hz == 50);
    CHECK(d.switch_latency_s == 0.5);

    const auto c = parse_config(json{{"mode", "pendant"},
                                     {"rates", {{"sim_hz", 100}}},
                                     {"pendant", {{"latency_s", 0.2}}},
                                     {"task", {{"side_mm", 100}, {"center_mm", {-300, -50}}}}},
                                ".");
    CHECK(c.mode == sim::Mode::Pendant);
    CHECK(c.sim.sim_rate_hz == 100);
    CHECK(c.sim.pendant_latency_s == 0.2);
    CHECK(c.task().side == 100);
    CHECK(c.task().center == Eigen::Vector2d(-300, -50));
}

TEST_CASE("shipped default config matches the built-in defaults") {
    const auto c = load_config(COBOTAR_TEST_DATA "/../../configs/default.json");
    const auto d = defaults();
    const auto a = sim::run_scripted_agent(sim::AgentSpec::parse("noisy:1:0.1", c.mode), c.task(), c.sim);
    const auto b = sim::run_scripted_agent(sim::AgentSpec::parse("noisy:1:0.1", d.mode), d.task(), d.sim);
    CHECK(a.to_string() == b.to_string());
    CHECK(c.server.port == d.server.port);
}

TEST_CASE("config errors") {
    CHECK_THROWS_AS(parse_config(json{{"rates", {{"sim_hz", 5}}}}, "."), ConfigError);
    CHECK_THROWS_AS(parse_config(json{{"rates", {{"camera_hz", 500}}}}, "."), ConfigError);
    CHECK_THROWS_AS(parse_config(json{{"speeed_mm_s", 25}}, "."), ConfigError);
    CHECK_THROWS_AS(parse_config(json{{"mode", "joystick"}}, "."), ConfigError);
    CHECK_THROWS_AS(parse_config(json{{"speed_mm_s", -1}}, "."), ConfigError);
    CHECK_THROWS_AS(parse_config(json{{"home_q", {0, 0}}}, "."), ConfigError);

    const auto dir = scratch_dir("config");
    try {
        (void)parse_config(json{{"layout", "missing-layout.json"}}, dir);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("missing-layout.json") != std::string::npos);
    }
    CHECK_THROWS_AS(load_config(dir / "nope.json"), ConfigError);
    std::ofstream(dir / "broken.json") << "{ not json";
    CHECK_THROWS_AS(load_config(dir / "broken.json"), ConfigError);
}

TEST_CASE("config references resolve next to the file") {
    const auto dir = scratch_dir("refs");
    std::ofstream(dir / "layout.json") << projection::GuiLayout::standard().to_json().dump();
    std::ofstream(dir / "ur3.json") << kin::DHChain::ur3().to_json().dump();
    std::ofstream(dir / "cfg.json") << json{{"layout", "layout.json"}, {"chains", {{"ur3", "ur3.json"}}}}.dump();
    const auto c = load_config(dir / "cfg.json");
    CHECK(c.sim.layout.buttons().size() == 4);
    CHECK(c.sim.ur3.size() == 6);
}

TEST_CASE("session metrics") {
    const auto m = session_metrics(SessionLog::parse(log_text(sim::Mode::CobotAR, "perfect")), "x");
    CHECK(m.time_s == doctest::Approx(25.5));
    CHECK(m.error_mm <= 25.0 * 0.02);
    CHECK(m.mode == "cobotar");
    CHECK(m.faults == 0);

    SessionLog no_end;
    const auto full = SessionLog::parse(log_text(sim::Mode::Gamepad, "perfect"));
    for (const auto& r : full.records()) {
        if (!(r["kind"] == "input" && r.value("event", "") == "end")) no_end.append(r);
    }
    CHECK_THROWS_AS(session_metrics(no_end), SessionError);
}

TEST_CASE("report with one log has no statistics") {
    const auto r = build_report({{"one.jsonl", log_text(sim::Mode::CobotAR, "perfect")}});
    CHECK(r.sessions.size() == 1);
    CHECK_FALSE(r.statistics);
    CHECK_FALSE(r.to_json().contains("statistics"));
}

TEST_CASE("report lists broken sessions with line numbers") {
    std::string text = log_text(sim::Mode::Pendant, "perfect");
    std::istringstream is(text);
    std::string line, broken;
    for (int i = 1; std::getline(is, line); ++i) broken += (i == 5 ? std::string("{oops") : line) + "\n";

    std::string no_end;
    std::istringstream is2(text);
    while (std::getline(is2, line)) {
        if (line.find("\"event\":\"end\"") == std::string::npos) no_end += line + "\n";
    }
    const auto r = build_report({{"broken", broken}, {"no_end", no_end}, {"ok", text}});
    CHECK(r.sessions.size() == 1);
    REQUIRE(r.errors.size() == 2);
    CHECK(r.errors[0].source == "broken");
    CHECK(r.errors[0].line == 5u);
    CHECK(r.errors[1].source == "no_end");
    CHECK(r.errors[1].message.find("end marker") != std::string::npos);
}

TEST_CASE("report statistics on separated groups") {
    // Three interfaces, twelve participants, known separation.
    auto make = [](long participant, const std::string& mode, double time, double error) {
        SessionLog log;
        log.append(Record{{"kind", "session"}, {"mode", mode}, {"participant", participant},
                          {"task", {{"kind", "square"}, {"center", {0.0, 0.0}}, {"side", 150.0}}}});
        log.append(Record{{"kind", "input"}, {"t", 1.0}, {"input", "task"}, {"event", "start"}});
        log.append(Record{{"kind", "sample"}, {"t", 1.0}, {"q", json::array()}, {"tcp", {0.075 + error / 1000, 0.0, 0.3}}, {"mode", mode}});
        log.append(Record{{"kind", "input"}, {"t", 1.0 + time}, {"input", "task"}, {"event", "end"}});
        return log.to_string();
    };
    std::vector<LogSource> sources;
    for (long p = 1; p <= 12; ++p) {
        const double jitter = 0.3 * static_cast<double>((p * 7) % 5);
        sources.push_back({"g" + std::to_string(p), make(p, "gamepad", 20 + jitter, 1 + 0.1 * p)});
        sources.push_back({"c" + std::to_string(p), make(p, "cobotar", 27 + jitter * 1.3, 2 + 0.05 * p)});
        sources.push_back({"p" + std::to_string(p), make(p, "pendant", 38 - jitter, 1.5 + 0.02 * p * p)});
    }
    const auto r = build_report(sources);
    REQUIRE(r.statistics);
    CHECK(r.errors.empty());
    // 2 metrics x (one-way + rm + 3 pairs)
    CHECK(r.statistics->size() == 10);
    const auto& ow = r.statistics->front();
    CHECK(ow.metric == "time_s");
    CHECK(ow.test == "one_way_anova");
    CHECK(ow.groups == std::vector<std::string>{"gamepad", "cobotar", "pendant"});
    CHECK(ow.result.df1 == 2);
    CHECK(ow.result.df2 == 33);
    CHECK(ow.result.p_value < 0.05);
    CHECK(ow.inputs_digest.size() == 64);

    const auto doc = r.to_json();
    CHECK(doc["statistics"][0].contains("inputs_digest"));
    CHECK(doc["statistics"][2]["df"].size() == 1);

    std::ostringstream csv;
    r.write_csv(csv);
    CHECK(csv.str().rfind("participant,interface,time_s,error_mm,tlx\n", 0) == 0);

    // Digest only depends on the inputs.
    const auto again = build_report(sources);
    CHECK(again.statistics->front().inputs_digest == ow.inputs_digest);
}

TEST_CASE("sha256") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("TLX sheets attach to sessions") {
    const auto tlx = parse_tlx(R"([{"participant":0,"mode":"cobotar","scale_max":10,"scores":[2.83,3.08,4.08,2.17,3.5,3.67]}])");
    const auto r = build_report({{"one", log_text(sim::Mode::CobotAR, "perfect")}}, tlx);
    REQUIRE(r.sessions[0].tlx);
    CHECK(*r.sessions[0].tlx == doctest::Approx(32.22).epsilon(1e-3));
    CHECK_THROWS(parse_tlx(R"([{"participant":0,"mode":"cobotar","scores":[1,2,3]}])"));
    CHECK_THROWS(parse_tlx(R"([{"participant":0,"mode":"cobotar","scores":[11,2,3,4,5,6]}])"));
}

TEST_CASE("log round trip is byte-identical") {
    const auto text = log_text(sim::Mode::Gamepad, "noisy:4:0.1");
    CHECK(SessionLog::parse(text).to_string() == text);
}

TEST_CASE("replay") {
    const auto text = log_text(sim::Mode::CobotAR, "noisy:2:0.1");
    const auto log = SessionLog::parse(text);

    std::ostringstream out;
    double slept = 0.0;
    replay(log, 2.0, out, [&](double s) { slept += s; });
    const auto last_t = log.records().back()["t"].get<double>();
    CHECK(slept == doctest::Approx(last_t / 2.0).epsilon(1e-9));

    std::istringstream is(out.str());
    std::string line;
    long seq = 0;
    bool saw_state = false;
    while (std::getline(is, line)) {
        const auto m = json::parse(line);
        CHECK(m["v"] == 1);
        CHECK(m["seq"].get<long>() == ++seq);
        saw_state = saw_state || m["type"] == "state";
    }
    CHECK(saw_state);

    const auto back = capture_to_log(out.str());
    CHECK(back.to_string() == text);
    const auto a = build_report({{"orig", text}}).to_json();
    const auto b = build_report({{"orig", out.str()}}).to_json();
    CHECK(a.dump() == b.dump());

    CHECK_THROWS_AS(replay(log, 0.0, out), std::invalid_argument);
    CHECK_THROWS_AS(replay(log, -1.0, out), std::invalid_argument);
    CHECK_THROWS_AS(capture_to_log(msg(2, "state", {{"t", 0}}) + "\n" + msg(1, "state", {{"t", 1}}) + "\n"), LogParseError);
}

TEST_CASE("protocol: validation closes the connection") {
    ProtocolSession s(defaults());
    CHECK(json::parse(s.hello())["type"] == "session");

    SUBCASE("malformed JSON") {
        const auto r = s.on_message("{nope");
        CHECK(r.close);
        REQUIRE(r.frames.size() == 1);
        CHECK(json::parse(r.frames[0])["type"] == "error");
    }
    SUBCASE("unknown type") { CHECK(s.on_message(msg(1, "teleport")).close); }
    SUBCASE("wrong version") { CHECK(s.on_message(R"({"v":2,"seq":1,"type":"stick","x":0,"y":0})").close); }
    SUBCASE("sequence must increase") {
        CHECK_FALSE(s.on_message(msg(5, "task", {{"event", "start"}})).close);
        CHECK(s.on_message(msg(5, "task", {{"event", "end"}})).close);
    }
    SUBCASE("bad fields") {
        CHECK(s.on_message(msg(1, "stick", {{"x", "left"}, {"y", 0}})).close);
        CHECK(ProtocolSession(defaults()).on_message(msg(1, "pendant", {{"action", "+z"}, {"pressed", true}})).close);
        CHECK(ProtocolSession(defaults()).on_message(msg(1, "hand_update", {{"lm", {{0.1, 0.2, 0}}}})).close);
        CHECK(ProtocolSession(defaults()).on_message(msg(1, "hand_update", {{"fingertip", {0.5}}, {"gesture", "One"}})).close);
        CHECK(ProtocolSession(defaults()).on_message(msg(1, "set_mode", {{"mode", "fly"}})).close);
    }
}

TEST_CASE("protocol: idle session holds position") {
    ProtocolSession s(defaults());
    const auto q0 = s.world().ur3_q;
    json last;
    for (int i = 0; i < 25; ++i) {
        const auto f = frames(s.tick());
        REQUIRE(f.size() == 1);
        last = f[0];
    }
    CHECK(s.world().ur3_q == q0);
    CHECK(last["type"] == "state");
    CHECK(last["t"] == doctest::Approx(0.5));
    CHECK(last["gui_buttons"].size() == 4);
    CHECK(last["active_button"].is_null());
    CHECK(last["q"].size() == 6);
    CHECK(sim::check_invariants(s.world(), defaults().sim).empty());
}

TEST_CASE("protocol: Palm then One over +y moves the TCP up") {
    auto cfg = defaults();
    ProtocolSession s(cfg);
    long seq = 0;
    CHECK_FALSE(s.on_message(msg(++seq, "set_mode", {{"mode", "cobotar"}})).close);
    CHECK_FALSE(s.on_message(msg(++seq, "task", {{"event", "start"}})).close);
    (void)s.tick();

    const auto& up = cfg.sim.layout.button_for(projection::Action::PosY);
    const double y0 = s.world().tcp_mm().y();
    std::vector<json> events;
    double last_y = y0;
    bool increasing = true;
    for (int i = 0; i < 60; ++i) {
        const auto tip = projection::gui_to_image(cfg.sim.camera, s.world().follower, s.world().projection_target,
                                                  up.rect.center());
        const auto label = i < 4 ? gesture::GestureLabel::Palm : gesture::GestureLabel::One;
        if (i % 2 == 0) {
            // Alternate between landmark frames and pre-classified pairs.
            const auto h = gesture::make_canonical_hand(tip, label);
            json lm = json::array();
            for (const auto& p : h.landmarks) lm.push_back({p.x(), p.y(), p.z()});
            REQUIRE_FALSE(s.on_message(msg(++seq, "hand_update", {{"t", i / 30.0}, {"lm", lm}})).close);
        } else {
            REQUIRE_FALSE(s.on_message(msg(++seq, "hand_update",
                                           {{"fingertip", {tip.x(), tip.y()}}, {"gesture", std::string(gesture::to_string(label))}}))
                              .close);
        }
        for (const auto& f : frames(s.tick())) {
            if (f["type"] == "press_event") events.push_back(f);
            if (f["type"] == "state") {
                increasing = increasing && f["tcp"][1].get<double>() * 1000 >= last_y - 1e-9;
                last_y = f["tcp"][1].get<double>() * 1000;
            }
        }
    }
    REQUIRE(events.size() == 1);
    CHECK(events[0]["action"] == "+y");
    CHECK(events[0]["event"] == "activated");
    CHECK(increasing);
    CHECK(s.world().tcp_mm().y() > y0 + 10.0);
    CHECK(s.world().active_button(cfg.sim) == up.id);

    (void)s.on_message(msg(++seq, "task", {{"event", "end"}}));
    (void)s.tick();
    REQUIRE(s.finished_logs().size() == 1);
    const auto m = session_metrics(s.finished_logs()[0]);
    CHECK(m.mode == "cobotar");
    CHECK(m.time_s > 0.0);
}

TEST_CASE("protocol: inputs for another mode raise faults") {
    ProtocolSession s(defaults());
    (void)s.on_message(msg(1, "stick", {{"x", 1}, {"y", 0}}));
    const auto f = frames(s.tick());
    REQUIRE(f.size() == 2);
    CHECK(f[0]["type"] == "fault");
    CHECK(f[1]["type"] == "state");

    (void)s.on_message(msg(2, "set_mode", {{"mode", "gamepad"}}));
    (void)s.on_message(msg(3, "stick", {{"x", 1}, {"y", 0}}));
    const double x0 = s.world().tcp_mm().x();
    for (int i = 0; i < 10; ++i) (void)s.tick();
    CHECK(s.world().tcp_mm().x() > x0 + 4.0);

    (void)s.on_message(msg(4, "task", {{"event", "start"}}));
    (void)s.on_message(msg(5, "set_mode", {{"mode", "pendant"}}));
    const auto g = frames(s.tick());
    bool fault = false;
    for (const auto& m : g) fault = fault || m["type"] == "fault";
    CHECK(fault);
    CHECK(s.mode() == sim::Mode::Gamepad);
}

TEST_CASE("protocol: pendant press and release") {
    auto cfg = defaults();
    cfg.mode = sim::Mode::Pendant;
    ProtocolSession s(cfg);
    (void)s.on_message(msg(1, "pendant", {{"action", "-x"}, {"pressed", true}}));
    const double x0 = s.world().tcp_mm().x();
    for (int i = 0; i < 40; ++i) (void)s.tick();
    CHECK(s.world().tcp_mm().x() < x0 - 5.0);
    (void)s.on_message(msg(2, "pendant", {{"action", "-x"}, {"pressed", false}}));
    for (int i = 0; i < 40; ++i) (void)s.tick();
    const double x1 = s.world().tcp_mm().x();
    for (int i = 0; i < 10; ++i) (void)s.tick();
    CHECK(s.world().tcp_mm().x() == x1);
}

TEST_CASE("server end to end") {
    namespace beast = boost::beast;
    namespace websocket = beast::websocket;
    using tcp = boost::asio::ip::tcp;

    auto cfg = defaults();
    cfg.server.port = 0;
    cfg.server.log_dir = scratch_dir("server");
    cfg.mode = sim::Mode::Gamepad;
    Server server(cfg);
    const auto port = server.port();
    std::thread loop([&] { server.run(); });
    struct Joiner {
        Server& server;
        std::thread& loop;
        ~Joiner() {
            server.stop();
            if (loop.joinable()) loop.join();
        }
    } joiner{server, loop};

    boost::asio::io_context io;
    tcp::resolver resolver(io);
    websocket::stream<tcp::socket> ws(io);
    boost::asio::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws.handshake("127.0.0.1", "/");
    ws.text(true);

    auto read = [&] {
        beast::flat_buffer buf;
        ws.read(buf);
        return json::parse(beast::buffers_to_string(buf.data()));
    };
    const auto hello = read();
    CHECK(hello["type"] == "session");
    CHECK(hello["mode"] == "gamepad");

    SUBCASE("second operator is turned away") {
        websocket::stream<tcp::socket> other(io);
        boost::asio::connect(other.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
        other.handshake("127.0.0.1", "/");
        beast::flat_buffer buf;
        other.read(buf);
        CHECK(json::parse(beast::buffers_to_string(buf.data()))["type"] == "error");
        beast::error_code ec;
        buf.clear();
        other.read(buf, ec);
        CHECK(ec);
    }

    SUBCASE("drive, end the task and get a persisted log") {
        ws.write(boost::asio::buffer(msg(1, "task", {{"event", "start"}})));
        ws.write(boost::asio::buffer(msg(2, "stick", {{"x", 0}, {"y", 1}})));
        double y_first = 0, y_last = 0;
        long last_seq = hello["seq"];
        int states = 0;
        while (states < 30) {
            const auto m = read();
            CHECK(m["seq"].get<long>() > last_seq);
            last_seq = m["seq"];
            if (m["type"] != "state") continue;
            if (states == 0) y_first = m["tcp"][1];
            y_last = m["tcp"][1];
            ++states;
        }
        CHECK(y_last > y_first);
        ws.write(boost::asio::buffer(msg(3, "stick", {{"x", 0}, {"y", 0}})));
        ws.write(boost::asio::buffer(msg(4, "task", {{"event", "end"}})));
        for (;;) {
            const auto m = read();
            if (m["type"] == "task" && m["event"] == "end") break;
        }
        for (int i = 0; i < 100 && server.saved_logs().empty(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
        REQUIRE(server.saved_logs().size() == 1);
        const auto log = SessionLog::load(server.saved_logs()[0]);
        const auto m = session_metrics(log);
        CHECK(m.mode == "gamepad");
        CHECK(m.time_s > 0.5);
    }

    SUBCASE("malformed frame gets an error and a close") {
        ws.write(boost::asio::buffer(std::string("{garbage")));
        json m;
        do {
            m = read();
        } while (m["type"] == "state");
        CHECK(m["type"] == "error");
        beast::flat_buffer buf;
        beast::error_code ec;
        while (!ec) ws.read(buf, ec);
        CHECK(ec == websocket::error::closed);
    }

    beast::error_code ec;
    ws.close(websocket::close_code::normal, ec);
}

TEST_CASE("server port busy") {
    auto cfg = defaults();
    cfg.server.port = 0;
    Server first(cfg);
    cfg.server.port = first.port();
    CHECK_THROWS_AS(Server{cfg}, std::system_error);
}

}  // TEST_SUITE
