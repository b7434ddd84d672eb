#include "cal/server.hpp"

#include "session_kit.hpp"
#include "testkit.hpp"

#include <doctest.h>
#include <httplib.h>

#include <thread>

using namespace cal;

namespace {

nlohmann::json session_body(std::size_t q = 1, std::size_t max_cycles = 4) {
    return {{"dataset", "moons"},
            {"folds", 5},
            {"fold", 0},
            {"learner",
             {{"model", "rwm"},
              {"n_init", 4},
              {"query_size", q},
              {"max_cycles", max_cycles},
              {"vi", {{"max_components", 4}, {"restarts", 1}}}}}};
}

struct Fixture {
    testkit::TempDir tmp{"srv"};
    Dataset data = testkit::write_moons(tmp.path(), "moons", 100, 3);
    testkit::TruthAnnotator truth{data, 5, 0, 0};
};

}  // namespace

TEST_CASE("dataset listing and session creation") {
    Fixture f;
    SessionService svc(f.tmp.path());
    auto ds = svc.datasets();
    CHECK(ds.status == 200);
    CHECK(ds.body["datasets"].size() == 1);

    auto ok = svc.create(session_body());
    REQUIRE(ok.status == 201);
    CHECK(ok.body["query"]["type"] == "sample");
    CHECK(ok.body["query"]["initial"] == true);
    CHECK(svc.size() == 1);

    auto unknown = session_body();
    unknown["dataset"] = "nope";
    CHECK(svc.create(unknown).status == 400);
    CHECK(svc.create(session_body(1000)).status == 400);
    CHECK(svc.create(nlohmann::json::array()).status == 400);
    CHECK(svc.query("missing").status == 404);
}

TEST_CASE("label validation and stale tokens") {
    Fixture f;
    SessionService svc(f.tmp.path());
    auto c = svc.create(session_body());
    auto id = c.body["id"].get<std::string>();
    auto q = c.body["query"];

    auto bad_conf = f.truth.answer(q);
    bad_conf["confidence"] = 1.2;
    CHECK(svc.label(id, bad_conf).status == 422);
    CHECK(svc.label(id, {{"label", 0}}).status == 422);
    auto out_of_range = f.truth.answer(q);
    out_of_range["label"] = 7;
    CHECK(svc.label(id, out_of_range).status == 422);

    auto good = f.truth.answer(q);
    auto r = svc.label(id, good);
    REQUIRE(r.status == 200);
    CHECK(r.body["accepted"] == true);
    CHECK(svc.label(id, good).status == 409);
    CHECK(svc.label("missing", good).status == 404);

    // labels by class name are accepted too
    auto next = r.body["next"];
    auto by_name = f.truth.answer(next);
    by_name["label"] = next["class_names"][by_name["label"].get<std::size_t>()];
    CHECK(svc.label(id, by_name).status == 200);
}

TEST_CASE("a session runs to completion and exposes its curve and record") {
    Fixture f;
    SessionService svc(f.tmp.path());
    auto c = svc.create(session_body(2, 3));
    auto id = c.body["id"].get<std::string>();
    auto q = c.body["query"];
    CHECK(svc.record(id).status == 409);
    std::size_t steps = 0;
    while (q["type"] != "none") {
        auto r = svc.label(id, f.truth.answer(q));
        REQUIRE(r.status == 200);
        q = r.body["next"];
        REQUIRE(++steps < 100);
    }
    auto st = svc.status(id);
    CHECK(st.body["stopped"] == true);
    CHECK(st.body["stop_reason"] == "max_cycles");
    CHECK(st.body["curve"].size() == 3 + 1);
    CHECK(st.body["cost_spent"].get<double>() == doctest::Approx(4 + 3 * 2));
    for (const auto& p : st.body["prompts"]) {
        auto comp = p["component"].get<std::size_t>();
        CHECK(st.body["rules"][comp]["confidence"].get<double>() > 0.9);
    }
    auto rec = svc.record(id);
    CHECK(rec.status == 200);
    auto run = RunRecord::from_jsonl(rec.text);
    CHECK(run.cycles.size() == 4);
    CHECK(run.footer.contains("mixture"));
}

TEST_CASE("stop is idempotent and final") {
    Fixture f;
    SessionService svc(f.tmp.path());
    auto c = svc.create(session_body());
    auto id = c.body["id"].get<std::string>();
    CHECK(svc.stop(id).status == 200);
    auto again = svc.stop(id);
    CHECK(again.status == 200);
    CHECK(again.body["stop_reason"] == "stopped");
    CHECK(svc.label(id, f.truth.answer(c.body["query"])).status == 409);
    CHECK(svc.query(id).body["type"] == "none");
}

TEST_CASE("journal replay restores the pending query") {
    Fixture f;
    auto journal = f.tmp.path() / "journal";
    std::string id;
    nlohmann::json pending;
    {
        SessionService svc(f.tmp.path(), journal);
        auto c = svc.create(session_body(2));
        id = c.body["id"].get<std::string>();
        auto q = c.body["query"];
        for (int i = 0; i < 7; ++i) {
            q = svc.label(id, f.truth.answer(q)).body["next"];
        }
        pending = svc.query(id).body;
    }
    // a torn final line is ignored
    std::ofstream(journal / (id + ".jsonl"), std::ios::app) << R"({"event": "lab)";
    SessionService back(f.tmp.path(), journal);
    CHECK(back.size() == 1);
    CHECK(back.query(id).body == pending);
}

TEST_CASE("HTTP routes") {
    Fixture f;
    SessionService svc(f.tmp.path());
    httplib::Server server;
    mount_api(server, svc);
    int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    httplib::Client cli("127.0.0.1", port);
    auto ds = cli.Get("/api/v1/datasets");
    REQUIRE(ds);
    CHECK(ds->status == 200);
    auto c = cli.Post("/api/v1/sessions", session_body().dump(), "application/json");
    REQUIRE(c);
    CHECK(c->status == 201);
    auto body = nlohmann::json::parse(c->body);
    auto id = body["id"].get<std::string>();
    auto q = body["query"];
    for (int i = 0; i < 4; ++i) {
        auto l = cli.Post("/api/v1/sessions/" + id + "/label", f.truth.answer(q).dump(), "application/json");
        REQUIRE(l);
        CHECK(l->status == 200);
        q = nlohmann::json::parse(l->body)["next"];
    }
    auto bad = cli.Post("/api/v1/sessions/" + id + "/label", "{oops", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);
    auto st = cli.Get("/api/v1/sessions/" + id + "/status");
    REQUIRE(st);
    CHECK(nlohmann::json::parse(st->body)["curve"].size() == 1);
    auto missing = cli.Get("/api/v1/sessions/nope/query");
    REQUIRE(missing);
    CHECK(missing->status == 404);
    CHECK(cli.Post("/api/v1/sessions/" + id + "/stop")->status == 200);
    auto rec = cli.Get("/api/v1/sessions/" + id + "/record");
    REQUIRE(rec);
    CHECK(rec->status == 200);

    server.stop();
    t.join();
}
