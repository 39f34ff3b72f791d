#include <gtest/gtest.h>

#include <atomic>

#include <unistd.h>

#include "medbt/definitional.hpp"
#include "support/generators.hpp"
#include "support/test_server.hpp"

using namespace medbt;
using namespace medbt::service;
using namespace medbt::literals;

namespace {

fs::path fresh_dir(const std::string& name)
{
  const fs::path d = fs::temp_directory_path() / ("medbt_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

ProtocolRegistry& corpus_protocols()
{
  static ProtocolRegistry* r = [] {
    auto* p = new ProtocolRegistry;
    p->load_corpus(MEDBT_CORPUS_DIR);
    return p;
  }();
  return *r;
}

std::string start(SessionStore& store, const std::string& protocol, Blackboard bb = {})
{
  SessionRequest req;
  req.protocol = protocol;
  req.blackboard = std::move(bb);
  return store.create(corpus_protocols().get(protocol), req);
}

std::string pending_leaf(const Session& s) { return s.pending().empty() ? "" : s.pending().front().leaf; }

}  // namespace

TEST(Session, FreshBloodDrawWaitsOnReadiness)
{
  SessionStore store;
  const auto id = start(store, "blood-draw");
  const Session s = store.snapshot(id);
  EXPECT_EQ(s.status(), Status::Running);
  EXPECT_EQ(pending_leaf(s), "PatientReady");
  EXPECT_FALSE(s.waiting_until());
  const auto v = s.view();
  EXPECT_EQ(v["pending"]["prompt"], "Patient ready?");
  EXPECT_EQ(v["statuses"]["main"], "running");
  EXPECT_EQ(v["statuses"]["select_site"], "idle");
  const auto& tree = s.engine().tree().source();
  for (const auto& [nid, n] : tree.nodes) {
    if (!is_leaf(n) || leaf_name(n) == "PatientReady") continue;
    const bool before = leaf_name(n) == "AssembleEquipment" || leaf_name(n) == "IdentifyPatient";
    EXPECT_EQ(v["statuses"][nid], before ? "success" : "idle") << nid;
  }
}

TEST(Session, BothArmsFailPropagatesToRoot)
{
  SessionStore store;
  const auto id = start(store, "blood-draw");
  store.mutate(id, [](Session& s) {
    s.submit("PatientReady", Status::Success, std::nullopt);
    s.submit("SuitableVeinLeftArm", Status::Failure, std::nullopt);
    s.submit("SuitableVeinRightArm", Status::Failure, std::nullopt);
  });
  const Session s = store.snapshot(id);
  EXPECT_EQ(s.status(), Status::Failure);
  EXPECT_TRUE(s.pending().empty());
  const auto v = s.view();
  EXPECT_EQ(v["statuses"]["main"], "failure");
  EXPECT_EQ(v["statuses"]["select_site"], "failure");
  EXPECT_EQ(v["statuses"][s.engine().tree().source().root().children.front()], "failure");
}

TEST(Session, RightArmProceedsPastSelector)
{
  SessionStore store;
  const auto id = start(store, "blood-draw");
  store.mutate(id, [](Session& s) {
    s.submit("PatientReady", Status::Success, std::nullopt);
    s.submit("SuitableVeinLeftArm", Status::Failure, std::nullopt);
    s.submit("SuitableVeinRightArm", Status::Success, std::nullopt);
  });
  const auto v = store.snapshot(id).view();
  EXPECT_EQ(v["status"], "success");
  EXPECT_EQ(v["statuses"]["select_site"], "success");
  EXPECT_EQ(v["statuses"]["left_arm"], "failure");
  EXPECT_EQ(v["statuses"]["right_arm"], "success");
}

TEST(Session, MismatchedLeafLeavesSessionUnchanged)
{
  SessionStore store;
  const auto id = start(store, "blood-draw");
  const Session before = store.snapshot(id);
  EXPECT_THROW(store.mutate(id, [](Session& s) { s.submit("SuitableVeinLeftArm", Status::Success, std::nullopt); }), Conflict);
  EXPECT_THROW(store.mutate(id, [](Session& s) { s.submit("PatientReady", Status::Success, std::nullopt, 7); }), Conflict);
  EXPECT_EQ(store.snapshot(id), before);
}

TEST(Session, TerminalSessionRejectsInput)
{
  SessionStore store;
  const auto id = start(store, "blood-draw");
  store.mutate(id, [](Session& s) { s.submit("PatientReady", Status::Failure, std::nullopt); });
  EXPECT_EQ(store.snapshot(id).status(), Status::Failure);
  EXPECT_THROW(store.mutate(id, [](Session& s) { s.submit("PatientReady", Status::Success, std::nullopt); }), Conflict);
  EXPECT_THROW(store.mutate(id, [](Session& s) { s.advance(std::nullopt); }), Conflict);
}

TEST(Session, SingleActionCompletesImmediately)
{
  ProtocolRegistry reg;
  reg.upload("one", "root\n  action Done\n");
  SessionStore store;
  SessionRequest req;
  req.protocol = "one";
  const auto id = store.create(reg.get("one"), req);
  const Session s = store.snapshot(id);
  EXPECT_EQ(s.status(), Status::Success);
  EXPECT_TRUE(s.pending().empty());
  EXPECT_TRUE(s.view()["pending"].is_null());
}

TEST(Session, ForkDivergesAndOriginalIsUntouched)
{
  SessionStore store;
  const auto id = start(store, "blood-draw");
  store.mutate(id, [](Session& s) { s.submit("PatientReady", Status::Success, std::nullopt); });
  const Session before = store.snapshot(id);
  const auto fork_id = store.fork(id);
  EXPECT_NE(fork_id, id);
  EXPECT_EQ(store.snapshot(id), before);
  store.mutate(id, [](Session& s) { s.submit("SuitableVeinLeftArm", Status::Success, std::nullopt); });
  store.mutate(fork_id, [](Session& s) { s.submit("SuitableVeinLeftArm", Status::Failure, std::nullopt); });
  EXPECT_EQ(store.snapshot(id).status(), Status::Success);
  EXPECT_EQ(pending_leaf(store.snapshot(fork_id)), "SuitableVeinRightArm");
  EXPECT_EQ(store.replay(fork_id), store.snapshot(fork_id));
  EXPECT_EQ(store.replay(id), store.snapshot(id));

  const auto terminal_fork = store.fork(id);
  EXPECT_EQ(store.snapshot(terminal_fork).status(), Status::Success);
  EXPECT_EQ(store.snapshot(terminal_fork).view()["forkedFrom"], id);
}

TEST(Session, UnknownIdIsNotFound)
{
  SessionStore store;
  EXPECT_THROW(store.snapshot("nope"), NotFound);
  EXPECT_THROW(store.fork("nope"), NotFound);
  EXPECT_THROW(corpus_protocols().get("nope"), NotFound);
}

TEST(Session, TimerWaitsForExplicitAdvance)
{
  ProtocolRegistry reg;
  reg.upload("timer", "root\n  sequence\n    action Start\n    every Tca\n      query Normal\n");
  SessionStore store;
  SessionRequest req;
  req.protocol = "timer";
  req.blackboard.set("Tca", 6_h);
  const auto id = store.create(reg.get("timer"), req);
  Session s = store.snapshot(id);
  EXPECT_EQ(s.status(), Status::Running);
  EXPECT_TRUE(s.pending().empty());
  EXPECT_EQ(s.waiting_until(), Timestamp{} + 6_h);
  EXPECT_EQ(s.view()["waitingUntil"], 6 * 3600);
  EXPECT_THROW(store.mutate(id, [](Session& x) { x.submit("Normal", Status::Success, std::nullopt); }), Conflict);

  store.mutate(id, [](Session& x) { x.advance(std::nullopt); });
  s = store.snapshot(id);
  EXPECT_EQ(s.engine().now(), Timestamp{} + 6_h);
  EXPECT_EQ(pending_leaf(s), "Normal");

  store.mutate(id, [](Session& x) { x.submit("Normal", Status::Failure, 20_min); });
  s = store.snapshot(id);
  EXPECT_EQ(s.engine().now(), Timestamp{} + 6_h + 20_min);
  // Next firing counts from the scheduled fire time, not from the answer.
  EXPECT_EQ(s.waiting_until(), Timestamp{} + 12_h);

  store.mutate(id, [](Session& x) { x.advance(std::nullopt); });
  store.mutate(id, [](Session& x) { x.submit("Normal", Status::Success, std::nullopt); });
  EXPECT_EQ(store.snapshot(id).status(), Status::Success);
  EXPECT_EQ(store.replay(id), store.snapshot(id));
}

TEST(Session, ElapsedPastATimerFiringIsProcessedInOrder)
{
  ProtocolRegistry reg;
  reg.upload("race", "root\n  parallel 1\n    every P\n      query Alarm when X > 1\n    query Answer\n");
  SessionStore store;
  SessionRequest req;
  req.protocol = "race";
  req.blackboard.set("P", 10_min);
  req.blackboard.set("X", 5.0);
  const auto id = store.create(reg.get("race"), req);
  EXPECT_EQ(pending_leaf(store.snapshot(id)), "Answer");
  // The alarm fires at 10 min, before this answer would land at 1 h.
  EXPECT_THROW(store.mutate(id, [](Session& s) { s.submit("Answer", Status::Success, 1_h); }), Conflict);
  EXPECT_EQ(store.snapshot(id).version(), 1u);
  store.mutate(id, [](Session& s) { s.submit("Answer", Status::Success, 5_min); });
  EXPECT_EQ(store.snapshot(id).status(), Status::Success);
  EXPECT_EQ(store.snapshot(id).engine().now(), Timestamp{} + 5_min);
}

TEST(SessionStore, LogsSurviveRestart)
{
  const auto dir = fresh_dir("store");
  std::string id;
  std::string fork_id;
  Session live_a = [&] {
    SessionStore store(dir, 1);
    SessionRequest req;
    req.protocol = "blood-draw";
    id = store.create(corpus_protocols().get("blood-draw"), req);
    store.mutate(id, [](Session& s) { s.submit("PatientReady", Status::Success, 2_min); });
    fork_id = store.fork(id);
    store.mutate(fork_id, [](Session& s) { s.submit("SuitableVeinLeftArm", Status::Failure, std::nullopt); });
    EXPECT_EQ(store.replay(id), store.snapshot(id));
    EXPECT_EQ(store.replay(fork_id), store.snapshot(fork_id));
    return store.snapshot(id);
  }();
  SessionStore reopened(dir, 2);
  EXPECT_EQ(reopened.ids().size(), 2u);
  EXPECT_EQ(reopened.snapshot(id), live_a);
  EXPECT_EQ(pending_leaf(reopened.snapshot(fork_id)), "SuitableVeinRightArm");
  std::ifstream log(dir / "sessions" / (id + ".jsonl"));
  std::size_t lines = 0;
  for (std::string line; std::getline(log, line);) ++lines;
  EXPECT_EQ(lines, 2u);
}

TEST(SessionStore, UploadedProtocolsPersist)
{
  const auto dir = fresh_dir("protocols");
  {
    ProtocolRegistry reg(dir);
    reg.upload("mine", "root\n  action A\n");
    EXPECT_THROW(reg.upload("mine", "root\n  action B\n"), Conflict);
    EXPECT_THROW(reg.upload("bad name", "root\n  action B\n"), BadRequest);
    EXPECT_THROW(reg.upload("broken", "root\n  sequence\n"), BadRequest);
  }
  ProtocolRegistry again(dir);
  EXPECT_EQ(again.get("mine").origin, "uploaded");
  EXPECT_THROW(again.get("broken"), NotFound);
}

TEST(SessionStore, ConcurrentSubmissionsAcceptExactlyOne)
{
  for (int round = 0; round < 20; ++round) {
    SessionStore store;
    const auto id = start(store, "blood-draw");
    std::atomic<int> accepted{0};
    std::atomic<int> rejected{0};
    auto worker = [&](Status outcome) {
      try {
        store.mutate(id, [&](Session& s) { s.submit("PatientReady", outcome, std::nullopt); });
        ++accepted;
      } catch (const Conflict&) {
        ++rejected;
      }
    };
    std::thread a(worker, Status::Success);
    std::thread b(worker, Status::Failure);
    a.join();
    b.join();
    EXPECT_EQ(accepted.load(), 1);
    EXPECT_EQ(rejected.load(), 1);
    EXPECT_EQ(store.snapshot(id).version(), 2u);
  }
}

TEST(SessionStore, PromptOrderFollowsTreeOrder)
{
  // Random answers: prompts appear in strictly increasing preorder position
  // and the final status equals a direct evaluation with the same answers.
  gen::Rng rng(77);
  const auto& tree = corpus_protocols().get("blood-draw").tree;
  std::map<std::string, std::size_t> position;
  std::size_t i = 0;
  for_each_preorder(tree, [&](const Node& n, std::size_t) {
    if (is_leaf(n)) position[leaf_name(n)] = i;
    ++i;
  });
  for (int trial = 0; trial < 100; ++trial) {
    SessionStore store;
    const auto id = start(store, "blood-draw");
    std::map<std::string, Status, std::less<>> answers;
    std::size_t last = 0;
    for (;;) {
      const Session s = store.snapshot(id);
      if (s.terminal()) break;
      const std::string leaf = pending_leaf(s);
      ASSERT_FALSE(leaf.empty());
      EXPECT_GT(position[leaf], last);
      last = position[leaf];
      const Status o = gen::coin(rng, 0.6) ? Status::Success : Status::Failure;
      answers[leaf] = o;
      store.mutate(id, [&](Session& x) { x.submit(leaf, o, std::nullopt); });
    }
    LeafBindingSet direct;
    direct.set_fallback(LeafBinding::success());
    for (const auto& [name, o] : answers) direct.bind(name, o == Status::Success ? LeafBinding::success() : LeafBinding::failure());
    Engine e(tree, direct);
    EXPECT_EQ(store.snapshot(id).status(), e.run_to_completion());
  }
}

TEST(Http, ProtocolEndpoints)
{
  gen::TestServer server;
  auto c = server.client();
  auto list = gen::get_json(c, "/api/v1/protocols");
  ASSERT_EQ(list.status, 200);
  EXPECT_EQ(list.body.size(), 5u);
  auto calcium = gen::get_json(c, "/api/v1/protocols/calcium-management");
  ASSERT_EQ(calcium.status, 200);
  EXPECT_EQ(calcium.body["leaves"], 47);
  EXPECT_NE(calcium.body["dot"].get<std::string>().find("digraph"), std::string::npos);
  EXPECT_EQ(gen::get_json(c, "/api/v1/protocols/unknown").status, 404);

  auto up = gen::post_json(c, "/api/v1/protocols", {{"name", "tiny"}, {"dsl", "root\n  query Ok\n"}});
  EXPECT_EQ(up.status, 201);
  EXPECT_EQ(gen::post_json(c, "/api/v1/protocols", {{"name", "tiny"}, {"dsl", "root\n  query Ok\n"}}).status, 409);
  auto bad = gen::post_json(c, "/api/v1/protocols", {{"name", "bad"}, {"dsl", "root\n  sequence\n"}});
  EXPECT_EQ(bad.status, 400);
  EXPECT_NE(bad.body["error"].get<std::string>().find("2:"), std::string::npos);
  auto raw = c.Post("/api/v1/protocols?name=raw", "root\n  action A\n", "text/plain");
  ASSERT_TRUE(raw);
  EXPECT_EQ(raw->status, 201);
}

TEST(Http, BloodDrawSessionOverHttp)
{
  gen::TestServer server;
  auto c = server.client();
  auto created = gen::post_json(c, "/api/v1/sessions", {{"protocol", "blood-draw"}});
  ASSERT_EQ(created.status, 201);
  const std::string id = created.body["id"];
  EXPECT_EQ(created.body["pending"]["leaf"], "PatientReady");
  const std::string base = "/api/v1/sessions/" + id;

  EXPECT_EQ(gen::post_json(c, base + "/outcome", {{"leaf", "DrawBlood"}, {"outcome", "success"}}).status, 409);
  EXPECT_EQ(gen::post_json(c, base + "/outcome", {{"leaf", "PatientReady"}, {"outcome", "maybe"}}).status, 400);
  EXPECT_EQ(gen::post_json(c, base + "/outcome", {{"leaf", "PatientReady"}, {"outcome", "success"}, {"version", 9}}).status, 409);
  auto r = gen::post_json(c, base + "/outcome", {{"leaf", "PatientReady"}, {"outcome", "success"}, {"elapsed", "3m"}, {"version", 1}});
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["time"], 180);
  EXPECT_EQ(r.body["pending"]["leaf"], "SuitableVeinLeftArm");

  auto forked = gen::post_json(c, base + "/fork", nlohmann::json::object());
  ASSERT_EQ(forked.status, 201);
  const std::string fork_base = "/api/v1/sessions/" + forked.body["id"].get<std::string>();

  gen::post_json(c, base + "/outcome", {{"leaf", "SuitableVeinLeftArm"}, {"outcome", "failure"}});
  r = gen::post_json(c, base + "/outcome", {{"leaf", "SuitableVeinRightArm"}, {"outcome", "failure"}});
  EXPECT_EQ(r.body["status"], "failure");
  EXPECT_EQ(gen::post_json(c, base + "/outcome", {{"leaf", "SuitableVeinRightArm"}, {"outcome", "failure"}}).status, 409);

  gen::post_json(c, fork_base + "/outcome", {{"leaf", "SuitableVeinLeftArm"}, {"outcome", "failure"}});
  r = gen::post_json(c, fork_base + "/outcome", {{"leaf", "SuitableVeinRightArm"}, {"outcome", "success"}});
  EXPECT_EQ(r.body["status"], "success");
  EXPECT_EQ(r.body["statuses"]["select_site"], "success");

  auto page0 = gen::get_json(c, base + "/trace?page=0&size=5");
  ASSERT_EQ(page0.status, 200);
  EXPECT_EQ(page0.body["events"].size(), 5u);
  const std::size_t total = page0.body["total"];
  std::vector<std::int64_t> times;
  for (std::size_t p = 0; p * 5 < total; ++p) {
    const auto page = gen::get_json(c, base + "/trace?page=" + std::to_string(p) + "&size=5");
    for (const auto& e : page.body["events"]) times.push_back(e["t"]);
  }
  EXPECT_EQ(times.size(), total);
  EXPECT_TRUE(std::is_sorted(times.begin(), times.end()));
  EXPECT_EQ(gen::get_json(c, base + "/trace?page=x").status, 400);

  EXPECT_EQ(gen::get_json(c, "/api/v1/sessions/doesnotexist").status, 404);
  EXPECT_EQ(gen::post_json(c, "/api/v1/sessions", {{"protocol", "nope"}}).status, 404);
  EXPECT_EQ(gen::post_json(c, "/api/v1/sessions", {{"protocol", "blood-draw"}, {"blackboard", {{"x", {1, 2}}}}}).status, 400);

  EXPECT_EQ(server.sessions().replay(id), server.sessions().snapshot(id));
}

TEST(Http, AdvanceEndpoint)
{
  gen::TestServer server;
  auto c = server.client();
  auto created = gen::post_json(c, "/api/v1/sessions",
                                {{"protocol", "calcium-management"},
                                 {"interactive", "none"},
                                 {"bindings", {{"HighRisk", {{"kind", "failure"}}}, {"RoutinePostopCare", {{"kind", "success"}, {"duration", "3d"}}}}}});
  ASSERT_EQ(created.status, 201);
  EXPECT_EQ(created.body["status"], "running");
  EXPECT_EQ(created.body["waitingUntil"], 12 * 3600);
  const std::string base = "/api/v1/sessions/" + created.body["id"].get<std::string>();
  auto r = gen::post_json(c, base + "/advance", nlohmann::json::object());
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["status"], "success");
  EXPECT_EQ(r.body["time"], 12 * 3600);
  EXPECT_EQ(gen::post_json(c, base + "/advance", nlohmann::json::object()).status, 409);
}
