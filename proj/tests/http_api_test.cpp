#include <gtest/gtest.h>

#include "support/fixtures.hpp"
#include "support/http_session.hpp"

namespace imt {
namespace {

using testing::call;

class HttpTest : public ::testing::Test {
 protected:
  testing::TempDir dir;
  std::unique_ptr<Service> service =
      std::make_unique<Service>(dir.path(), testing::walkthrough_models());
  std::unique_ptr<testing::LiveServer> server = std::make_unique<testing::LiveServer>(*service);
  httplib::Client client{"127.0.0.1", server->port()};
};

TEST_F(HttpTest, ScriptedSession) {
  EXPECT_EQ(testing::run_scripted_session(client, "manual", toy::kWalkthroughSource,
                                          "press flush for O ring"),
            "");
}

TEST_F(HttpTest, ProjectsAndSettings) {
  auto r = call(client, "POST", "/projects", {{"name", "p"}, {"settings", {{"engine", "knn"}}}});
  ASSERT_EQ(r.status, 201);
  EXPECT_EQ(r.body.at("settings").at("engine"), "knn");
  r = call(client, "POST", "/projects", {{"name", "p"}});
  EXPECT_EQ(r.status, 409);
  EXPECT_EQ(r.body.at("code"), "conflict");
  r = call(client, "POST", "/projects", {{"name", "q"}, {"settings", {{"min_match_rate", 1.5}}}});
  EXPECT_EQ(r.status, 400);
  r = call(client, "GET", "/projects");
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body.size(), 1u);
  r = call(client, "PUT", "/projects/1/settings", {{"beam", 2}});
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body.at("beam"), 2);
  EXPECT_EQ(call(client, "GET", "/projects/1/settings").body.at("beam"), 2);
  EXPECT_EQ(call(client, "GET", "/projects/7/settings").status, 404);
}

TEST_F(HttpTest, BadRequests) {
  auto res = client.Post("/projects", "{oops", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(call(client, "POST", "/projects", {{"title", "x"}}).status, 400);
  EXPECT_EQ(call(client, "POST", "/segments/5/complete", {{"locked", ""}}).status, 404);
  call(client, "POST", "/projects", {{"name", "p"}});
  EXPECT_EQ(call(client, "POST", "/projects/1/tm", {{"nothing", 1}}).status, 400);
  EXPECT_EQ(call(client, "POST", "/projects/1/document", nlohmann::json::object()).status, 400);
}

TEST_F(HttpTest, SessionSurvivesRestart) {
  ASSERT_EQ(testing::run_scripted_session(client, "manual", toy::kWalkthroughSource,
                                          "press flush for O ring"),
            "");
  const auto before = service->snapshot();
  server.reset();
  service = std::make_unique<Service>(dir.path(), testing::walkthrough_models());
  server = std::make_unique<testing::LiveServer>(*service);
  httplib::Client fresh("127.0.0.1", server->port());
  EXPECT_EQ(service->snapshot().dump(), before.dump());
  const auto r = call(fresh, "GET", "/projects/1/segments");
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body[0].at("status"), "confirmed");
}

}  // namespace
}  // namespace imt
