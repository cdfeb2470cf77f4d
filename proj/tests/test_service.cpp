#include <gtest/gtest.h>

#include <httplib.h>

#include <cmath>
#include <json.hpp>
#include <sstream>
#include <thread>

#include "align/csv.hpp"
#include "align/estimation.hpp"
#include "align/service.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace align;
using nlohmann::json;

namespace {

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    service_ = std::make_unique<SessionService>(dir_.path());
    port_ = service_->bind("127.0.0.1", 0);
    thread_ = std::thread([this] { service_->listen_after_bind(); });
    service_->wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }
  void TearDown() override {
    service_->stop();
    thread_.join();
  }

  httplib::Result post(const std::string& path, const json& body) {
    return client_->Post(path, body.dump(), "application/json");
  }
  httplib::Result get(const std::string& path) { return client_->Get(path); }

  std::string create(const json& body = json::object()) {
    auto res = post("/api/sessions", body);
    EXPECT_EQ(res->status, 201) << res->body;
    return json::parse(res->body).at("session_id").get<std::string>();
  }

  httplib::Result submit(const std::string& id, const std::string& role, const std::string& stage,
                         const std::vector<double>& weights) {
    return post("/api/sessions/" + id + "/parties/" + role + "/allocations",
                {{"stage", stage}, {"weights", weights}});
  }

  TempDir dir_;
  std::unique_ptr<SessionService> service_;
  std::unique_ptr<httplib::Client> client_;
  std::thread thread_;
  int port_ = 0;
};

const std::vector<double> kA = {0.30, 0.20, 0.15, 0.15, 0.10, 0.10};
const std::vector<double> kC = {0.10, 0.10, 0.30, 0.25, 0.05, 0.20};

}  // namespace

TEST(StatusMapping, ErrorCodes) {
  EXPECT_EQ(http_status_for(Errc::stage_order), 409);
  EXPECT_EQ(http_status_for(Errc::simplex_violation), 422);
  EXPECT_EQ(http_status_for(Errc::sum_violation), 422);
  EXPECT_EQ(http_status_for(Errc::not_found), 404);
  EXPECT_EQ(http_status_for(Errc::schema), 400);
  EXPECT_EQ(http_status_for(Errc::io), 500);
}

TEST_F(ServiceTest, CreateDefaultsAndValidation) {
  auto res = post("/api/sessions", json::object());
  ASSERT_EQ(res->status, 201);
  const auto body = json::parse(res->body);
  EXPECT_EQ(body.at("stage"), "baseline");
  const auto id = body.at("session_id").get<std::string>();
  const auto view = json::parse(get("/api/sessions/" + id)->body);
  EXPECT_EQ(view.at("principles").size(), 6u);
  EXPECT_EQ(view.at("principles")[0], "clarity");
  EXPECT_EQ(view.at("epsilon"), 0.1);
  EXPECT_EQ(view.at("p"), 2.0);
  EXPECT_NE(create(), id);

  EXPECT_EQ(post("/api/sessions", {{"principles", {"solo"}}})->status, 400);
  EXPECT_EQ(post("/api/sessions", {{"epsilon", -1}})->status, 400);
  EXPECT_EQ(client_->Post("/api/sessions", "{oops", "application/json")->status, 400);
  const auto custom = create({{"principles", {"a", "b", "c"}}, {"epsilon", 0.2}, {"p", 3}, {"reference", "b"}});
  const auto cv = json::parse(get("/api/sessions/" + custom)->body);
  EXPECT_EQ(cv.at("reference"), 1);
  EXPECT_EQ(cv.at("p"), 3.0);
}

TEST_F(ServiceTest, UnknownSessionAndRole) {
  EXPECT_EQ(get("/api/sessions/0123456789abcdef0123456789abcdef")->status, 404);
  const auto id = create();
  EXPECT_EQ(submit(id, "referee", "baseline", kA)->status, 404);
  EXPECT_EQ(get("/api/sessions/" + id + "/export")->status, 200);
  EXPECT_EQ(get("/api/sessions/nope/export")->status, 404);
}

TEST_F(ServiceTest, SubmissionErrors) {
  const auto id = create();
  auto bad_sum = submit(id, "analyst", "baseline", {0.5, 0.5, 0.5, 0, 0, 0});
  EXPECT_EQ(bad_sum->status, 422);
  EXPECT_NE(bad_sum->body.find("1.5"), std::string::npos) << bad_sum->body;
  EXPECT_EQ(submit(id, "analyst", "baseline", {0.5, 0.5})->status, 422);
  EXPECT_EQ(submit(id, "analyst", "resolution", kA)->status, 409);
  EXPECT_EQ(post("/api/sessions/" + id + "/parties/analyst/allocations", {{"weights", kA}})->status, 400);
  EXPECT_EQ(post("/api/sessions/" + id + "/advance", {{"to_stage", "negotiation"}})->status, 409);
  EXPECT_EQ(post("/api/sessions/" + id + "/suggest", {{"gamma_a", 0.5}, {"gamma_c", 0.5}})->status, 409);
}

TEST_F(ServiceTest, FullLifecycle) {
  const auto id = create({{"epsilon", 0.1}});
  ASSERT_EQ(submit(id, "analyst", "baseline", kA)->status, 200);
  auto res = submit(id, "consumer", "baseline", kC);
  ASSERT_EQ(res->status, 200);
  auto view = json::parse(res->body);
  EXPECT_EQ(view.at("stage"), "negotiation");
  EXPECT_FALSE(view.at("metrics").at("baseline").is_null());
  EXPECT_FALSE(view.at("metrics").at("baseline").at("verdict").at("strong").get<bool>());

  res = post("/api/sessions/" + id + "/suggest", {{"gamma_a", 0.5}, {"gamma_c", 0.5}});
  ASSERT_EQ(res->status, 200);
  const auto sug = json::parse(res->body);
  for (double v : sug.at("predicted_D").get<std::vector<double>>()) EXPECT_LT(std::abs(v), 1e-12);
  EXPECT_TRUE(sug.at("predicted_verdict").at("strong").get<bool>());

  ASSERT_EQ(submit(id, "analyst", "resolution", sug.at("analyst_weights"))->status, 200);
  res = submit(id, "consumer", "resolution", sug.at("consumer_weights"));
  ASSERT_EQ(res->status, 200);
  view = json::parse(res->body);
  EXPECT_EQ(view.at("stage"), "resolution");
  const auto& resolution = view.at("metrics").at("resolution");
  for (double v : resolution.at("D").get<std::vector<double>>()) EXPECT_LT(std::abs(v), 1e-9);
  EXPECT_TRUE(resolution.at("verdict").at("strong").get<bool>());
  EXPECT_TRUE(resolution.at("improved").get<bool>());

  EXPECT_EQ(post("/api/sessions/" + id + "/advance", {{"to_stage", "negotiation"}})->status, 409);
  EXPECT_EQ(submit(id, "analyst", "baseline", kA)->status, 409);

  res = get("/api/sessions/" + id + "/export");
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Content-Type"), "text/csv");
  std::istringstream in(res->body);
  const auto data = ingest(in);
  EXPECT_EQ(data.records.size(), 4u);

  res = post("/api/sessions/" + id + "/advance", {{"to_stage", "closed"}});
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body).at("stage"), "closed");
  EXPECT_EQ(submit(id, "consumer", "resolution", kC)->status, 409);
}

TEST_F(ServiceTest, ConcurrentSessionsAndParties) {
  std::vector<std::string> ids;
  for (int i = 0; i < 4; ++i) ids.push_back(create());
  std::vector<std::thread> threads;
  std::atomic<int> errors{0};
  for (const auto& id : ids) {
    for (const std::string role : {"analyst", "consumer"}) {
      threads.emplace_back([&, id, role] {
        httplib::Client c("127.0.0.1", port_);
        const json body = {{"stage", "baseline"}, {"weights", role == "analyst" ? kA : kC}};
        auto r = c.Post("/api/sessions/" + id + "/parties/" + role + "/allocations", body.dump(),
                        "application/json");
        if (!r || r->status != 200) ++errors;
      });
    }
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(errors.load(), 0);
  for (const auto& id : ids) {
    const auto view = json::parse(get("/api/sessions/" + id)->body);
    EXPECT_EQ(view.at("stage"), "negotiation") << id;
  }
}
