#include <gtest/gtest.h>

#include <fstream>
#include <sstream>
#include <thread>

#include "support.hpp"
#include "tennis/service.hpp"
#include "tennis/taxonomy.hpp"

#include <httplib.h>

using namespace tennis;
using nlohmann::json;
namespace tx = tennis::taxonomy;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    service_ = std::make_unique<service::Service>(service::ServiceConfig{.data_dir = dir_.path()});
    port_ = service_->bind("127.0.0.1", 0);
    thread_ = std::thread([this] { service_->run(); });
    service_->wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }
  void TearDown() override {
    service_->stop();
    thread_.join();
    service_.reset();
  }

  struct Reply {
    int status = 0;
    json body;
  };
  Reply call(const std::string& method, const std::string& path, const json& body = nullptr) {
    httplib::Result r;
    const std::string payload = body.is_null() ? "" : body.dump();
    if (method == "GET") r = client_->Get(path);
    if (method == "POST") r = client_->Post(path, payload, "application/json");
    if (method == "PUT") r = client_->Put(path, payload, "application/json");
    if (method == "DELETE") r = client_->Delete(path);
    EXPECT_TRUE(r) << method << " " << path;
    if (!r) return {};
    Reply out{r->status, nullptr};
    if (!r->body.empty() && r->get_header_value("Content-Type") == "application/json") {
      out.body = json::parse(r->body);
    }
    return out;
  }

  // Video "m1" with players, net and one ended rally holding `hits` hits.
  void make_match(int hits, const std::string& p1_hand = "right") {
    ASSERT_EQ(call("POST", "/videos", {{"id", "m1"}, {"title", "Match"}, {"frame_count", 2000}})
                  .status,
              201);
    json players = json::array();
    const std::vector<std::string> hands{p1_hand, "right", "left", "right"};
    for (int i = 0; i < 4; ++i) {
      players.push_back({{"role", "p" + std::to_string(i + 1)},
                         {"description", "player " + std::to_string(i + 1)},
                         {"handedness", hands[i]}});
    }
    ASSERT_EQ(call("PUT", "/videos/m1/players", players).status, 200);
    ASSERT_EQ(call("PUT", "/videos/m1/net", {{"left", {0, 360}}, {"right", {1280, 360}}}).status,
              200);
    ASSERT_EQ(call("POST", "/videos/m1/rallies", {{"start_frame", 100}, {"end_frame", 900}}).status,
              201);
    // Near team p1/p2 below the net, far team p3/p4 above; alternate teams.
    const std::vector<std::pair<std::string, std::vector<double>>> hitters{
        {"p1", {900, 600}}, {"p3", {400, 200}}, {"p2", {300, 620}}, {"p4", {800, 180}},
        {"p1", {700, 650}}};
    for (int i = 0; i < hits; ++i) {
      const auto& [who, at] = hitters[static_cast<std::size_t>(i) % hitters.size()];
      const auto r = call("POST", "/videos/m1/rallies/1/hits",
                          {{"frame", 150 + 100 * i}, {"hitter", who}, {"anchor", at}});
      ASSERT_EQ(r.status, 201) << r.body.dump();
      EXPECT_EQ(r.body.at("index"), i);
    }
  }

  json wait_job(const std::string& id) {
    for (int i = 0; i < 2000; ++i) {
      const auto r = call("GET", "/jobs/" + id);
      const auto state = r.body.at("state").get<std::string>();
      if (state == "succeeded" || state == "failed") return r.body;
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    ADD_FAILURE() << "job " << id << " did not finish";
    return {};
  }

  fixtures::TempDir dir_{"service"};
  std::unique_ptr<service::Service> service_;
  int port_ = 0;
  std::thread thread_;
  std::unique_ptr<httplib::Client> client_;
};

// First legal label for the hit at `ordinal` of `count`, by brute force over
// the full label space with the oracle.
tx::ShotLabel legal_label(tx::PlayerRole hitter, tx::Handedness hand, tx::CourtPosition court,
                          std::size_t ordinal, bool last) {
  for (auto label : fixtures::all_labels()) {
    label.hitter = hitter;
    if (label.court != court) continue;
    if (fixtures::oracle::label_ok(label, hand, ordinal, last)) return label;
  }
  throw std::logic_error("no legal label");
}

}  // namespace

TEST_F(ServiceTest, RallyCrudAndLabels) {
  make_match(5);
  auto video = call("GET", "/videos/m1");
  ASSERT_EQ(video.status, 200);
  ASSERT_EQ(video.body.at("rallies").size(), 1u);
  const auto& hits = video.body.at("rallies")[0].at("hits");
  ASSERT_EQ(hits.size(), 5u);

  const auto list = call("GET", "/videos");
  EXPECT_EQ(list.body.at(0).at("hits"), 5);

  // Confirm a legal label on every hit.
  const auto record = service_->store().load_video("m1");
  const auto& rally = record.rally(1);
  for (std::size_t i = 0; i < rally.hits.size(); ++i) {
    const auto& h = rally.hits[i];
    const auto court = courtgeom::court_position(h.anchor, record.net->net, record.net->orientation);
    const auto label = legal_label(h.hitter, record.profile(h.hitter).handedness, court, i + 1,
                                   i + 1 == rally.hits.size());
    json body = tx::to_json(label);
    body.erase("hitter");
    const auto r = call("PUT", "/videos/m1/rallies/1/hits/" + std::to_string(i) + "/label", body);
    ASSERT_EQ(r.status, 200) << r.body.dump();
    EXPECT_EQ(r.body.at("label_source"), "confirmed");
  }
  const auto labels = call("GET", "/videos/m1/labels");
  ASSERT_EQ(labels.status, 200);
  for (const auto& h : labels.body.at("rallies")[0].at("hits")) EXPECT_TRUE(h.at("event").is_string());
  EXPECT_TRUE(labels.body.at("rallies")[0].at("report").at("valid").get<bool>());
  EXPECT_EQ(call("GET", "/videos/m1/validate").status, 200);

  // Span edits, deletes.
  EXPECT_EQ(call("PUT", "/videos/m1/rallies/1", {{"end_frame", 50}}).status, 422);
  EXPECT_EQ(call("PUT", "/videos/m1/rallies/1", {{"end_frame", 1000}}).status, 200);
  EXPECT_EQ(call("POST", "/videos/m1/rallies", {{"start_frame", 500}}).status, 409);
  EXPECT_EQ(call("POST", "/videos/m1/rallies/1/hits",
                 {{"frame", 150}, {"hitter", "p2"}, {"anchor", {1, 700}}})
                .status,
            409);
  EXPECT_EQ(call("DELETE", "/videos/m1/rallies/1/hits/4").status, 204);
  EXPECT_EQ(call("GET", "/videos/m1/rallies/1").body.at("hits").size(), 4u);
  EXPECT_EQ(call("DELETE", "/videos/m1/rallies/1/hits/9").status, 404);
  EXPECT_EQ(call("DELETE", "/videos/m1/rallies/1").status, 204);
  EXPECT_EQ(call("GET", "/videos/m1/rallies/1").status, 404);
  EXPECT_EQ(call("DELETE", "/videos/m1").status, 204);
  EXPECT_EQ(call("GET", "/videos/m1").status, 404);
}

TEST_F(ServiceTest, HandednessViolationIsRejectedAndStoreUntouched) {
  make_match(2, "left");
  const auto record = service_->store().load_video("m1");
  const auto& hit = record.rally(1).hits[0];
  const auto court = courtgeom::court_position(hit.anchor, record.net->net, record.net->orientation);
  // A serve label legal for a right-hander but not for this left-hander.
  std::optional<tx::ShotLabel> bad;
  for (auto label : fixtures::all_labels()) {
    label.hitter = hit.hitter;
    if (label.court != court) continue;
    if (fixtures::oracle::label_ok(label, tx::Handedness::Right, 1, false) &&
        !fixtures::oracle::label_ok(label, tx::Handedness::Left, 1, false)) {
      bad = label;
      break;
    }
  }
  // Serves do not depend on hand; use the return instead when that is the case.
  std::size_t index = 0;
  if (!bad) {
    index = 1;
    const auto& h2 = record.rally(1).hits[1];
    const auto c2 = courtgeom::court_position(h2.anchor, record.net->net, record.net->orientation);
    const auto hand2 = record.profile(h2.hitter).handedness;
    const auto other = hand2 == tx::Handedness::Left ? tx::Handedness::Right : tx::Handedness::Left;
    for (auto label : fixtures::all_labels()) {
      label.hitter = h2.hitter;
      if (label.court != c2) continue;
      if (fixtures::oracle::label_ok(label, other, 2, true) &&
          !fixtures::oracle::label_ok(label, hand2, 2, true)) {
        bad = label;
        break;
      }
    }
  }
  ASSERT_TRUE(bad);

  const auto path = service_->store().record_path("m1");
  const auto before = slurp(path);
  json body = tx::to_json(*bad);
  body.erase("hitter");
  const auto r = call("PUT", "/videos/m1/rallies/1/hits/" + std::to_string(index) + "/label", body);
  EXPECT_EQ(r.status, 422);
  EXPECT_EQ(r.body.at("code"), "handedness-direction");
  bool listed = false;
  for (const auto& f : r.body.at("detail").at("findings")) listed |= f.at("code") == "handedness-direction";
  EXPECT_TRUE(listed);
  EXPECT_EQ(slurp(path), before);

  // Other rejected requests leave the record alone too.
  EXPECT_EQ(call("PUT", "/videos/m1/rallies/1/hits/0/label", "garbage_token").status, 422);
  EXPECT_EQ(call("PUT", "/videos/m1/rallies/1", {{"start_frame", 5000}}).status, 422);
  EXPECT_EQ(slurp(path), before);
}

TEST_F(ServiceTest, ErrorsAndStatusCodes) {
  EXPECT_EQ(call("GET", "/videos/nope").body.at("code"), "unknown-video");
  EXPECT_EQ(call("GET", "/videos/nope").status, 404);
  EXPECT_EQ(call("POST", "/videos/nope/labels/generate", json::object()).status, 404);
  EXPECT_EQ(call("GET", "/jobs/nope").status, 404);
  const auto malformed = client_->Post("/videos", "{not json", "application/json");
  EXPECT_EQ(malformed->status, 400);
  make_match(1);
  EXPECT_EQ(call("POST", "/videos", {{"id", "m1"}, {"title", "again"}, {"frame_count", 5}}).status,
            409);
  EXPECT_EQ(call("GET", "/videos/m1/metrics").status, 400);
  EXPECT_EQ(call("POST", "/videos/m1/labels/generate", {{"model", "remote"}}).status, 422);
  EXPECT_EQ(service::http_status_for("queue-full"), 503);
  EXPECT_EQ(service::http_status_for("remote-timeout"), 502);
  EXPECT_EQ(service::http_status_for("overlap"), 409);
  EXPECT_EQ(service::http_status_for("serve-direction"), 422);

  const auto shot = call("POST", "/validate/shot",
                         {{"label", tx::to_json(tx::parse_event_token("near_deuce_forehand_serve_t_conventional_in"))}});
  EXPECT_EQ(shot.status, 200);
  EXPECT_TRUE(shot.body.contains("options"));
  EXPECT_EQ(call("GET", "/schema").status, 200);
  EXPECT_EQ(call("GET", "/models").body.size(), 5u);
}

TEST_F(ServiceTest, NonInferenceRoutesAnswerWithinOneSecond) {
  make_match(5);
  const std::vector<std::pair<std::string, std::string>> routes{
      {"GET", "/videos"},          {"GET", "/videos/m1"},          {"GET", "/videos/m1/players"},
      {"GET", "/videos/m1/net"},   {"GET", "/videos/m1/rallies"},  {"GET", "/videos/m1/rallies/1"},
      {"GET", "/videos/m1/labels"}, {"GET", "/videos/m1/validate"}, {"GET", "/schema"},
      {"GET", "/models"},          {"GET", "/jobs"}};
  for (const auto& [method, path] : routes) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = call(method, path);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
    EXPECT_EQ(r.status, 200) << path;
    EXPECT_LT(ms, 1000) << path;
  }
}

TEST_F(ServiceTest, GenerateJobLifecycle) {
  make_match(5);
  const auto submitted = call("POST", "/videos/m1/labels/generate", {{"model", "random"}, {"seed", 4}});
  ASSERT_EQ(submitted.status, 202) << submitted.body.dump();
  const auto id = submitted.body.at("job_id").get<std::string>();
  const auto done = wait_job(id);
  EXPECT_EQ(done.at("state"), "succeeded") << done.dump();
  EXPECT_EQ(done.at("transitions"), json({"queued", "running", "succeeded"}));
  EXPECT_FALSE(done.at("result").is_null());

  const auto labels = call("GET", "/videos/m1/labels").body;
  for (const auto& h : labels.at("rallies")[0].at("hits")) {
    EXPECT_EQ(h.at("label_source"), "generated");
    EXPECT_TRUE(h.at("event").is_string());
  }
  EXPECT_TRUE(labels.at("rallies")[0].at("report").at("valid").get<bool>());
  EXPECT_EQ(call("GET", "/jobs").body.size(), 1u);

  // No checkpoints exist yet: the job fails with a code.
  const auto gcn = call("POST", "/videos/m1/labels/generate", {{"model", "posegcn"}});
  ASSERT_EQ(gcn.status, 202);
  const auto failed = wait_job(gcn.body.at("job_id").get<std::string>());
  EXPECT_EQ(failed.at("state"), "failed");
  EXPECT_EQ(failed.at("error_code"), "missing-checkpoint");
}
