#include <gtest/gtest.h>

#include <httplib.h>

#include <json.hpp>
#include <thread>

#include "deepmerge/raster_io.hpp"
#include "deepmerge/service.hpp"
#include "test_support.hpp"

using namespace deepmerge;

namespace {

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = testutil::temp_dir(std::string("service_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    // Segments 0 | 1 on top, 2 across the bottom; 0 and 1 both touch 2.
    Raster img(6, 4, 3);
    for (auto& v : img.data) v = 90;
    save_raster(img, dir_ / "t.png");
    std::vector<std::uint32_t> labels(24);
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 6; ++x) labels[y * 6 + x] = y < 2 ? (x < 3 ? 0 : 1) : 2;
    }
    // Add a fourth segment in the corner so one pair is not adjacent.
    labels[0] = 3;
    labels[1] = 3;
    labels[6] = 3;
    labels[7] = 3;
    save_segment_map(SegmentMap(6, 4, labels), dir_ / "t.segr");
    ServiceConfig cfg;
    cfg.tiles = {{"t", dir_ / "t.png", dir_ / "t.segr"}};
    cfg.journal = dir_ / "journal.jsonl";
    service_ = std::make_unique<LabelService>(cfg);
    service_->register_routes(server_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }

  void TearDown() override {
    server_.stop();
    thread_.join();
  }

  int post(const std::string& body) {
    const auto res = client_->Post("/api/labels", body, "application/json");
    return res ? res->status : -1;
  }

  std::filesystem::path dir_;
  std::unique_ptr<LabelService> service_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::unique_ptr<httplib::Client> client_;
};

}  // namespace

TEST_F(ServiceTest, TilesImageAndSegments) {
  auto res = client_->Get("/api/tiles");
  ASSERT_TRUE(res);
  const auto tiles = nlohmann::json::parse(res->body);
  ASSERT_EQ(tiles.size(), 1u);
  EXPECT_EQ(tiles[0]["id"], "t");
  EXPECT_EQ(tiles[0]["segments"], 4);

  res = client_->Get("/api/tiles/t/image.png");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  const Raster back = decode_png(std::vector<std::uint8_t>(res->body.begin(), res->body.end()));
  EXPECT_EQ(back.width, 6);

  res = client_->Get("/api/tiles/t/segments.json");
  ASSERT_TRUE(res);
  const auto seg = nlohmann::json::parse(res->body);
  EXPECT_EQ(seg["polygons"].size(), 4u);
  EXPECT_EQ(seg["count"], 4);
  EXPECT_FALSE(seg["adjacency"].empty());

  EXPECT_EQ(client_->Get("/api/tiles/nope/image.png")->status, 404);
  EXPECT_EQ(client_->Get("/api/tiles/nope/segments.json")->status, 404);
}

TEST_F(ServiceTest, LabelValidation) {
  EXPECT_EQ(post(R"({"tile":"t","a":0,"b":2,"label":"positive"})"), 200);
  EXPECT_EQ(post(R"({"tile":"t","a":0,"b":0,"label":"positive"})"), 409);
  // Segment 3 (top-left corner) does not touch segment 1.
  EXPECT_EQ(post(R"({"tile":"t","a":3,"b":1,"label":"negative"})"), 409);
  EXPECT_EQ(post(R"({"tile":"t","a":0,"b":9,"label":"positive"})"), 404);
  EXPECT_EQ(post(R"({"tile":"x","a":0,"b":2,"label":"positive"})"), 404);
  EXPECT_EQ(post(R"({"tile":"t","a":0,"b":2,"label":"maybe"})"), 400);
  EXPECT_EQ(post("not json"), 400);
}

TEST_F(ServiceTest, UndoAndExport) {
  EXPECT_EQ(post(R"({"tile":"t","a":0,"b":1,"label":"negative"})"), 200);
  EXPECT_EQ(post(R"({"tile":"t","a":1,"b":2,"label":"positive","annotator":"ann"})"), 200);
  EXPECT_EQ(post(R"({"tile":"t","a":3,"b":0,"label":"positive"})"), 200);
  const auto undo = client_->Post("/api/labels/undo", "", "application/json");
  ASSERT_TRUE(undo);
  EXPECT_EQ(nlohmann::json::parse(undo->body)["count"], 2);
  const auto res = client_->Get("/api/labels/export");
  ASSERT_TRUE(res);
  std::istringstream in(res->body);
  std::string line;
  std::vector<LabelRecord> got;
  while (std::getline(in, line)) got.push_back(LabelRecord::from_json_line(line));
  ASSERT_EQ(got.size(), 2u);
  EXPECT_EQ(got[1].annotator, "ann");
  EXPECT_TRUE(got[1].positive);
  // The journal on disk agrees with the export.
  EXPECT_EQ(read_labels(dir_ / "journal.jsonl").size(), 2u);
}
