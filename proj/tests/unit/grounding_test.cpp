#include "fixtures.hpp"

#include <partstyle/grounding.hpp>
#include <partstyle/oracle_backend.hpp>
#include <partstyle/remote_backend.hpp>
#include <partstyle/rng.hpp>
#include <partstyle/toy_backend.hpp>

#include <gtest/gtest.h>
#include <httplib.h>
#include <json.hpp>

#include <thread>

using namespace partstyle;

namespace {

RenderedImage image_of(const Image& pixels) {
  RenderedImage r;
  r.pixels = pixels;
  r.camera = make_camera(0, 0, 2.5, kPi / 3.0, pixels.width);
  return r;
}

RenderedImage red_patch_on_white(int size, PixelBox patch) {
  Image img(size, size, Rgb::Ones());
  for (int y = patch.y0; y < patch.y1; ++y) {
    for (int x = patch.x0; x < patch.x1; ++x) img.set_pixel(x, y, Rgb(1, 0, 0));
  }
  return image_of(img);
}

TEST(Toy, TextualRowIsColorDirection) {
  ToyGroundingBackend toy;
  const FusedFeatures f = toy.encode(red_patch_on_white(32, {0, 0, 8, 8}), {"red handle", "blue body"});
  EXPECT_EQ(f.textual.row(0), Eigen::RowVector3d(1, 0, 0));
  EXPECT_EQ(f.textual.row(1), Eigen::RowVector3d(0, 0, 1));
  EXPECT_EQ(f.grid_w, 4);
  EXPECT_EQ(f.grid_stride, 8);
}

TEST(Toy, UnknownWordListsVocabulary) {
  ToyGroundingBackend toy;
  try {
    (void)toy.encode(red_patch_on_white(16, {0, 0, 1, 1}), {"shiny handle"});
    FAIL();
  } catch (const InputError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("red"), std::string::npos) << msg;
    EXPECT_NE(msg.find("teal"), std::string::npos) << msg;
  }
}

TEST(Toy, VocabularyHasTwelveWordsAndIsExtensible) {
  ColorVocabulary v;
  EXPECT_EQ(v.words().size(), 12u);
  v.set("wood", Rgb(0.55, 0.35, 0.2));
  EXPECT_TRUE(v.contains_word("dark wood"));
  EXPECT_EQ(v.lookup("dark wood"), Rgb(0.55, 0.35, 0.2));
}

TEST(Toy, UniformGrayImageGivesEqualCells) {
  ToyGroundingBackend toy;
  const FusedFeatures f = toy.encode(image_of(Image(32, 32, Rgb::Constant(0.4))), {"red"});
  for (Eigen::Index c = 1; c < f.visual.rows(); ++c) EXPECT_EQ(f.visual.row(c), f.visual.row(0));
}

TEST(Toy, Deterministic) {
  ToyGroundingBackend toy;
  const RenderedImage img = render(fixtures::body_handle(), make_camera(0.5, 0.2, 2.5, kPi / 3.0, 64));
  const FusedFeatures a = toy.encode(img, {"red", "blue"});
  const FusedFeatures b = toy.encode(img, {"red", "blue"});
  EXPECT_EQ(a.visual, b.visual);
  EXPECT_EQ(a.textual, b.textual);
}

TEST(Toy, PixelGradientIsLocalToItsCell) {
  ToyGroundingBackend toy({4, 4.0});
  const RenderedImage img = red_patch_on_white(16, {2, 2, 10, 10});
  const std::vector<std::string> phrases{"red"};
  const FusedFeatures f = toy.encode(img, phrases);
  Eigen::MatrixXd dv = Eigen::MatrixXd::Zero(f.visual.rows(), 3);
  dv.row(f.cell(1, 2)) << 1.0, 0.0, 0.0;
  const Image g = toy.encode_backward(img, phrases, dv, Eigen::MatrixXd::Zero(1, 3));
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      const bool inside = x >= 4 && x < 8 && y >= 8 && y < 12;
      EXPECT_EQ(g.pixel(x, y).norm() > 0.0, inside) << x << "," << y;
    }
  }
}

TEST(Toy, BackwardMatchesFiniteDifferences) {
  ToyGroundingBackend toy({4, 3.0});
  Rng rng(2);
  Image px(8, 8);
  for (double& v : px.data) v = rng.uniform();
  const std::vector<std::string> phrases{"red", "teal"};
  const FusedFeatures f0 = toy.encode(image_of(px), phrases);
  Eigen::MatrixXd wv(f0.visual.rows(), f0.visual.cols());
  for (Eigen::Index i = 0; i < wv.size(); ++i) wv.data()[i] = rng.normal();
  auto obj = [&](const Image& im) { return (toy.encode(image_of(im), phrases).visual.array() * wv.array()).sum(); };
  const Image g = toy.encode_backward(image_of(px), phrases, wv, Eigen::MatrixXd::Zero(2, 3));
  for (std::size_t i = 0; i < px.data.size(); i += 7) {
    Image p = px;
    Image q = px;
    p.data[i] += 1e-5;
    q.data[i] -= 1e-5;
    EXPECT_NEAR((obj(p) - obj(q)) / 2e-5, g.data[i], 1e-7);
  }
}

TEST(Alignment, DotProducts) {
  FusedFeatures f;
  f.grid_w = 2;
  f.grid_h = 1;
  f.grid_stride = 1;
  f.visual.resize(2, 3);
  f.visual << 1, 0, 0, 0, 1, 0;
  f.textual.resize(1, 3);
  f.textual << 1, 0, 0;
  const AlignmentMap m = alignment_map(f);
  EXPECT_EQ(m.at(0, 0, 0), 1.0);
  EXPECT_EQ(m.at(1, 0, 0), 0.0);
  f.textual.resize(1, 2);
  EXPECT_THROW(alignment_map(f), Error);
}

TEST(Alignment, BruteForce) {
  Rng rng(1);
  FusedFeatures f;
  f.grid_w = 4;
  f.grid_h = 4;
  f.grid_stride = 8;
  f.visual.resize(16, 2);
  f.textual.resize(3, 2);
  for (Eigen::Index i = 0; i < f.visual.size(); ++i) f.visual.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < f.textual.size(); ++i) f.textual.data()[i] = rng.normal();
  const AlignmentMap m = alignment_map(f);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      for (int p = 0; p < 3; ++p) {
        double s = 0.0;
        for (int k = 0; k < 2; ++k) s += f.visual(y * 4 + x, k) * f.textual(p, k);
        EXPECT_EQ(m.at(x, y, p), s);
      }
    }
  }
}

TEST(Localize, OracleMatchesMaskDownsampling) {
  const PartitionedMesh m = fixtures::two_spheres();
  const Camera cam = make_camera(0.0, 0.3, 2.5, kPi / 3.0, 128);
  OracleGroundingBackend oracle(m, {8, 1, 8.0});
  const SpatialLocationSet locs = localize(oracle, render(m, cam), {"left", "right"});
  const PartMaskImage mask = render_part_masks(m, cam);
  std::vector<SpatialLocation> expected;
  for (int gy = 0; gy < 16; ++gy) {
    for (int gx = 0; gx < 16; ++gx) {
      int count[2] = {0, 0};
      for (int y = gy * 8; y < gy * 8 + 8; ++y) {
        for (int x = gx * 8; x < gx * 8 + 8; ++x) {
          if (mask.at(x, y) >= 0) ++count[mask.at(x, y)];
        }
      }
      for (int p = 0; p < 2; ++p) {
        if (count[p] > 32) expected.push_back({gx, gy, p});
      }
    }
  }
  EXPECT_EQ(locs.entries, expected);
  EXPECT_EQ(locs.source_camera, cam);
  EXPECT_EQ(locs.grid_stride, 8);
}

TEST(Localize, EmptyCases) {
  ToyGroundingBackend toy;
  EXPECT_TRUE(localize(toy, image_of(Image(32, 32, Rgb::Ones())), {"red"}).empty());
  const RenderedImage red = red_patch_on_white(32, {0, 0, 32, 32});
  EXPECT_FALSE(localize(toy, red, {"red"}).empty());
  EXPECT_TRUE(localize(toy, red, {"red"}, 1.0).empty());
}

TEST(Localize, ArgmaxPhrase) {
  ToyGroundingBackend toy({8, 4.0});
  Image img(16, 16, Rgb::Ones());
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) img.set_pixel(x, y, Rgb(0, 0, 1));
    for (int x = 8; x < 16; ++x) img.set_pixel(x, y, Rgb(1, 0, 0));
  }
  const auto locs = localize(toy, image_of(img), {"red", "blue"});
  ASSERT_EQ(locs.entries.size(), 2u);
  EXPECT_EQ(locs.entries[0], (SpatialLocation{0, 0, 1}));
  EXPECT_EQ(locs.entries[1], (SpatialLocation{1, 0, 0}));
}

TEST(Detect, OracleBoxesAreGroundTruth) {
  const PartitionedMesh m = fixtures::body_handle();
  const Camera cam = make_camera(0.8, 0.2, 2.5, kPi / 3.0, 128);
  OracleGroundingBackend oracle(m, {8, 4, 8.0});
  const auto boxes = oracle.detect_boxes(render(m, cam), {"body", "grip"});
  const auto truth = project_part_bboxes(m, cam, 4);
  ASSERT_EQ(boxes.size(), truth.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    EXPECT_EQ(boxes[i].box, truth[i].box);
    EXPECT_EQ(boxes[i].phrase, truth[i].part);
    EXPECT_EQ(boxes[i].confidence, 1.0);
  }
}

TEST(Detect, ToyBoxCoversPatch) {
  ToyGroundingBackend toy({8, 4.0});
  const PixelBox patch{13, 21, 37, 40};
  const auto boxes = toy.detect_boxes(red_patch_on_white(64, patch), {"red thing"});
  ASSERT_EQ(boxes.size(), 1u);
  const PixelBox& b = boxes[0].box;
  EXPECT_LE(b.x0, patch.x0);
  EXPECT_LE(b.y0, patch.y0);
  EXPECT_GE(b.x1, patch.x1);
  EXPECT_GE(b.y1, patch.y1);
  EXPECT_GT(b.x0, patch.x0 - 8);
  EXPECT_GT(b.y0, patch.y0 - 8);
  EXPECT_LT(b.x1, patch.x1 + 8);
  EXPECT_LT(b.y1, patch.y1 + 8);
  EXPECT_GT(boxes[0].confidence, 0.5);
  EXPECT_LE(boxes[0].confidence, 1.0);
}

TEST(Detect, NoResponseNoBoxes) {
  ToyGroundingBackend toy;
  EXPECT_TRUE(toy.detect_boxes(red_patch_on_white(32, {0, 0, 16, 16}), {"blue thing"}).empty());
}

TEST(Anchor, OracleAvoidsOcclusion) {
  const PartitionedMesh m = fixtures::occluder();
  OracleGroundingBackend oracle(m);
  const std::vector<Camera> cands{make_camera(0.0, 0.0, 2.5, kPi / 3.0, 64),
                                  make_camera(kPi / 2.0, 0.0, 2.5, kPi / 3.0, 64)};
  EXPECT_EQ(select_anchor_view(oracle, m, {"front", "back"}, cands), 1);
  EXPECT_EQ(select_anchor_view(oracle, m, {"front", "back"}, cands), 1);
  EXPECT_EQ(select_anchor_view(oracle, m, {"front", "back"}, std::span(cands).first(1)), 0);
  const std::vector<Camera> tie{cands[1], cands[1]};
  EXPECT_EQ(select_anchor_view(oracle, m, {"front", "back"}, tie), 0);
  EXPECT_THROW(select_anchor_view(oracle, m, {"front"}, std::span<const Camera>{}), InputError);
}

TEST(Offset, ZeroOffsetIsNeutral) {
  const PartitionedMesh m = fixtures::body_handle();
  const RenderedImage img = render(m, make_camera(0.3, 0.1, 2.5, kPi / 3.0, 64));
  ToyGroundingBackend toy({8, 4.0}, fixtures::true_part_vocabulary());
  OracleGroundingBackend oracle(m);
  for (GroundingBackend* b : std::initializer_list<GroundingBackend*>{&toy, &oracle}) {
    const FusedFeatures plain = b->encode(img, {"body", "grip"});
    b->set_prompt_offset(zero_prompt_offset(m, b->language_dim()));
    const FusedFeatures zero = b->encode(img, {"body", "grip"});
    EXPECT_EQ(plain.visual, zero.visual);
    EXPECT_EQ(plain.textual, zero.textual);
  }
}

TEST(Offset, SynonymsShareTheirPartOffset) {
  const PartitionedMesh m = fixtures::body_handle();
  PromptOffset off = zero_prompt_offset(m, 3);
  EXPECT_EQ(off.part_for("holder"), 1);
  EXPECT_EQ(off.part_for("body"), 0);
  EXPECT_FALSE(off.part_for("spout"));
  off.offsets.row(1) << 0.1, 0.2, 0.3;
  ToyGroundingBackend toy({8, 4.0}, fixtures::true_part_vocabulary());
  toy.set_prompt_offset(off);
  const FusedFeatures f = toy.encode(image_of(Image(16, 16, Rgb::Ones())), {"grip", "holder", "body"});
  EXPECT_EQ(f.textual.row(0), f.textual.row(1));
  EXPECT_EQ(f.textual.row(2), Eigen::RowVector3d(1, 0, 0));
}

TEST(Factory, Keys) {
  const PartitionedMesh m = fixtures::body_handle();
  BackendSettings s;
  EXPECT_EQ(make_grounding_backend("toy", m, s)->name(), "toy");
  EXPECT_EQ(make_grounding_backend("oracle", m, s)->name(), "oracle");
  EXPECT_THROW(make_grounding_backend("nonexistent", m, s), InputError);
  if (std::getenv("PARTSTYLE_MODEL_SERVER") == nullptr) {
    EXPECT_THROW(make_grounding_backend("pretrained", m, s), InputError);
  }
}

// A stand-in model server that answers the adapter protocol with the toy
// backend, so the adapter's request/response handling is exercised without
// weights.
class FakeModelServer {
 public:
  FakeModelServer() {
    using nlohmann::json;
    auto image_of_json = [](const json& j) {
      Image img(j.at("width").get<int>(), j.at("height").get<int>());
      img.data = j.at("data").get<std::vector<double>>();
      return image_of(img);
    };
    auto flat = [](const Eigen::MatrixXd& m) {
      std::vector<double> v;
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) v.push_back(m(r, c));
      }
      return v;
    };
    server_.Post("/v1/grounding/load", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"language_dim": 3})", "application/json");
    });
    server_.Post("/v1/grounding/encode", [=, this](const httplib::Request& req, httplib::Response& res) {
      const json body = json::parse(req.body);
      const auto f = toy_.encode(image_of_json(body.at("image")), body.at("phrases").get<std::vector<std::string>>());
      json out{{"grid_w", f.grid_w}, {"grid_h", f.grid_h}, {"grid_stride", f.grid_stride}, {"dim", 3},
               {"visual", flat(f.visual)}, {"textual", flat(f.textual)}};
      res.set_content(out.dump(), "application/json");
    });
    server_.Post("/v1/grounding/detect", [=, this](const httplib::Request& req, httplib::Response& res) {
      const json body = json::parse(req.body);
      json boxes = json::array();
      for (const auto& b :
           toy_.detect_boxes(image_of_json(body.at("image")), body.at("phrases").get<std::vector<std::string>>())) {
        boxes.push_back({{"box", {b.box.x0, b.box.y0, b.box.x1, b.box.y1}}, {"phrase", b.phrase},
                         {"confidence", b.confidence}});
      }
      res.set_content(json{{"boxes", boxes}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeModelServer() {
    server_.stop();
    thread_.join();
  }
  [[nodiscard]] std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
  ToyGroundingBackend toy_;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

TEST(Remote, AdapterRoundTripsThroughServer) {
  FakeModelServer server;
  RemoteGroundingBackend remote(RemoteOptions{server.url(), "weights.pth", "model.yaml"});
  EXPECT_EQ(remote.language_dim(), 3);
  const RenderedImage img = red_patch_on_white(32, {4, 4, 20, 20});
  const FusedFeatures a = remote.encode(img, {"red cup"});
  const FusedFeatures b = server.toy_.encode(img, {"red cup"});
  EXPECT_EQ(a.visual, b.visual);
  EXPECT_EQ(a.textual, b.textual);
  const auto boxes = remote.detect_boxes(img, {"red cup"});
  ASSERT_EQ(boxes.size(), 1u);
  EXPECT_EQ(boxes[0].box, server.toy_.detect_boxes(img, {"red cup"})[0].box);
}

TEST(Remote, UnreachableServerIsAnError) {
  EXPECT_THROW(RemoteGroundingBackend(RemoteOptions{"http://127.0.0.1:1", "", "", 2}), Error);
}

}  // namespace
