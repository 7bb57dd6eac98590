#include "gdc/service.hpp"
#include "gdc/synthetic.hpp"

#include "cli.hpp"
#include "doctest.h"

#include <httplib.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

using namespace gdc;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string as_string(const Bytes& b) { return std::string(b.begin(), b.end()); }

Bytes as_bytes(const std::string& s) { return Bytes(s.begin(), s.end()); }

struct CliResult {
  int code;
  std::string out, err;
};

CliResult cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

// Writes the two-region fixture as image.png / scribbles.json / gt.png.
fs::path write_fixture(const std::string& name) {
  const fs::path dir = fresh_dir(name);
  SyntheticCase c = two_region_fixture();
  c.name = "two_region";
  write_dataset(dir, {c});
  return dir / "two_region";
}

std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

struct Running {
  HttpService service;
  int port;
  httplib::Client client;

  explicit Running(ServiceOptions o = {})
      : service(std::move(o)), port(service.start({"127.0.0.1", 0})), client("127.0.0.1", port) {
    client.set_read_timeout(30, 0);
  }
  ~Running() { service.stop(); }

  std::string create(const Bytes& png) {
    auto r = client.Post("/sessions", as_string(png), "image/png");
    REQUIRE(r);
    REQUIRE(r->status == 201);
    return nlohmann::json::parse(r->body)["id"].get<std::string>();
  }

  nlohmann::json wait_done(const std::string& id) {
    for (int i = 0; i < 600; ++i) {
      auto r = client.Get("/sessions/" + id + "/status");
      REQUIRE(r);
      const auto j = nlohmann::json::parse(r->body);
      if (j["status"] != "optimizing") return j;
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    FAIL("optimization did not finish");
    return {};
  }
};

}  // namespace

TEST_CASE("bind address parsing") {
  CHECK(parse_bind("0.0.0.0:9000").host == "0.0.0.0");
  CHECK(parse_bind("0.0.0.0:9000").port == 9000);
  CHECK(parse_bind(":0").host == "127.0.0.1");
  CHECK(parse_bind(":0").port == 0);
  CHECK(parse_bind("localhost").port == 8080);
  CHECK_THROWS_AS(parse_bind("x:http"), FormatError);
  CHECK_THROWS_AS(parse_bind("x:70000"), FormatError);
}

TEST_CASE("http happy path matches the CLI mask bit for bit") {
  const fs::path fx = write_fixture("gdc_test_http_fixture");
  const fs::path out = fx.parent_path() / "cli_out";
  const CliResult c = cli({"segment", "--image", (fx / "image.png").string(), "--scribbles",
                           (fx / "scribbles.json").string(), "--seed", "3", "--out", out.string()});
  REQUIRE(c.code == 0);

  Running srv;
  CHECK(srv.client.Get("/health")->status == 200);
  const std::string id = srv.create(read_file(fx / "image.png"));
  CHECK(srv.client.Get("/sessions/" + id + "/mask.png")->status == 409);
  CHECK(srv.client.Get("/sessions/" + id + "/status")->body.find("\"idle\"") != std::string::npos);

  auto put = srv.client.Put("/sessions/" + id + "/scribbles", read_text(fx / "scribbles.json"), "application/json");
  REQUIRE(put);
  CHECK(put->status == 204);
  auto first = srv.client.Post("/sessions/" + id + "/optimize", R"({"seed": 3})", "application/json");
  auto second = srv.client.Post("/sessions/" + id + "/optimize", R"({"seed": 3})", "application/json");
  REQUIRE(first);
  REQUIRE(second);
  CHECK(first->status == 202);
  CHECK(second->status == 409);
  CHECK(srv.client.Get("/sessions/" + id + "/overlay.png")->status == 409);

  const auto status = srv.wait_done(id);
  CHECK(status["status"] == "done");
  CHECK(status["step"] == 50);
  CHECK(status["total"] == 50);

  auto mask = srv.client.Get("/sessions/" + id + "/mask.png");
  REQUIRE(mask);
  CHECK(mask->status == 200);
  CHECK(mask->get_header_value("Content-Type") == "image/png");
  CHECK(mask->body == read_text(out / "mask.png"));
  CHECK(decode_mask_png(as_bytes(mask->body)).labels == read_mask_png(out / "mask.png").labels);
  auto blend = srv.client.Get("/sessions/" + id + "/overlay.png");
  REQUIRE(blend);
  CHECK(blend->status == 200);
  CHECK(decode_png(as_bytes(blend->body)) == read_png(out / "overlay.png"));

  // A second run with another seed replaces the result only once it is done.
  CHECK(srv.client.Post("/sessions/" + id + "/optimize", R"({"seed": 4, "steps": 3, "samples": 2})", "application/json")
            ->status == 202);
  CHECK(srv.wait_done(id)["total"] == 3);
  fs::remove_all(fx.parent_path());
}

TEST_CASE("http error statuses") {
  ServiceOptions o;
  o.max_sessions = 3;
  Running srv(o);
  const RgbImage small(8, 8);
  const std::string scribbles = R"({"strokes": [{"category": 0, "points": [[1, 1]]}, {"category": 1, "points": [[6, 6]]}]})";

  SUBCASE("unknown session is 404 everywhere") {
    CHECK(srv.client.Get("/sessions/nope/status")->status == 404);
    CHECK(srv.client.Get("/sessions/nope/mask.png")->status == 404);
    CHECK(srv.client.Get("/sessions/nope/overlay.png")->status == 404);
    CHECK(srv.client.Put("/sessions/nope/scribbles", scribbles, "application/json")->status == 404);
    CHECK(srv.client.Post("/sessions/nope/optimize", "", "application/json")->status == 404);
  }
  SUBCASE("bad uploads") {
    CHECK(srv.client.Post("/sessions", "not a png", "image/png")->status == 400);
    CHECK(srv.client.Post("/sessions", as_string(encode_png(RgbImage(1, 2049))), "image/png")->status == 413);
    CHECK(srv.client.Post("/sessions", as_string(encode_png(RgbImage(2049, 1))), "image/png")->status == 413);
    CHECK(srv.client.Post("/sessions", as_string(encode_png(RgbImage(2048, 1))), "image/png")->status == 201);
  }
  SUBCASE("malformed scribbles and optimize bodies are 400") {
    const std::string id = srv.create(encode_png(small));
    const std::string base = "/sessions/" + id;
    CHECK(srv.client.Post(base + "/optimize", "", "application/json")->status == 400);  // nothing to train on
    CHECK(srv.client.Put(base + "/scribbles", "{", "application/json")->status == 400);
    CHECK(srv.client.Put(base + "/scribbles", R"({"strokes": [{"category": 0, "points": [[9, 1]]}]})",
                         "application/json")
              ->status == 400);  // outside the 8x8 image
    CHECK(srv.client.Put(base + "/scribbles", R"({"strokes": []})", "application/json")->status == 204);
    CHECK(srv.client.Post(base + "/optimize", "", "application/json")->status == 400);  // empty scribbles
    CHECK(srv.client.Put(base + "/scribbles", scribbles, "application/json")->status == 204);
    for (const char* body : {"[1]", R"({"steps": 0})", R"({"sigma": "x"})", R"({"seed": -1})", R"({"bogus": 1})", "{"})
      CHECK(srv.client.Post(base + "/optimize", body, "application/json")->status == 400);
    CHECK(srv.client.Get(base + "/status")->body.find("\"idle\"") != std::string::npos);
    CHECK(srv.client.Post(base + "/optimize", R"({"steps": 2, "samples": 1})", "application/json")->status == 202);
    CHECK(srv.wait_done(id)["status"] == "done");
  }
  SUBCASE("least recently used sessions are evicted past the cap") {
    std::vector<std::string> ids;
    for (int i = 0; i < 3; ++i) ids.push_back(srv.create(encode_png(small)));
    CHECK(srv.client.Get("/sessions/" + ids[0] + "/status")->status == 200);  // refresh the oldest
    ids.push_back(srv.create(encode_png(small)));
    CHECK(srv.service.session_count() == 3);
    CHECK(srv.client.Get("/sessions/" + ids[1] + "/status")->status == 404);
    CHECK(srv.client.Get("/sessions/" + ids[0] + "/status")->status == 200);
    CHECK(srv.client.Get("/sessions/" + ids[3] + "/status")->status == 200);
  }
}

TEST_CASE("cli segment outputs and exit codes") {
  const fs::path fx = write_fixture("gdc_test_cli_fixture");
  const std::string image = (fx / "image.png").string(), scr = (fx / "scribbles.json").string(),
                    gt = (fx / "gt.png").string();
  const fs::path a = fx.parent_path() / "a", b = fx.parent_path() / "b";

  const CliResult ra = cli({"segment", "--image", image, "--scribbles", scr, "--gt", gt, "--seed", "5", "--out", a.string()});
  REQUIRE(ra.code == 0);
  const CliResult rb = cli({"segment", "--image", image, "--scribbles", scr, "--seed", "5", "--out", b.string()});
  REQUIRE(rb.code == 0);
  CHECK(read_text(a / "mask.png") == read_text(b / "mask.png"));
  CHECK(read_text(a / "probs.f32") == read_text(b / "probs.f32"));
  for (const char* f : {"mask.png", "overlay.png", "probs.f32", "probs.json", "replay.json", "metrics.json"})
    CHECK(fs::is_regular_file(a / f));
  CHECK_FALSE(fs::exists(b / "metrics.json"));

  const auto metrics = nlohmann::json::parse(read_text(a / "metrics.json"));
  CHECK(metrics["miou"].get<double>() >= 0.90);
  const auto sidecar = nlohmann::json::parse(read_text(a / "probs.json"));
  CHECK(sidecar["shape"] == nlohmann::json::array({2, 64, 64}));
  CHECK(sidecar["offset_samples"].size() == 50);
  CHECK(fs::file_size(a / "probs.f32") == 2 * 64 * 64 * sizeof(float));
  const auto replay = nlohmann::json::parse(read_text(a / "replay.json"));
  CHECK(replay["config"]["seed"] == 5);
  CHECK(replay["train_samples"].size() == 50);

  CHECK(cli({"segment", "--image", (fx / "missing.png").string(), "--scribbles", scr}).code == kExitBadInput);
  CHECK(cli({"segment", "--image", image}).code == kExitBadInput);
  CHECK(cli({"segment", "--image", scr, "--scribbles", scr}).code == kExitBadInput);  // not a PNG
  CHECK(cli({"segment", "--image", image, "--scribbles", image}).code == kExitBadInput);  // not JSON
  CHECK(cli({"segment", "--image", image, "--scribbles", scr, "--variant", "sobel"}).code == kExitBadInput);
  CHECK(cli({"segment", "--image", image, "--scribbles", scr, "--steps", "0"}).code == kExitBadInput);
  CHECK(cli({"bogus"}).code == kExitBadInput);
  CHECK(cli({}).code == kExitBadInput);
  CHECK(cli({"--help"}).code == 0);
  // --out names an existing regular file: the run itself fails.
  const CliResult blocked =
      cli({"segment", "--image", image, "--scribbles", scr, "--steps", "1", "--samples", "1", "--out", image});
  CHECK(blocked.code == kExitRuntime);
  CHECK_FALSE(blocked.err.empty());
  fs::remove_all(fx.parent_path());
}

TEST_CASE("cli experiment wrappers") {
  const fs::path root = fresh_dir("gdc_test_cli_experiments");
  REQUIRE(cli({"synth", "--out", (root / "data").string(), "--count", "2", "--size", "32"}).code == 0);
  CHECK(fs::is_directory(root / "data" / "two_region"));

  const CliResult cmp = cli({"experiment", "compare", "--data", (root / "data").string(), "--variants",
                             "normal,gdc:0.2", "--seeds", "0", "--steps", "3", "--samples", "2", "--out",
                             (root / "cmp").string()});
  REQUIRE(cmp.code == 0);
  CHECK(cmp.out.find("gdc(0.2)") != std::string::npos);
  CHECK(fs::is_regular_file(root / "cmp" / "report.json"));
  CHECK(nlohmann::json::parse(read_text(root / "cmp" / "report.json"))["runs"].size() == 6);

  const CliResult abl = cli({"experiment", "ablate-sigma", "--data", (root / "data").string(), "--seeds", "0",
                             "--steps", "2", "--samples", "2", "--out", (root / "abl").string()});
  REQUIRE(abl.code == 0);
  CHECK(nlohmann::json::parse(read_text(root / "abl" / "report.json"))["summary"].size() == 3);

  const CliResult sc = cli({"experiment", "scatter", "--sigma", "0.1,0.15", "--out", (root / "sc").string()});
  REQUIRE(sc.code == 0);
  CHECK(fs::is_regular_file(root / "sc" / "scatter_0.1.csv"));
  CHECK(fs::is_regular_file(root / "sc" / "scatter_0.15.svg"));

  CHECK(cli({"experiment", "compare", "--data", (root / "nope").string()}).code == kExitBadInput);
  CHECK(cli({"experiment", "compare", "--data", (root / "data").string(), "--variants", "gdc:x"}).code ==
        kExitBadInput);
  CHECK(cli({"experiment", "scatter", "--mode", "diagonal"}).code == kExitBadInput);
  CHECK(cli({"experiment"}).code == kExitBadInput);
  fs::remove_all(root);
}
