/*
 * Copyright 2026 The cemx Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <doctest.h>

#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "cemx/error.hpp"
#include "cemx/generator.hpp"
#include "cemx/image.hpp"
#include "cemx/kernel.hpp"
#include "cemx/service.hpp"
#include "support.hpp"

using namespace cemx;
using nlohmann::json;

namespace {

std::string lr_png(int side, std::uint64_t seed) { return encode_png(testing::random_image(side, side, 3, seed)); }

httplib::Result create(httplib::Client& c, const httplib::MultipartFormDataItems& items) {
  return c.Post("/sessions", items);
}

httplib::MultipartFormDataItems upload(const std::string& png, const std::string& scale) {
  return {{"image", png, "y.png", "image/png"}, {"scale", scale, "", ""}};
}

json parse(const httplib::Result& r) { return json::parse(r->body); }

json wait_done(httplib::Client& c, const std::string& url) {
  for (int k = 0; k < 2000; ++k) {
    auto r = c.Get(url);
    REQUIRE(r);
    const json j = parse(r);
    if (j.at("state") != "running") return j;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  FAIL("job did not finish");
  return {};
}

struct Fixture {
  testing::TempDir exports;
  Service service;
  int port;
  httplib::Client client;
  Fixture()
      : service(ServiceOptions{exports.path().string(), 8}),
        port(service.start({"127.0.0.1", 0})),
        client("127.0.0.1", port) {
    client.set_read_timeout(60, 0);
  }
};

}  // namespace

TEST_CASE("addresses") {
  CHECK(parse_address("0.0.0.0:9000").host == "0.0.0.0");
  CHECK(parse_address("0.0.0.0:9000").port == 9000);
  CHECK(parse_address(":81").host == "127.0.0.1");
  CHECK(parse_address("localhost").port == 8787);
  CHECK_THROWS_AS(parse_address("h:70000"), Error);
  CHECK_THROWS_AS(parse_address("h:x1"), Error);
  ::unsetenv("CEMX_ADDR");
  CHECK(default_address().port == 8787);
  CHECK(default_address().host == "127.0.0.1");
  ::setenv("CEMX_ADDR", "127.0.0.2:1234", 1);
  CHECK(default_address().port == 1234);
  ::unsetenv("CEMX_ADDR");
}

TEST_CASE("session creation") {
  Fixture f;
  auto& c = f.client;
  auto r = create(c, upload(lr_png(8, 1), "4"));
  REQUIRE(r);
  CHECK(r->status == 201);
  const json s = parse(r);
  CHECK(s.at("hr_width") == 32);
  CHECK(s.at("hr_height") == 32);
  CHECK(s.at("id").get<std::string>().size() == 16);

  auto again = create(c, upload(lr_png(8, 1), "4"));
  CHECK(parse(again).at("id") != s.at("id"));
  CHECK(f.service.session_count() == 2);

  CHECK(create(c, upload(lr_png(8, 1), "5"))->status == 400);
  CHECK(create(c, upload(lr_png(8, 1), "2x"))->status == 400);
  CHECK(create(c, {{"scale", "2", "", ""}})->status == 400);
  CHECK(create(c, upload("not a png", "2"))->status == 400);
  CHECK(c.Post("/sessions", "{}", "application/json")->status == 400);

  auto items = upload(lr_png(8, 1), "2");
  items.push_back({"kernel", R"({"rows":2,"cols":2,"taps":[0,0,0,0]})", "k.json", "application/json"});
  auto zero = create(c, items);
  CHECK(zero->status == 422);
  CHECK(parse(zero).at("code") == "SingularKernel");

  items = upload(lr_png(8, 1), "2");
  items.push_back({"kernel", kernel_to_json(gaussian_kernel(5, 1.0)), "k.json", "application/json"});
  CHECK(create(c, items)->status == 201);

  items = upload(lr_png(8, 1), "2");
  items.push_back({"mode", "generator", "", ""});
  CHECK(create(c, items)->status == 400);
  items.push_back({"generator", generator_to_json(GeneratorParams::toy(2, 3, 1, false, 4)), "g.json", ""});
  auto gen = create(c, items);
  CHECK(gen->status == 201);
  CHECK(parse(gen).at("mode") == "generator");
}

TEST_CASE("image, consistency, edits, undo") {
  Fixture f;
  auto& c = f.client;
  const std::string id = parse(create(c, upload(lr_png(8, 2), "4"))).at("id");
  const std::string base = "/sessions/" + id;

  auto img = c.Get(base + "/image.png");
  REQUIRE(img);
  CHECK(img->status == 200);
  CHECK(img->get_header_value("Content-Type") == "image/png");
  const Image first = decode_png(img->body);
  CHECK(first.width() == 32);
  CHECK(first.height() == 32);
  CHECK(c.Get("/sessions/nope/image.png")->status == 404);

  const json cons = parse(c.Get(base + "/consistency"));
  CHECK(cons.at("linf").get<double>() <= 1e-8);

  auto undo = c.Post(base + "/undo");
  CHECK(undo->status == 409);
  CHECK(parse(undo).at("code") == "NothingToUndo");

  CHECK(c.Post(base + "/edits", R"({"tool":"smear"})", "application/json")->status == 400);
  CHECK(c.Post(base + "/edits", "{", "application/json")->status == 400);
  CHECK(c.Post("/sessions/nope/edits", R"({"tool":"tv_min"})", "application/json")->status == 404);

  const std::string spec =
      R"({"tool":"scribble","region":{"type":"rect","x":10,"y":4,"w":1,"h":20},"params":{"color":[0,0,0]},"steps":40})";
  auto post = c.Post(base + "/edits", spec, "application/json");
  REQUIRE(post);
  CHECK(post->status == 202);
  const std::string jid = parse(post).at("job");
  const json early = parse(c.Get(base + "/jobs/" + jid));
  CHECK((early.at("state") == "running" || early.at("state") == "done"));
  const json done = wait_done(c, base + "/jobs/" + jid);
  CHECK(done.at("state") == "done");
  CHECK(done.at("trace").size() == done.at("step").get<std::size_t>());
  CHECK(done.at("objective").size() == done.at("trace").size());
  CHECK(c.Get(base + "/jobs/j999")->status == 404);

  const std::string after = c.Get(base + "/image.png")->body;
  CHECK(after != img->body);
  CHECK(parse(c.Get(base + "/consistency")).at("linf").get<double>() <= 1e-8);

  CHECK(c.Post(base + "/undo")->status == 200);
  CHECK(c.Get(base + "/image.png")->body == img->body);

  // Knobs steer a generator; a direct session refuses them.
  CHECK(c.Post(base + "/knobs", R"({"l1":0.5,"l2":0.5,"theta":1})", "application/json")->status == 400);

  // A failing job reports its error.
  auto bad = c.Post(base + "/edits", R"({"tool":"variance","region":{"type":"rect","x":0,"y":0,"w":3,"h":3},"params":{"delta":0.1}})",
                    "application/json");
  REQUIRE(bad->status == 202);
  const json failed = wait_done(c, base + "/jobs/" + parse(bad).at("job").get<std::string>());
  CHECK(failed.at("state") == "failed");
  CHECK(failed.at("code") == "EmptyRegion");
}

TEST_CASE("busy sessions and concurrent polling") {
  Fixture f;
  auto& c = f.client;
  const std::string id = parse(create(c, upload(lr_png(16, 3), "4"))).at("id");
  const std::string base = "/sessions/" + id;
  // Many small patches make every step slow enough to overlap the next request.
  const std::string slow = R"({"tool":"variance","params":{"delta":0.05},"steps":400})";
  auto first = c.Post(base + "/edits", slow, "application/json");
  REQUIRE(first->status == 202);
  auto second = c.Post(base + "/edits", slow, "application/json");
  CHECK(second->status == 409);
  CHECK(parse(second).at("code") == "Busy");
  CHECK(c.Post(base + "/undo")->status == 409);
  CHECK(c.Post(base + "/alternatives", R"({"n":2})", "application/json")->status == 409);

  // Reads stay available and consistent while the job runs.
  const std::string url = base + "/jobs/" + parse(first).at("job").get<std::string>();
  std::vector<std::thread> pollers;
  std::atomic<int> bad{0};
  for (int k = 0; k < 4; ++k)
    pollers.emplace_back([&] {
      httplib::Client pc("127.0.0.1", f.port);
      for (int i = 0; i < 20; ++i) {
        auto r = pc.Get(url);
        if (!r || r->status != 200) {
          ++bad;
          continue;
        }
        const json j = json::parse(r->body);
        const std::string st = j.at("state");
        if (st != "running" && st != "done") ++bad;
        if (j.at("trace").size() < std::size_t(j.at("step").get<int>())) ++bad;
      }
    });
  for (auto& p : pollers) p.join();
  CHECK(bad == 0);
  CHECK(c.Get(base + "/image.png")->status == 200);
  // Other sessions are unaffected.
  const std::string other = parse(create(c, upload(lr_png(8, 4), "2"))).at("id");
  CHECK(c.Get("/sessions/" + other + "/consistency")->status == 200);
}

TEST_CASE("knobs, alternatives, export") {
  Fixture f;
  auto& c = f.client;
  auto items = upload(lr_png(8, 5), "2");
  items.push_back({"mode", "generator", "", ""});
  items.push_back({"generator", generator_to_json(GeneratorParams::toy(2, 3, 7, false, 4)), "g.json", ""});
  const std::string id = parse(create(c, items)).at("id");
  const std::string base = "/sessions/" + id;

  const std::string before = c.Get(base + "/image.png")->body;
  auto k = c.Post(base + "/knobs",
                  R"({"region":{"type":"rect","x":2,"y":2,"w":8,"h":8},"l1":1.0,"l2":0.1,"theta":0.5})",
                  "application/json");
  CHECK(k->status == 200);
  CHECK(c.Get(base + "/image.png")->body != before);
  CHECK(parse(c.Get(base + "/consistency")).at("linf").get<double>() <= 1e-8);
  CHECK(c.Post(base + "/undo")->status == 200);
  CHECK(c.Get(base + "/image.png")->body == before);
  CHECK(c.Post(base + "/knobs", R"({"l1":2,"l2":0.1,"theta":0.5})", "application/json")->status == 400);
  for (const char* m : {"product", "eigen"})
    CHECK(c.Post(base + "/knobs", std::string(R"({"l1":0.8,"l2":0.3,"theta":1.0,"mode":")") + m + "\"}",
                 "application/json")
              ->status == 200);
  CHECK(c.Post(base + "/knobs", R"({"l1":0.8,"l2":0.3,"theta":1.0,"mode":"diagonal"})", "application/json")->status ==
        400);
  CHECK(c.Post(base + "/knobs", R"({"region":{"type":"rect","x":0,"y":0,"w":99,"h":2},"l1":1,"l2":0.1,"theta":0.5})",
               "application/json")
            ->status == 400);

  auto alts = c.Post(base + "/alternatives", R"({"n":3,"anchored":true,"steps":5})", "application/json");
  REQUIRE(alts->status == 200);
  const json a = parse(alts);
  CHECK(a.at("count") == 3);
  for (const auto& u : a.at("previews")) {
    auto p = c.Get(u.get<std::string>());
    REQUIRE(p->status == 200);
    CHECK(decode_png(p->body).width() == 16);
  }
  CHECK(c.Get(base + "/alternatives/7.png")->status == 404);
  CHECK(c.Post(a.at("adopt")[1].get<std::string>())->status == 200);
  CHECK(c.Get(base + "/image.png")->body == c.Get(a.at("previews")[1].get<std::string>())->body);
  CHECK(c.Post(base + "/alternatives", R"({"n":9})", "application/json")->status == 400);

  auto ex = c.Post(base + "/export", R"({"dir":"snap"})", "application/json");
  REQUIRE(ex->status == 200);
  for (const char* file : {"y.png", "kernel.json", "latent.bin", "xhat.png", "session.json", "generator.json"})
    CHECK(std::filesystem::exists(f.exports.path() / "snap" / file));
  CHECK(c.Post(base + "/export", R"({"dir":"../escape"})", "application/json")->status == 400);
  CHECK(c.Post(base + "/export", R"({"dir":"/tmp/abs"})", "application/json")->status == 400);

  CHECK(c.Delete(base)->status == 200);
  CHECK(c.Get(base + "/image.png")->status == 404);
}
