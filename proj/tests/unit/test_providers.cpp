#include <doctest.h>

#include "savvy/digest.hpp"
#include "savvy/errors.hpp"
#include "savvy/providers.hpp"

#include <httplib.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

using namespace savvy;
using namespace savvy::providers;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

qa::Question dog_question() {
  qa::Question q;
  q.id = "dog-7";
  q.kind = qa::Kind::kAlloDirHard;
  q.event = "the dog barks";
  q.reference = "the sofa";
  q.facing = "the window";
  return q;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("savvy_providers_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Keyframed model output as the proprietary prompt asks for it.
const char* kKeyframed = R"(```json
{
  "event": "dog barking",
  "start_time": "0:12",
  "end_time": "0:15",
  "mode": "allocentric",
  "sounding_object": {
    "description": "small brown dog",
    "is_static": false,
    "key_frames": {"0:13": {"distance": "2.5 meters", "direction": "-30 degrees"}}
  },
  "reference_object": {
    "object_name": "sofa",
    "description": "grey fabric sofa",
    "key_frames": {"0:12": {"distance": "3", "direction": "10"}}
  },
  "facing_object": {
    "object_name": "window",
    "description": "large window",
    "key_frames": {"0:14": {"distance": "4", "direction": "45"}}
  }
}
```)";

class TestServer {
 public:
  TestServer() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~TestServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Server& server() { return server_; }
  std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port_) + path; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST_CASE("prompt resources match the shipped files") {
  CHECK(prompt_template(PromptVariant::kOpenModel) == slurp(fs::path(SAVVY_SOURCE_DIR) / "data/prompts/open_model.txt"));
  CHECK(prompt_template(PromptVariant::kProprietary) == slurp(fs::path(SAVVY_SOURCE_DIR) / "data/prompts/proprietary.txt"));
  CHECK(prompt_template(PromptVariant::kOpenModel).find("\"stand_by_object\"") != std::string::npos);
  CHECK(prompt_template(PromptVariant::kProprietary).find("Your complete and sole output must be a single JSON object") !=
        std::string::npos);
}

TEST_CASE("rendered prompts fill every placeholder") {
  const auto q = dog_question();
  const MediaRef media{"s3://bucket/walk.mp4", 40.5};
  for (auto v : {PromptVariant::kOpenModel, PromptVariant::kProprietary}) {
    const auto p = render_prompt(v, question_text(q), media);
    CHECK(p.find("{question}") == std::string::npos);
    CHECK(p.find("{duration}") == std::string::npos);
    CHECK(p.find("{uploaded_obj}") == std::string::npos);
    CHECK(p.find(question_text(q)) != std::string::npos);
  }
  CHECK(render_prompt(PromptVariant::kOpenModel, "Q", media).find("40.5 seconds") != std::string::npos);
  CHECK(render_prompt(PromptVariant::kProprietary, "Q", media).find("s3://bucket/walk.mp4") != std::string::npos);
  CHECK(question_text(q).find("the dog barks") != std::string::npos);
  CHECK(prompt_variant_from_string("open_model") == PromptVariant::kOpenModel);
  CHECK_THROWS_AS(prompt_variant_from_string("gpt"), ParseError);
  CHECK_THROWS_AS(mode_from_string("ftp"), ParseError);
}

TEST_CASE("replay returns the fixture as parsed") {
  const auto dir = scratch("replay");
  {
    std::ofstream out(dir / "dog-7.json");
    out << kKeyframed;
  }
  ProviderConfig cfg;
  cfg.fixture_dir = dir.string();
  const auto sd = fetch_descriptor(dog_question(), {}, cfg);
  CHECK(sd == tracks::parse_snapshot(kKeyframed));
  CHECK(sd.mode == tracks::Mode::kAllocentric);

  auto other = dog_question();
  other.id = "cat-1";
  CHECK_THROWS_AS(fetch_descriptor(other, {}, cfg), ProviderError);
  CHECK_THROWS_AS(fetch_descriptors({dog_question(), other}, {}, cfg, 2), ProviderError);
  CHECK(fetch_descriptors({dog_question(), dog_question()}, {}, cfg, 2).size() == 2);

  ProviderConfig no_dir;
  CHECK_THROWS_AS(fetch_descriptor(dog_question(), {}, no_dir), Error);
  fs::remove_all(dir);
}

TEST_CASE("http provider: request shape, retries, errors and cache") {
  TestServer ts;
  std::atomic<int> ok_calls{0}, flaky_calls{0}, bad_calls{0};
  std::string seen_auth, seen_body;
  ts.server().Post("/ok", [&](const httplib::Request& req, httplib::Response& res) {
    ++ok_calls;
    seen_auth = req.get_header_value("Authorization");
    seen_body = req.body;
    res.set_content(kKeyframed, "application/json");
  });
  ts.server().Post("/prose", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("The dog is probably to the left of the sofa.", "text/plain");
  });
  ts.server().Post("/flaky", [&](const httplib::Request&, httplib::Response& res) {
    if (++flaky_calls <= 2) {
      res.status = 503;
      return;
    }
    res.set_content(kKeyframed, "application/json");
  });
  ts.server().Post("/bad", [&](const httplib::Request&, httplib::Response& res) {
    ++bad_calls;
    res.status = 400;
    res.set_content("bad request", "text/plain");
  });
  ts.server().Post("/slow", [](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(1500));
    res.set_content(kKeyframed, "application/json");
  });

  const auto q = dog_question();
  const MediaRef media{"file:///walk.mp4", 40.0};
  ProviderConfig cfg;
  cfg.mode = Mode::kHttp;
  cfg.retry_backoff = 0.01;
  cfg.timeout = 5.0;
  cfg.bearer_token = "secret";

  cfg.endpoint = ts.url("/ok");
  const auto sd = fetch_descriptor(q, media, cfg);
  CHECK(sd == tracks::parse_snapshot(kKeyframed));
  CHECK(sd.target.keyframes.size() == 1);
  CHECK(sd.target.keyframes[0].theta == doctest::Approx(-30.0));
  CHECK(seen_auth == "Bearer secret");
  const auto body = nlohmann::json::parse(seen_body);
  CHECK(body.at("media") == "file:///walk.mp4");
  CHECK(body.at("question_id") == "dog-7");
  CHECK(body.at("prompt") == render_prompt(PromptVariant::kProprietary, question_text(q), media));

  cfg.endpoint = ts.url("/prose");
  try {
    fetch_descriptor(q, media, cfg);
    FAIL("expected ProviderError");
  } catch (const ProviderError& e) {
    CHECK(std::string(e.what()).find("probably to the left of the sofa") != std::string::npos);
  }

  cfg.endpoint = ts.url("/flaky");
  cfg.retries = 1;
  CHECK_THROWS_AS(fetch_descriptor(q, media, cfg), ProviderError);
  CHECK(flaky_calls == 2);
  cfg.retries = 2;
  CHECK(fetch_descriptor(q, media, cfg).event == "dog barking");
  CHECK(flaky_calls == 3);

  cfg.endpoint = ts.url("/bad");
  CHECK_THROWS_AS(fetch_descriptor(q, media, cfg), ProviderError);
  CHECK(bad_calls == 1);

  cfg.endpoint = ts.url("/slow");
  cfg.timeout = 0.3;
  cfg.retries = 0;
  CHECK_THROWS_AS(fetch_descriptor(q, media, cfg), ProviderError);

  const auto cache = scratch("cache");
  cfg.timeout = 5.0;
  cfg.endpoint = ts.url("/ok");
  cfg.cache_dir = cache.string();
  const int before = ok_calls;
  const auto first = fetch_descriptor(q, media, cfg);
  const auto second = fetch_descriptor(q, media, cfg);
  CHECK(first == second);
  CHECK(ok_calls == before + 1);
  const auto key = cache_key(q.id, render_prompt(PromptVariant::kProprietary, question_text(q), media));
  CHECK(fs::exists(cache / key));
  // A different prompt variant is a different cache entry.
  cfg.prompt = PromptVariant::kOpenModel;
  fetch_descriptor(q, media, cfg);
  CHECK(ok_calls == before + 2);
  fs::remove_all(cache);

  ProviderConfig no_endpoint;
  no_endpoint.mode = Mode::kHttp;
  CHECK_THROWS_AS(no_endpoint.validate(), Error);
}

TEST_CASE("sha256 digests") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  const auto p = std::filesystem::temp_directory_path() / "savvy_digest_test.bin";
  {
    std::ofstream(p, std::ios::binary) << "abc";
  }
  CHECK(sha256_file(p.string()) == sha256_hex("abc"));
  std::filesystem::remove(p);
  CHECK_THROWS_AS(sha256_file(p.string()), Error);
}
