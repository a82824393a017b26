#include "savvy/providers.hpp"

#include "savvy/parallel.hpp"
#include "savvy/digest.hpp"
#include "savvy/errors.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

namespace savvy::providers {

namespace detail {
extern const std::string_view kOpenModelPrompt;
extern const std::string_view kProprietaryPrompt;
}  // namespace detail

using nlohmann::json;

std::string_view to_string(Mode m) { return m == Mode::kHttp ? "http" : "replay"; }

std::string_view to_string(PromptVariant v) {
  return v == PromptVariant::kOpenModel ? "open_model" : "proprietary";
}

Mode mode_from_string(std::string_view s) {
  if (s == "replay") return Mode::kReplay;
  if (s == "http") return Mode::kHttp;
  throw ParseError("provider.mode", "expected \"replay\" or \"http\", got \"" + std::string(s) + "\"");
}

PromptVariant prompt_variant_from_string(std::string_view s) {
  if (s == "open_model") return PromptVariant::kOpenModel;
  if (s == "proprietary") return PromptVariant::kProprietary;
  throw ParseError("provider.prompt", "expected \"open_model\" or \"proprietary\", got \"" + std::string(s) + "\"");
}

void ProviderConfig::validate() const {
  if (mode == Mode::kHttp && endpoint.empty()) throw Error("provider: http mode needs an endpoint");
  if (mode == Mode::kReplay && fixture_dir.empty()) throw Error("provider: replay mode needs a fixture directory");
  if (!(timeout > 0.0)) throw Error("provider: timeout must be positive");
  if (retries < 0) throw Error("provider: retry count must be non-negative");
  if (retry_backoff < 0.0) throw Error("provider: retry backoff must be non-negative");
}

std::string_view prompt_template(PromptVariant v) {
  return v == PromptVariant::kOpenModel ? detail::kOpenModelPrompt : detail::kProprietaryPrompt;
}

namespace {

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

std::string shortest(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// "http://host:port/path" -> ("http://host:port", "/path").
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  const auto scheme = endpoint.find("://");
  if (scheme == std::string::npos) throw Error("provider: endpoint needs a scheme: " + endpoint);
  const auto slash = endpoint.find('/', scheme + 3);
  if (slash == std::string::npos) return {endpoint, "/"};
  return {endpoint.substr(0, slash), endpoint.substr(slash)};
}

bool transient(int status) { return status == 408 || status == 429 || status >= 500; }

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

tracks::SnapshotDescriptor parse_body(const std::string& body, const std::string& qid) {
  try {
    return tracks::parse_snapshot(body);
  } catch (const ParseError& e) {
    spdlog::error("provider: unparseable response for {}: {}", qid, body);
    throw ProviderError("provider: response for " + qid + " is not a descriptor (" + e.what() + "); body: " + body);
  }
}

std::string post(const json& body, const std::string& qid, const ProviderConfig& config) {
  const auto [base, path] = split_endpoint(config.endpoint);
  httplib::Client client(base);
  const auto timeout = std::chrono::duration<double>(config.timeout);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  if (!config.bearer_token.empty()) client.set_bearer_token_auth(config.bearer_token);

  const std::string payload = body.dump();
  std::string last_error;
  for (int attempt = 0; attempt <= config.retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::duration<double>(config.retry_backoff * double(1 << (attempt - 1))));
    }
    const auto res = client.Post(path, payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      spdlog::warn("provider: {} attempt {} failed: {}", qid, attempt + 1, last_error);
      continue;
    }
    if (res->status >= 200 && res->status < 300) return res->body;
    last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
    if (!transient(res->status)) break;
    spdlog::warn("provider: {} attempt {} got {}", qid, attempt + 1, last_error);
  }
  throw ProviderError("provider: request for " + qid + " to " + config.endpoint + " failed: " + last_error);
}

}  // namespace

std::string render_prompt(PromptVariant v, std::string_view question, const MediaRef& media) {
  std::string out(prompt_template(v));
  replace_all(out, "{uploaded_obj}", media.uri);
  replace_all(out, "{duration}", shortest(media.duration));
  replace_all(out, "{question}", question);
  return out;
}

std::string question_text(const qa::Question& q) { return qa::render_question(q); }

json request_body(const qa::Question& q, const MediaRef& media, const ProviderConfig& config) {
  return {{"prompt", render_prompt(config.prompt, question_text(q), media)}, {"media", media.uri}, {"question_id", q.id}};
}

std::string cache_key(const std::string& question_id, std::string_view prompt) {
  return question_id + "-" + sha256_hex(prompt).substr(0, 16) + ".txt";
}

tracks::SnapshotDescriptor fetch_descriptor(const qa::Question& q, const MediaRef& media, const ProviderConfig& config) {
  config.validate();
  namespace fs = std::filesystem;
  if (config.mode == Mode::kReplay) {
    const fs::path p = fs::path(config.fixture_dir) / (q.id + ".json");
    if (!fs::exists(p)) throw ProviderError("provider: no fixture for question " + q.id + " at " + p.string());
    return tracks::read_snapshot_file(p.string());
  }

  const json body = request_body(q, media, config);
  fs::path cached;
  if (!config.cache_dir.empty()) {
    cached = fs::path(config.cache_dir) / cache_key(q.id, body.at("prompt").get<std::string>());
    if (fs::exists(cached)) {
      spdlog::debug("provider: cache hit {}", cached.string());
      return parse_body(read_file(cached), q.id);
    }
  }
  const std::string response = post(body, q.id, config);
  auto sd = parse_body(response, q.id);
  if (!cached.empty()) {
    fs::create_directories(cached.parent_path());
    const fs::path tmp = cached.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary);
      out << response;
      if (!out) throw Error("cannot write cache file " + tmp.string());
    }
    fs::rename(tmp, cached);
  }
  return sd;
}

std::vector<tracks::SnapshotDescriptor> fetch_descriptors(const std::vector<qa::Question>& questions,
                                                          const MediaRef& media, const ProviderConfig& config,
                                                          int jobs) {
  std::vector<tracks::SnapshotDescriptor> out(questions.size());
  parallel_for(questions.size(), jobs,
                              [&](std::size_t i) { out[i] = fetch_descriptor(questions[i], media, config); });
  return out;
}

}  // namespace savvy::providers
