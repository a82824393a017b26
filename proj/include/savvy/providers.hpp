#pragma once

// Snapshot Descriptor acquisition: replay of stored model outputs, or a POST
// to an external audio-visual model endpoint with one of the two shipped
// prompts.

#include "savvy/qa.hpp"
#include "savvy/tracks.hpp"

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace savvy::providers {

enum class Mode { kReplay, kHttp };
enum class PromptVariant { kOpenModel, kProprietary };

std::string_view to_string(Mode m);
std::string_view to_string(PromptVariant v);
Mode mode_from_string(std::string_view s);
PromptVariant prompt_variant_from_string(std::string_view s);

struct ProviderConfig {
  Mode mode = Mode::kReplay;
  /// Replay: directory of <question id>.json fixtures.
  std::string fixture_dir;
  /// HTTP: "http[s]://host[:port]/path".
  std::string endpoint;
  double timeout = 60.0;
  /// Extra attempts after the first on connection errors, 408, 429 and 5xx.
  int retries = 2;
  double retry_backoff = 0.5;
  PromptVariant prompt = PromptVariant::kProprietary;
  /// Sent as "Authorization: Bearer <token>" when non-empty.
  std::string bearer_token;
  /// HTTP responses are cached here when non-empty.
  std::string cache_dir;

  /// Throws Error when HTTP mode lacks an endpoint, replay mode lacks a
  /// fixture directory, or a numeric field is out of range.
  void validate() const;
};

/// Opaque handle to the recording; never uploaded or decoded here.
struct MediaRef {
  std::string uri;
  double duration = 0.0;
};

/// The stored prompt text, placeholders intact.
std::string_view prompt_template(PromptVariant v);

/// Fills {question}, {duration} and {uploaded_obj}.
std::string render_prompt(PromptVariant v, std::string_view question, const MediaRef& media);

/// Question text for the prompt: rendered from the template family.
std::string question_text(const qa::Question& q);

/// Request body: {"prompt", "media", "question_id"}.
nlohmann::json request_body(const qa::Question& q, const MediaRef& media, const ProviderConfig& config);

/// Cache file name: "<question id>-<first 16 hex digits of SHA-256(prompt)>.txt".
std::string cache_key(const std::string& question_id, std::string_view prompt);

/// Replay: parses <fixture_dir>/<id>.json; a missing fixture is a
/// ProviderError. HTTP: posts the request body, retries transient failures
/// and parses the response with tracks::parse_snapshot; an unparseable body
/// becomes a ProviderError carrying the body.
tracks::SnapshotDescriptor fetch_descriptor(const qa::Question& q, const MediaRef& media, const ProviderConfig& config);

/// fetch_descriptor for each question, `jobs` at a time; output in input order.
std::vector<tracks::SnapshotDescriptor> fetch_descriptors(const std::vector<qa::Question>& questions,
                                                          const MediaRef& media, const ProviderConfig& config,
                                                          int jobs = 1);

}  // namespace savvy::providers
