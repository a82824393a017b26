#pragma once

// Benchmark questions: structured records, template rendering, and answers
// read off a global map.

#include "savvy/fusion.hpp"
#include "savvy/geometry.hpp"

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace savvy::qa {

enum class Kind { kEgoDirSimple, kEgoDirHard, kEgoDist, kAlloDirSimple, kAlloDirHard, kAlloDist };

std::string_view to_string(Kind k);
Kind kind_from_string(std::string_view s);
bool is_allocentric(Kind k);
bool is_direction(Kind k);

struct Option {
  std::string letter;
  std::string text;

  friend bool operator==(const Option&, const Option&) = default;
};

/// A: left, B: right, C: back  /  A: front-left, B: front-right, C: back-left,
/// D: back-right.
std::vector<Option> default_options(Kind k);

struct Question {
  std::string id;
  Kind kind = Kind::kEgoDirSimple;
  std::string event;
  std::optional<fusion::Span> span;
  std::vector<Option> options;
  std::string reference;
  std::string facing;
  bool speech = false;

  /// Throws ParseError when an allocentric kind lacks a reference (or a
  /// facing object for direction kinds) or a direction kind has no options.
  void validate() const;
  /// Options, or the defaults for the kind when none were given.
  std::vector<Option> choices() const;
};

struct Answer {
  std::string id;
  std::optional<std::string> label;
  std::optional<double> meters;
  double eval_time = 0.0;
  /// Grounded event span the answer was computed over, when known.
  std::optional<fusion::Span> span;
};

enum class EvalTime { kMidpoint, kStart };

struct ResolveConfig {
  EvalTime eval_time = EvalTime::kMidpoint;
};

/// Reads the answer off the map at t*. The question's own span, when
/// present, overrides the map's. Throws ModeError when the map's mode does
/// not match the question and UnanswerableError when there is no target
/// estimate.
Answer resolve(const fusion::GlobalMap& map, const Question& q, const geometry::CameraTrajectory& traj,
               const ResolveConfig& config = {});

/// Question text for one of the six template families; `fields` supplies
/// "sound_event" or "speech_topic", and "reference"/"facing" for
/// allocentric kinds. Throws Error naming the first missing placeholder.
std::string render_question(Kind kind, bool speech, const std::map<std::string, std::string>& fields);
std::string render_question(const Question& q);

nlohmann::json to_json(const Question& q);
Question question_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Answer& a);
Answer answer_from_json(const nlohmann::json& j);

/// One JSON object per line; blank lines skipped.
std::vector<nlohmann::json> read_jsonl(const std::string& path);
void write_jsonl(const std::string& path, const std::vector<nlohmann::json>& records);

std::vector<Question> read_questions(const std::string& path);
std::vector<Answer> read_answers(const std::string& path);
void write_answers(const std::string& path, const std::vector<Answer>& answers);

}  // namespace savvy::qa
