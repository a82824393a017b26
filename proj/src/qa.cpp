#include "savvy/qa.hpp"

#include "savvy/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

namespace savvy::qa {

using nlohmann::json;

namespace {

struct KindName {
  Kind kind;
  const char* name;
};

constexpr KindName kKinds[] = {
    {Kind::kEgoDirSimple, "ego_dir_simple"}, {Kind::kEgoDirHard, "ego_dir_hard"},
    {Kind::kEgoDist, "ego_dist"},            {Kind::kAlloDirSimple, "allo_dir_simple"},
    {Kind::kAlloDirHard, "allo_dir_hard"},   {Kind::kAlloDist, "allo_dist"},
};

// Template texts; {name} marks a placeholder.
struct Template {
  Kind kind;
  const char* non_speech;
  const char* speech;
};

constexpr const char* kSimpleRule =
    " If the object is generally to your left and facing it requires turning less than 120 degrees left, choose "
    "'left'. If the object is generally to your right and facing it requires turning less than 120 degrees right, "
    "choose 'right'. If the object is generally behind you and facing it requires turning 120 degrees or more, "
    "choose 'back'.";
constexpr const char* kQuadrantRule =
    " The directions refer to the quadrants of a Cartesian plane (if you are standing at the origin and facing "
    "along the positive y-axis). Consider the center point location of the object as the its location.";
constexpr const char* kDistanceRule =
    " Consider the center point location of the object as the its location. Calculate the Euclidean distance "
    "between the two points in the horizontal plane. Answer in numeric format.";

std::string template_text(Kind kind, bool speech) {
  const std::string ego_sound =
      "Imagine you are the camera wearer, when the {sound_event} sound comes up, relative to where you are ";
  switch (kind) {
    case Kind::kEgoDirSimple:
      return speech ? std::string("Imagine you are the camera wearer, when the speech topic {speech_topic} comes up, "
                                  "relative to where you are facing, where is the other person : left, right, or "
                                  "back?") +
                          kSimpleRule
                    : ego_sound + "facing, where is the sound source: left, right, or back?" + kSimpleRule;
    case Kind::kEgoDirHard:
      return speech ? std::string("Imagine you are the camera wearer, when the speech topic {speech_topic} comes up, "
                                  "relative to where you are facing, where is the other person: front-left, "
                                  "front-right, back-left, or back-right?") +
                          kQuadrantRule
                    : ego_sound + "facing, where is the sound source: front-left, front-right, back-left, or "
                                  "back-right?" +
                          kQuadrantRule;
    case Kind::kEgoDist:
      return speech ? std::string("Imagine you are the camera wearer, when the speech topic: {speech_topic} comes "
                                  "up, relative to where you are standing, what is the distance between you and the "
                                  "other person in meters?") +
                          kDistanceRule
                    : ego_sound + "standing, what is the distance between you and the sound source in meters?" +
                          kDistanceRule;
    case Kind::kAlloDirSimple:
      return speech ? std::string("Imagine you are a robot standing by the {reference} and facing the {facing}, "
                                  "when the speech topic: {speech_topic} comes up, relative to where you are facing, "
                                  "where is the speaker: left, right, or back?") +
                          kSimpleRule
                    : std::string("Imagine you are a robot standing by the {reference} and facing {facing}, when "
                                  "the {sound_event} sound comes up, relative to where you are facing, where is the "
                                  "sounding object: left, right, or back?") +
                          kSimpleRule;
    case Kind::kAlloDirHard:
      return speech ? std::string("Imagine you are a robot standing by the {reference} and facing the {facing}, "
                                  "when the speech topic: {speech_topic} comes up, relative to where you are facing, "
                                  "where is the speaker: front-left, front-right, back-left, or back-right?") +
                          kQuadrantRule
                    : std::string("Imagine you are a robot standing by the {reference} and facing the {facing}, "
                                  "when the {sound_event} sound comes up, relative to where you are facing, where "
                                  "is the sounding object: front-left, front-right, back-left, or back-right?") +
                          kQuadrantRule;
    case Kind::kAlloDist:
      return speech ? std::string("When the speech topic: {speech_topic} is mentioned, what is the distance between "
                                  "the {reference} and the speech sound source in meters?") +
                          kDistanceRule
                    : std::string("When the {sound_event} sound is happening, what is the distance between the "
                                  "{reference} and the sounding object in meters?") +
                          kDistanceRule;
  }
  return {};
}

std::string normalize(std::string_view s) {
  std::string out;
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      out.push_back(static_cast<char>(std::tolower(u)));
    } else if (c == '-' || std::isspace(u)) {
      if (!out.empty() && out.back() != ' ') out.push_back(' ');
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::optional<fusion::Span> span_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  const auto& s = j.at(key);
  fusion::Span span{s.at(0).get<double>(), s.at(1).get<double>()};
  if (!(span.start < span.end)) throw ParseError(key, "start must precede end");
  return span;
}

}  // namespace

std::string_view to_string(Kind k) {
  for (const auto& e : kKinds) {
    if (e.kind == k) return e.name;
  }
  return "ego_dir_simple";
}

Kind kind_from_string(std::string_view s) {
  for (const auto& e : kKinds) {
    if (s == e.name) return e.kind;
  }
  throw ParseError("kind", "unknown question kind \"" + std::string(s) + "\"");
}

bool is_allocentric(Kind k) { return k == Kind::kAlloDirSimple || k == Kind::kAlloDirHard || k == Kind::kAlloDist; }

bool is_direction(Kind k) { return k != Kind::kEgoDist && k != Kind::kAlloDist; }

std::vector<Option> default_options(Kind k) {
  if (k == Kind::kEgoDirSimple || k == Kind::kAlloDirSimple) return {{"A", "left"}, {"B", "right"}, {"C", "back"}};
  if (k == Kind::kEgoDirHard || k == Kind::kAlloDirHard) {
    return {{"A", "front-left"}, {"B", "front-right"}, {"C", "back-left"}, {"D", "back-right"}};
  }
  return {};
}

void Question::validate() const {
  if (id.empty()) throw ParseError("id", "missing question id");
  if (is_allocentric(kind) && reference.empty()) throw ParseError(id + ".reference", "allocentric question needs it");
  if (is_allocentric(kind) && is_direction(kind) && facing.empty()) {
    throw ParseError(id + ".facing", "allocentric direction question needs it");
  }
  if (span && !(span->start < span->end)) throw ParseError(id + ".span", "start must precede end");
}

std::vector<Option> Question::choices() const { return options.empty() ? default_options(kind) : options; }

Answer resolve(const fusion::GlobalMap& map, const Question& q, const geometry::CameraTrajectory& traj,
               const ResolveConfig& config) {
  const bool allo = is_allocentric(q.kind);
  if (allo != (map.mode == tracks::Mode::kAllocentric)) {
    throw ModeError("question " + q.id + " is " + std::string(to_string(q.kind)) + " but the map is " +
                    std::string(tracks::to_string(map.mode)));
  }
  if (map.target.empty()) throw UnanswerableError("question " + q.id + ": no target estimate");
  const fusion::Span span = q.span.value_or(map.span);
  Answer a;
  a.id = q.id;
  a.span = map.span;
  a.eval_time = config.eval_time == EvalTime::kMidpoint ? span.midpoint() : span.start;
  const auto target = map.target_at(a.eval_time);

  double theta = 0.0;
  if (allo) {
    if (!map.reference || !map.facing) throw ModeError("question " + q.id + ": map lacks anchors");
    if (q.kind == Kind::kAlloDist) {
      a.meters = geometry::horizontal_distance(target, map.reference->position);
      return a;
    }
    theta = geometry::allocentric_observation(target, {map.reference->position, map.facing->position}).theta;
  } else {
    if (traj.empty()) throw GeometryError("resolve: empty camera trajectory");
    const auto pose = geometry::planar(geometry::interpolate_pose(traj, a.eval_time), traj.frame());
    geometry::EgoObservation ego;
    try {
      ego = geometry::global_to_ego(target, pose, a.eval_time);
    } catch (const GeometryError& e) {
      throw UnanswerableError("question " + q.id + ": " + e.what());
    }
    if (q.kind == Kind::kEgoDist) {
      a.meters = ego.r;
      return a;
    }
    theta = ego.theta;
  }

  const bool simple = q.kind == Kind::kEgoDirSimple || q.kind == Kind::kAlloDirSimple;
  const std::string label = std::string(simple ? geometry::to_string(geometry::quantize_simple(theta))
                                               : geometry::to_string(geometry::quantize_quadrant(theta)));
  for (const auto& o : q.choices()) {
    if (normalize(o.text) == normalize(label)) {
      a.label = o.letter;
      return a;
    }
  }
  throw UnanswerableError("question " + q.id + ": no option reads \"" + label + "\"");
}

std::string render_question(Kind kind, bool speech, const std::map<std::string, std::string>& fields) {
  std::string text = template_text(kind, speech);
  std::string out;
  std::size_t pos = 0;
  while (true) {
    const auto open = text.find('{', pos);
    if (open == std::string::npos) break;
    const auto close = text.find('}', open);
    out.append(text, pos, open - pos);
    const std::string name = text.substr(open + 1, close - open - 1);
    const auto it = fields.find(name);
    if (it == fields.end() || it->second.empty()) {
      throw Error("render_question: missing placeholder \"" + name + "\"");
    }
    out += it->second;
    pos = close + 1;
  }
  out.append(text, pos, std::string::npos);
  return out;
}

std::string render_question(const Question& q) {
  std::map<std::string, std::string> fields;
  fields[q.speech ? "speech_topic" : "sound_event"] = q.event;
  if (!q.reference.empty()) fields["reference"] = q.reference;
  if (!q.facing.empty()) fields["facing"] = q.facing;
  return render_question(q.kind, q.speech, fields);
}

json to_json(const Question& q) {
  json j{{"id", q.id}, {"kind", to_string(q.kind)}, {"event", q.event}};
  if (q.span) j["span"] = {q.span->start, q.span->end};
  if (!q.options.empty()) {
    json o = json::object();
    for (const auto& opt : q.options) o[opt.letter] = opt.text;
    j["options"] = o;
  }
  if (!q.reference.empty()) j["reference"] = q.reference;
  if (!q.facing.empty()) j["facing"] = q.facing;
  if (q.speech) j["speech"] = true;
  return j;
}

Question question_from_json(const json& j) {
  Question q;
  try {
    q.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
    q.kind = kind_from_string(j.at("kind").get<std::string>());
    q.event = j.value("event", std::string());
    q.span = span_from(j, "span");
    if (j.contains("options")) {
      const auto& o = j.at("options");
      if (o.is_object()) {
        for (const auto& [letter, text] : o.items()) q.options.push_back({letter, text.get<std::string>()});
      } else {
        for (std::size_t i = 0; i < o.size(); ++i) {
          q.options.push_back({std::string(1, static_cast<char>('A' + i)), o.at(i).get<std::string>()});
        }
      }
    }
    q.reference = j.value("reference", std::string());
    q.facing = j.value("facing", std::string());
    q.speech = j.value("speech", false);
  } catch (const json::exception& e) {
    throw ParseError("question", e.what());
  }
  q.validate();
  return q;
}

json to_json(const Answer& a) {
  json j{{"id", a.id}, {"eval_time", a.eval_time}};
  if (a.label) j["label"] = *a.label;
  // Two decimals on disk; callers keep full precision in memory.
  if (a.meters) j["meters"] = std::round(*a.meters * 100.0) / 100.0;
  if (a.span) j["span"] = {a.span->start, a.span->end};
  return j;
}

Answer answer_from_json(const json& j) {
  Answer a;
  try {
    a.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
    if (j.contains("label") && !j.at("label").is_null()) a.label = j.at("label").get<std::string>();
    if (j.contains("meters") && !j.at("meters").is_null()) {
      const auto& m = j.at("meters");
      if (m.is_number()) a.meters = m.get<double>();
    }
    a.eval_time = j.value("eval_time", 0.0);
    a.span = span_from(j, "span");
  } catch (const json::exception& e) {
    throw ParseError("answer", e.what());
  }
  return a;
}

std::vector<json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<json> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno), e.what());
    }
  }
  return out;
}

void write_jsonl(const std::string& path, const std::vector<json>& records) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  for (const auto& r : records) out << r.dump() << '\n';
}

std::vector<Question> read_questions(const std::string& path) {
  std::vector<Question> out;
  for (const auto& j : read_jsonl(path)) out.push_back(question_from_json(j));
  return out;
}

std::vector<Answer> read_answers(const std::string& path) {
  std::vector<Answer> out;
  for (const auto& j : read_jsonl(path)) out.push_back(answer_from_json(j));
  return out;
}

void write_answers(const std::string& path, const std::vector<Answer>& answers) {
  std::vector<json> records;
  for (const auto& a : answers) records.push_back(to_json(a));
  write_jsonl(path, records);
}

}  // namespace savvy::qa
