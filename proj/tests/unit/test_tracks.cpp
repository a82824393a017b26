#include <doctest.h>

#include "savvy/errors.hpp"
#include "savvy/tracks.hpp"

#include <cmath>
#include <random>
#include <sstream>

using namespace savvy;
using namespace savvy::tracks;

namespace {

const char* kProprietary = R"(Here is the result:
```json
{
  "event": "the phone rings",
  "start_time": "0:39",
  "end_time": "0:41",
  "mode": "allocentric",
  "sounding_object": {
    "description": "black smartphone",
    "is_static": false,
    "key_frames": {
      "0:40": {"distance": "3.2 m", "direction": "-30°"},
      "0:12": {"distance": 2, "direction": 15}
    }
  },
  "reference_object": { // stand by
    "object_name": "sofa",
    "description": "grey sofa",
    "key_frames": {"0:05": {"distance": "2.5 meters", "direction": "120 degrees"}}
  },
  "facing_object": {"object_name": "tv", "description": "wall TV", "key_frames": {}},
  "confidence": 0.9
}
```)";

const char* kOpen = R"({
  "start_time": 3.5,
  "end_time": "0:07.25",
  "mode": "Egocentric",
  "sounding_object": {"description": "dog", "is_static": "false"},
  "stand_by_object": {"object_name": "camera", "description": ""},
  "facing_direction": {"object_name": "", "description": ""}
})";

}  // namespace

TEST_CASE("parse the keyframed schema") {
  std::vector<std::string> warnings;
  const auto sd = parse_snapshot(kProprietary, &warnings);
  CHECK(sd.start == 39.0);
  CHECK(sd.end == 41.0);
  CHECK(sd.mode == Mode::kAllocentric);
  CHECK(sd.event == "the phone rings");
  REQUIRE(sd.target.keyframes.size() == 2);
  CHECK(sd.target.keyframes[0].t == 12.0);
  CHECK(sd.target.keyframes[1].theta == -30.0);
  CHECK(sd.target.keyframes[1].r == doctest::Approx(3.2));
  REQUIRE(sd.reference);
  CHECK(sd.reference->name == "sofa");
  CHECK(sd.reference->is_static);
  CHECK(sd.reference->keyframes[0].theta == 120.0);
  REQUIRE(sd.facing);
  CHECK(sd.facing->keyframes.empty());
  // Unknown "confidence" field and the 120 degree keyframe both warn.
  CHECK(warnings.size() == 2);
}

TEST_CASE("parse the keyframe-less schema with a camera reference") {
  const auto sd = parse_snapshot(kOpen);
  CHECK(sd.start == 3.5);
  CHECK(sd.end == 7.25);
  CHECK(sd.mode == Mode::kEgocentric);
  REQUIRE(sd.reference);
  CHECK(sd.reference->is_camera);
  CHECK_FALSE(sd.facing);
  CHECK_FALSE(sd.target.is_static);

  // Reference omitted entirely is equally legal.
  const auto bare = parse_snapshot(R"({"start_time":"0:01","end_time":"0:02","mode":"egocentric",
                                       "sounding_object":{"description":"x","is_static":true}})");
  CHECK(bare.reference->is_camera);
}

TEST_CASE("snapshot parse errors carry the field path") {
  auto field_of = [](const std::string& text) {
    try {
      parse_snapshot(text);
    } catch (const ParseError& e) {
      return e.field();
    }
    return std::string("<none>");
  };
  const std::string obj = R"("sounding_object":{"description":"x"})";
  CHECK(field_of(R"({"start_time":"1:75","end_time":"2:00","mode":"egocentric",)" + obj + "}") == "start_time");
  CHECK(field_of(R"({"start_time":"0:05","end_time":"0:04","mode":"egocentric",)" + obj + "}") == "start_time");
  CHECK(field_of(R"({"start_time":"0:01","end_time":"0:04","mode":"sideways",)" + obj + "}") == "mode");
  CHECK(field_of(R"({"start_time":"0:01","end_time":"0:04","mode":"allocentric",)" + obj + "}") ==
        "reference_object");
  CHECK(field_of(R"({"start_time":"0:01","end_time":"0:04","mode":"egocentric",
        "sounding_object":{"key_frames":{"0:02":{"distance":"0 m","direction":"5"}}}})") ==
        "sounding_object.key_frames.0:02.distance");
  CHECK(field_of("no json here") == "snapshot");
}

TEST_CASE("times") {
  CHECK(parse_time("0:39", "f") == 39.0);
  CHECK(parse_time("1:05.5", "f") == 65.5);
  CHECK(parse_time("12", "f") == 12.0);
  CHECK_THROWS_AS(parse_time("1:75", "f"), ParseError);
  CHECK_THROWS_AS(parse_time("-0:05", "f"), ParseError);
  CHECK_THROWS_AS(parse_time("a:05", "f"), ParseError);
  CHECK(format_time(39.0) == "0:39");
  CHECK(format_time(65.5) == "1:05.5");
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 4000.0);
  for (int i = 0; i < 2000; ++i) {
    const double t = u(rng);
    CHECK(parse_time(format_time(t), "f") == t);
  }
}

TEST_CASE("serialize then parse is the identity") {
  for (const char* text : {kProprietary, kOpen}) {
    const auto sd = parse_snapshot(text);
    const auto again = parse_snapshot(serialize_snapshot(sd));
    CHECK(again == sd);
  }
  SnapshotDescriptor sd;
  sd.start = 75.3;
  sd.end = 80.123456789;
  sd.target.description = "kettle";
  sd.target.keyframes.push_back(geometry::EgoObservation::make(76.1, -44.4, 1.7));
  sd.reference = ObjectEntry::camera();
  CHECK(parse_snapshot(serialize_snapshot(sd)) == sd);
}

TEST_CASE("centroid to azimuth") {
  CHECK(centroid_to_observation(320, 640, 90, 2.0, 0.0).theta == doctest::Approx(0.0));
  CHECK(centroid_to_observation(640, 640, 90, 2.0, 0.0).theta == doctest::Approx(45.0));
  CHECK(centroid_to_observation(480, 640, 90, 2.0, 0.0).theta ==
        doctest::Approx(std::atan(0.5) * 180.0 / M_PI));
  CHECK(centroid_to_observation(480, 640, 90, 2.0, 0.0).theta == doctest::Approx(26.565).epsilon(1e-4));
  for (double d = 0.0; d <= 320.0; d += 17.0) {
    CHECK(centroid_to_observation(320 + d, 640, 70, 1.0, 0.0).theta ==
          doctest::Approx(-centroid_to_observation(320 - d, 640, 70, 1.0, 0.0).theta));
  }
  CHECK_THROWS(centroid_to_observation(700, 640, 90, 2.0, 0.0));
  CHECK_THROWS(centroid_to_observation(100, 640, 180, 2.0, 0.0));
}

TEST_CASE("confidence filter") {
  const std::vector<SegObservation> obs{{0.0, 1, 1, 0.55}, {1.0, 2, 1, 0.6}, {2.0, 3, 1, 0.5}, {3.0, 4, 1, 0.2}};
  const auto t = filter_seg_confidence(obs, Role::kTarget);
  REQUIRE(t.size() == 3);
  CHECK(t[0].t == 0.0);
  CHECK(t[2].t == 2.0);
  const auto r = filter_seg_confidence(obs, Role::kReference);
  REQUIRE(r.size() == 1);
  CHECK(r[0].confidence == 0.6);
}

TEST_CASE("seg track csv") {
  std::stringstream in(
      "# frames: 64\n"
      "role, t, theta_deg, r_m, confidence\n"
      "target, 0.5, -20, 2.0, 0.9\n"
      "\n"
      "reference, 0.5, 190, 3.0, 0.7\n"
      "target, 1.0, -25, 2.1, 0.8\n");
  const auto tracks = read_seg_tracks(in);
  REQUIRE(tracks.size() == 2);
  CHECK(tracks.at(Role::kTarget).observations.size() == 2);
  CHECK(tracks.at(Role::kReference).observations[0].theta == doctest::Approx(-170.0));
  CHECK(tracks.at(Role::kTarget).frame_count == 64);

  std::stringstream out;
  write_seg_tracks(out, tracks);
  const auto back = read_seg_tracks(out);
  CHECK(back.at(Role::kTarget).observations == tracks.at(Role::kTarget).observations);

  std::stringstream decreasing("target, 1.0, 0, 1, 1\ntarget, 0.5, 0, 1, 1\n");
  CHECK_THROWS_AS(read_seg_tracks(decreasing), ParseError);
  std::stringstream bad("target, 1.0, 0, 1\n");
  CHECK_THROWS_AS(read_seg_tracks(bad), ParseError);
  std::stringstream who("speaker, 1.0, 0, 1, 1\n");
  CHECK_THROWS_AS(read_seg_tracks(who), ParseError);
}

TEST_CASE("bundle json round trip and mode check") {
  TrackBundle b;
  b.sd = parse_snapshot(kOpen);
  b.seg[Role::kTarget].observations = {{4.0, 10.0, 2.0, 0.9}};
  b.audio = {{4.0, 100.0, 2.5, 1.2, 3.0}, {4.25, 101.0, std::nullopt, 0.0, 2.0}};
  const auto back = bundle_from_json(to_json(b));
  CHECK(back.sd == b.sd);
  CHECK(back.audio == b.audio);
  CHECK(back.seg.at(Role::kTarget).observations == b.seg.at(Role::kTarget).observations);

  b.seg[Role::kFacing].observations = {{4.0, 10.0, 2.0, 0.9}};
  CHECK_THROWS_AS(b.validate(), ModeError);
}

TEST_CASE("apply_calibration fills ranges from the stored CDR") {
  std::vector<AudioObservation> track{{0.0, 10.0, std::nullopt, 1.0, 1.0},
                                      {0.25, 20.0, std::nullopt, 4.0, 1.0},
                                      {0.5, 30.0, 7.0, 0.0, 1.0}};
  const auto out = apply_calibration(track, {4.0, 3, 3});
  REQUIRE(out.size() == 3);
  CHECK(*out[0].r == doctest::Approx(2.0));
  CHECK(*out[1].r == doctest::Approx(1.0));
  // Undefined CDR: no range, even if one was set before.
  CHECK_FALSE(out[2].r.has_value());
  CHECK(out[1].theta == 20.0);
}
