#include <doctest.h>

#include "savvy/errors.hpp"
#include "savvy/pipeline.hpp"

using namespace savvy;
using namespace savvy::pipeline;

namespace {

geometry::CameraTrajectory still_camera() {
  std::vector<geometry::CameraPose> poses(2);
  poses[0].t = 0.0;
  poses[1].t = 100.0;
  for (auto& p : poses) {
    p.position = {0.0, 0.0, 1.6};
    p.orientation = geometry::level_orientation(0.0);
  }
  return geometry::CameraTrajectory(poses);
}

tracks::TrackBundle ego_bundle() {
  tracks::TrackBundle b;
  b.sd.event = "knock";
  b.sd.start = 2.0;
  b.sd.end = 4.0;
  b.sd.target.name = "door";
  b.sd.target.keyframes = {geometry::EgoObservation::make(3.0, -40.0, 2.0)};
  b.sd.reference = tracks::ObjectEntry::camera();
  auto& seg = b.seg[tracks::Role::kTarget];
  for (double t = 2.0; t <= 4.0; t += 0.5) seg.observations.push_back({t, -40.0, 2.0, 0.9});
  for (double t = 2.0; t <= 4.0; t += 0.25) b.audio.push_back({t, -35.0, 2.2, 1.0, 1.0});
  return b;
}

}  // namespace

TEST_CASE("pipeline config: defaults round trip, partial overrides, unknown keys") {
  const PipelineConfig d;
  const auto j = to_json(d);
  CHECK(to_json(config_from_json(j)) == j);
  CHECK(j.at("doa").at("segment_seconds") == 0.25);
  CHECK(j.at("doa").at("grid").at("step") == 1.0);
  CHECK(j.at("cdr").at("welch").at("segment_length") == 1536);
  CHECK(j.at("cdr").at("welch").at("overlap") == 0.5);
  CHECK(j.at("cdr").at("welch").at("band_low") == 500.0);
  CHECK(j.at("cdr").at("welch").at("band_high") == 2000.0);
  CHECK(j.at("fusion").at("static_eps") == 1.0);
  CHECK(j.at("fusion").at("frustum").at("range_margin") == 1.0);
  CHECK(j.at("fusion").at("frustum").at("angular_span") == 45.0);
  CHECK(j.at("fusion").at("frustum").at("angular_bins") == 10);
  CHECK(j.at("fusion").at("frustum").at("range_bins") == 5);

  const auto c = config_from_json({{"fusion", {{"kalman", {{"process_noise", 0.5}}}}}, {"qa", {{"eval_time", "start"}}}});
  CHECK(c.fusion.kalman.process_noise == 0.5);
  CHECK(c.fusion.kalman.measurement_noise == d.fusion.kalman.measurement_noise);
  CHECK(c.qa.eval_time == qa::EvalTime::kStart);
  CHECK(config_from_json({{"calibration", {{"eps", 0.2}}}}).calibration.eps == 0.2);

  try {
    config_from_json({{"fusion", {{"frustum", {{"bogus", 1}}}}}});
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.field() == "fusion.frustum.bogus");
  }
  CHECK_THROWS_AS(config_from_json({{"doa", {{"window", "hamming"}}}}), ParseError);
  CHECK_THROWS_AS(config_from_json({{"doa", {{"segment_seconds", "long"}}}}), ParseError);
  CHECK_THROWS_AS(config_from_json({{"doa", {{"grid", {{"step", 0.0}}}}}}), Error);
}

TEST_CASE("source sets") {
  CHECK(SourceSet::parse("all").to_string() == "seg,sd,audio");
  const auto s = SourceSet::parse("audio, seg");
  CHECK(s.seg);
  CHECK_FALSE(s.sd);
  CHECK(s.audio);
  CHECK(s.to_string() == "seg,audio");
  CHECK_THROWS_AS(SourceSet::parse("video"), ParseError);
  CHECK_THROWS_AS(SourceSet::parse(""), ParseError);
}

TEST_CASE("select_sources keeps span, mode and object identities") {
  auto b = ego_bundle();
  const auto audio_only = select_sources(b, SourceSet::parse("audio"));
  CHECK(audio_only.sd.start == b.sd.start);
  CHECK(audio_only.sd.end == b.sd.end);
  CHECK(audio_only.sd.mode == b.sd.mode);
  CHECK(audio_only.sd.target.name == "door");
  CHECK(audio_only.sd.target.keyframes.empty());
  CHECK(audio_only.seg.empty());
  CHECK(audio_only.audio == b.audio);
  const auto visual = select_sources(b, SourceSet::parse("seg,sd"));
  CHECK(visual.audio.empty());
  CHECK(visual.sd == b.sd);
  CHECK(select_sources(b, {}).seg.at(tracks::Role::kTarget).observations.size() == 5);
}

TEST_CASE("answer_question: visible target, ablations and failures") {
  const auto traj = still_camera();
  qa::Question q;
  q.id = "k";
  q.kind = qa::Kind::kEgoDirHard;
  q.event = "knock";
  const auto full = answer_question(q, ego_bundle(), traj);
  REQUIRE(full.answer.label);
  CHECK(*full.answer.label == "A");
  CHECK(full.failure.empty());
  REQUIRE(full.map);
  CHECK(full.answer.eval_time == doctest::Approx(3.0));

  auto b = ego_bundle();
  b.audio.clear();
  const auto none = answer_question(q, select_sources(b, SourceSet::parse("audio")), traj);
  CHECK_FALSE(none.answer.label);
  CHECK_FALSE(none.answer.meters);
  CHECK(none.answer.id == "k");
  CHECK_FALSE(none.failure.empty());

  // Allocentric question without any anchor source.
  qa::Question allo = q;
  allo.kind = qa::Kind::kAlloDist;
  allo.reference = "sofa";
  auto ab = ego_bundle();
  ab.sd.mode = tracks::Mode::kAllocentric;
  tracks::ObjectEntry sofa;
  sofa.name = "sofa";
  sofa.is_static = true;
  ab.sd.reference = sofa;
  ab.sd.facing = sofa;
  const auto r = answer_question(allo, ab, traj);
  CHECK_FALSE(r.answer.meters);
  CHECK(r.failure.find("anchor") != std::string::npos);
}

TEST_CASE("visual target observations pool questions and drop weak detections") {
  std::map<std::string, tracks::SegTracks> seg;
  seg["a"][tracks::Role::kTarget].observations = {{1.0, 10.0, 2.0, 0.9}, {2.0, 10.0, 2.0, 0.2}};
  seg["b"][tracks::Role::kTarget].observations = {{0.5, 0.0, 1.0, 0.7}, {1.0, 10.0, 2.0, 0.9}};
  seg["b"][tracks::Role::kReference].observations = {{0.7, 0.0, 1.0, 0.9}};
  const auto v = visual_target_observations(seg);
  REQUIRE(v.size() == 2);
  CHECK(v[0].t == 0.5);
  CHECK(v[1].t == 1.0);
}
