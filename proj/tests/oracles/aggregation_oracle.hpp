#pragma once

// Straight-line transcription of the track aggregation loop, written without
// the library's fusion helpers: for each t in the query range, for each source
// in (seg, sd, audio) holding t, filter against the previous estimate and
// write p(t). Used to cross-check fusion::fuse_dynamic on small inputs.

#include "savvy/fusion.hpp"

#include <cmath>
#include <vector>

namespace oracle {

struct Params {
  double gate_radius = 1.5;
  double gate_window = 2.0;
  double coverage = 0.5;
  double behind = 90.0;
  double span_deg = 45.0;
  double margin = 1.0;
  int abins = 10;
  int rbins = 5;
  double default_range = 2.0;
};

struct Out {
  double t;
  double x;
  double y;
  int source;  // 0 seg, 1 sd, 2 audio
};

inline double wrap(double a) {
  double w = std::fmod(a + 180.0, 360.0);
  if (w < 0) w += 360.0;
  return w - 180.0;
}

inline void to_world(double lx, double ly, double heading, double theta, double r, double& x, double& y) {
  const double a = (heading + theta) * M_PI / 180.0;
  x = lx + r * std::sin(a);
  y = ly + r * std::cos(a);
}

inline std::vector<Out> aggregate(const savvy::fusion::GlobalTrack& S, const savvy::fusion::GlobalTrack& D,
                                  const savvy::fusion::GlobalTrack& A, double t0, double t1, const Params& k) {
  const savvy::fusion::GlobalTrack* src[3] = {&S, &D, &A};

  // T_q: every timestamp any source has inside [t0, t1], ascending, unique.
  std::vector<double> T;
  for (auto* s : src) {
    for (const auto& p : *s) {
      if (p.t < t0 || p.t > t1) continue;
      bool seen = false;
      for (double u : T) seen = seen || u == p.t;
      if (!seen) T.push_back(p.t);
    }
  }
  for (std::size_t i = 0; i < T.size(); ++i) {
    for (std::size_t j = i + 1; j < T.size(); ++j) {
      if (T[j] < T[i]) std::swap(T[i], T[j]);
    }
  }

  std::vector<Out> p;
  for (double t : T) {
    bool have_t = false;
    for (int s = 0; s < 3; ++s) {
      // first element of this source stamped t
      const savvy::fusion::TrackPoint* tau = nullptr;
      for (const auto& q : *src[s]) {
        if (q.t == t) {
          tau = &q;
          break;
        }
      }
      if (!tau || have_t) continue;
      const Out* prev = p.empty() ? nullptr : &p.back();

      if (s == 1) {
        if (prev && t - prev->t <= k.gate_window &&
            std::hypot(tau->position.x - prev->x, tau->position.y - prev->y) > k.gate_radius) {
          continue;
        }
        p.push_back({t, tau->position.x, tau->position.y, 1});
        have_t = true;
        continue;
      }
      if (s == 0) {
        p.push_back({t, tau->position.x, tau->position.y, 0});
        have_t = true;
        continue;
      }

      // audio
      bool near_visual = false;
      for (int v = 0; v < 2; ++v) {
        for (const auto& q : *src[v]) {
          if (q.t >= t0 && q.t <= t1 && std::abs(q.t - t) <= k.coverage) near_visual = true;
        }
      }
      if (!(std::abs(tau->ego.theta) > k.behind) && near_visual) continue;

      const double lx = tau->pose.position.x, ly = tau->pose.position.y, h = tau->pose.heading;
      double th = tau->ego.theta;
      double r = tau->ego.r;
      double x, y;
      bool has_center = false;
      double tc = 0.0, rc = 0.0;
      if (prev) {
        const double dx = prev->x - lx, dy = prev->y - ly;
        rc = std::hypot(dx, dy);
        if (rc > 0.0) {
          has_center = true;
          tc = wrap(std::atan2(dx, dy) * 180.0 / M_PI - h);
        }
      }
      if (!tau->has_range) r = has_center ? rc : k.default_range;
      to_world(lx, ly, h, th, r, x, y);
      if (has_center && std::abs(wrap(th - tc)) <= k.span_deg / 2 && std::abs(r - rc) <= k.margin) {
        double bx = x, by = y, bd = 1e300;
        for (int i = 0; i < k.abins; ++i) {
          for (int j = 0; j < k.rbins; ++j) {
            const double ci = tc - k.span_deg / 2 + (i + 0.5) * k.span_deg / k.abins;
            const double cj = rc - k.margin + (j + 0.5) * 2 * k.margin / k.rbins;
            if (cj <= 0) continue;
            double cx, cy;
            to_world(lx, ly, h, ci, cj, cx, cy);
            const double d = std::hypot(cx - x, cy - y);
            if (d < bd) {
              bd = d;
              bx = cx;
              by = cy;
            }
          }
        }
        x = bx;
        y = by;
      }
      p.push_back({t, x, y, 2});
      have_t = true;
    }
  }
  return p;
}

}  // namespace oracle
