#include "savvy/doa.hpp"
#include "savvy/errors.hpp"
#include "savvy/fusion.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <memory>

namespace savvy {

namespace {

using Rgb = std::array<std::uint8_t, 3>;

constexpr Rgb kWhite{255, 255, 255};
constexpr Rgb kGrid{230, 230, 230};
constexpr Rgb kCamera{140, 140, 140};
constexpr Rgb kTarget{200, 40, 40};
constexpr Rgb kReference{40, 90, 200};
constexpr Rgb kFacing{30, 150, 60};

struct Source3 {
  Rgb seg{230, 140, 0};
  Rgb sd{150, 60, 180};
  Rgb audio{0, 170, 190};
};

class Canvas {
 public:
  Canvas(int size, double x0, double y0, double scale)
      : size_(size), x0_(x0), y0_(y0), scale_(scale), px_(static_cast<std::size_t>(size * size), kWhite) {}

  void set(int x, int y, Rgb c) {
    if (x >= 0 && y >= 0 && x < size_ && y < size_) px_[static_cast<std::size_t>(y * size_ + x)] = c;
  }

  // World (x, y) to pixel; +y up.
  std::pair<int, int> to_px(geometry::GlobalPoint p) const {
    return {static_cast<int>(std::lround((p.x - x0_) * scale_)),
            size_ - 1 - static_cast<int>(std::lround((p.y - y0_) * scale_))};
  }

  void line(geometry::GlobalPoint a, geometry::GlobalPoint b, Rgb c) {
    auto [x0, y0] = to_px(a);
    const auto [x1, y1] = to_px(b);
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      set(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  void disc(geometry::GlobalPoint p, int radius, Rgb c) {
    const auto [cx, cy] = to_px(p);
    for (int y = -radius; y <= radius; ++y) {
      for (int x = -radius; x <= radius; ++x) {
        if (x * x + y * y <= radius * radius) set(cx + x, cy + y, c);
      }
    }
  }

  void grid(double step) {
    const double span = size_ / scale_;
    for (double g = std::ceil(x0_ / step) * step; g <= x0_ + span; g += step) {
      line({g, y0_}, {g, y0_ + span}, kGrid);
    }
    for (double g = std::ceil(y0_ / step) * step; g <= y0_ + span; g += step) {
      line({x0_, g}, {x0_ + span, g}, kGrid);
    }
  }

  void write(const std::string& path) const {
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!fp) throw Error("cannot write image: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
      png_destroy_write_struct(&png, &info);
      throw Error("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
      png_destroy_write_struct(&png, &info);
      throw Error("libpng failed writing " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(size_), static_cast<png_uint_32>(size_), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < size_; ++y) {
      png_write_row(png, const_cast<png_bytep>(px_[static_cast<std::size_t>(y * size_)].data()));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
  }

 private:
  int size_;
  double x0_, y0_, scale_;
  std::vector<Rgb> px_;
};

}  // namespace

namespace fusion {

void plot_global_map(const GlobalMap& map, const geometry::CameraTrajectory& traj, const std::string& path,
                     int size) {
  if (size < 64) throw Error("plot size must be at least 64 pixels");
  std::vector<geometry::GlobalPoint> pts;
  for (const auto& p : map.target) pts.push_back(p.position);
  for (const auto& p : map.fused) pts.push_back(p.position);
  if (map.reference) pts.push_back(map.reference->position);
  if (map.facing) pts.push_back(map.facing->position);
  std::vector<geometry::GlobalPoint> cam;
  for (const auto& pose : traj.poses()) cam.push_back({pose.position.x(), pose.position.y()});
  pts.insert(pts.end(), cam.begin(), cam.end());
  if (pts.empty()) pts.push_back({0.0, 0.0});

  double xmin = pts[0].x, xmax = pts[0].x, ymin = pts[0].y, ymax = pts[0].y;
  for (const auto& p : pts) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  const double extent = std::max({xmax - xmin, ymax - ymin, 2.0}) * 1.15;
  const double cx = 0.5 * (xmin + xmax), cy = 0.5 * (ymin + ymax);
  Canvas c(size, cx - 0.5 * extent, cy - 0.5 * extent, size / extent);
  c.grid(1.0);

  for (std::size_t i = 1; i < cam.size(); ++i) c.line(cam[i - 1], cam[i], kCamera);
  if (!cam.empty()) c.disc(cam.front(), 3, kCamera);

  const Source3 colors;
  for (const auto& p : map.fused) {
    const Rgb col = p.source == Source::kSeg ? colors.seg : p.source == Source::kSd ? colors.sd : colors.audio;
    c.disc(p.position, 2, col);
  }
  for (std::size_t i = 1; i < map.target.size(); ++i) c.line(map.target[i - 1].position, map.target[i].position, kTarget);
  if (!map.target.empty()) c.disc(map.target_at(map.span.midpoint()), 4, kTarget);
  if (map.reference) c.disc(map.reference->position, 5, kReference);
  if (map.facing) c.disc(map.facing->position, 5, kFacing);
  c.write(path);
}

}  // namespace fusion

namespace doa {

void plot_power_curve(const DoaEstimate& estimate, const DoaGrid& grid, const std::string& path,
                      std::optional<double> truth, int size) {
  if (size < 64) throw Error("plot size must be at least 64 pixels");
  const auto angles = grid.angles();
  if (angles.size() != estimate.power.size()) throw Error("power curve does not match the grid");
  double lo = estimate.power.front(), hi = estimate.power.front();
  for (double p : estimate.power) {
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
  const double range = hi > lo ? hi - lo : 1.0;
  // Unit square: angle across, normalized power up.
  auto at = [&](double phi, double p) {
    return geometry::GlobalPoint{(phi - grid.start) / (grid.stop - grid.start), (p - lo) / range};
  };
  Canvas c(size, -0.05, -0.05, size / 1.1);
  c.grid(0.25);
  for (std::size_t i = 1; i < angles.size(); ++i) {
    c.line(at(angles[i - 1], estimate.power[i - 1]), at(angles[i], estimate.power[i]), kReference);
  }
  if (truth) c.line(at(*truth, lo), at(*truth, hi), kFacing);
  c.disc(at(estimate.phi_hat, estimate.peak_power), 4, kTarget);
  c.write(path);
}

}  // namespace doa

}  // namespace savvy
