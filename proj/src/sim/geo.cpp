#include "airtwin/geo.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace airtwin {

namespace {

using Vec = std::array<double, 3>;

double rad(double deg) { return deg * std::numbers::pi / 180.0; }
double deg(double rad) { return rad * 180.0 / std::numbers::pi; }

Vec to_vec(LatLon p) {
  const double la = rad(p.lat);
  const double lo = rad(p.lon);
  return {std::cos(la) * std::cos(lo), std::cos(la) * std::sin(lo), std::sin(la)};
}

LatLon to_latlon(const Vec& v) {
  return {deg(std::atan2(v[2], std::hypot(v[0], v[1]))), deg(std::atan2(v[1], v[0]))};
}

double central_angle(const Vec& a, const Vec& b) {
  const Vec c{a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
  const double dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
  return std::atan2(std::hypot(c[0], c[1], c[2]), dot);
}

}  // namespace

double distance_nm(LatLon a, LatLon b) { return kEarthRadiusNm * central_angle(to_vec(a), to_vec(b)); }

LatLon interpolate(LatLon a, LatLon b, double f) {
  f = std::clamp(f, 0.0, 1.0);
  const Vec va = to_vec(a);
  const Vec vb = to_vec(b);
  const double omega = central_angle(va, vb);
  if (omega < 1e-12) return a;
  const double sa = std::sin((1 - f) * omega) / std::sin(omega);
  const double sb = std::sin(f * omega) / std::sin(omega);
  return to_latlon({sa * va[0] + sb * vb[0], sa * va[1] + sb * vb[1], sa * va[2] + sb * vb[2]});
}

double bearing_deg(LatLon a, LatLon b) {
  const double la1 = rad(a.lat);
  const double la2 = rad(b.lat);
  const double dlo = rad(b.lon - a.lon);
  const double y = std::sin(dlo) * std::cos(la2);
  const double x = std::cos(la1) * std::sin(la2) - std::sin(la1) * std::cos(la2) * std::cos(dlo);
  const double b_deg = std::fmod(deg(std::atan2(y, x)) + 360.0, 360.0);
  return b_deg >= 360.0 ? 0.0 : b_deg;
}

}  // namespace airtwin
