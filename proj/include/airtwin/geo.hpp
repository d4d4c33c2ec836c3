#pragma once

namespace airtwin {

inline constexpr double kEarthRadiusNm = 3440.065;

struct LatLon {
  double lat = 0;
  double lon = 0;
};

/// Great-circle distance in nautical miles.
double distance_nm(LatLon a, LatLon b);

/// Point at fraction f (0..1) of the great-circle arc from a to b.
LatLon interpolate(LatLon a, LatLon b, double f);

/// Initial true bearing from a towards b, degrees in [0, 360).
double bearing_deg(LatLon a, LatLon b);

}  // namespace airtwin
