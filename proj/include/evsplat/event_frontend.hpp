#pragma once

#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>
#include <zlib.h>

#include "evsplat/core.hpp"

namespace evsplat {

struct Event {
  double t = 0.0;
  uint16_t x = 0;
  uint16_t y = 0;
  int8_t polarity = 1;  // -1 or +1
};

// Pixel-wise signed event counts over one accumulation window. Counts are in
// contrast-threshold units (the threshold itself cancels against the rendered
// side under the normalized loss).
struct EventKeyframe {
  ImageF64 delta;         // sum of polarities per pixel
  double tau = 0.0;       // midpoint of the window
  double delta_tau = 0.0; // window span, last minus first timestamp
  size_t n_events = 0;
  size_t dropped = 0;     // events outside the image bounds
};

namespace detail {

inline const char* skip_ws(const char* p, const char* end) {
  while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
  return p;
}

template <typename T>
inline const char* parse_num(const char* p, const char* end, T& out, size_t line_no,
                             const char* what) {
  p = skip_ws(p, end);
  auto res = std::from_chars(p, end, out);
  if (res.ec != std::errc())
    throw std::runtime_error("parse_events: line " + std::to_string(line_no) + ": bad " + what);
  return res.ptr;
}

}  // namespace detail

// Text event stream, one "t x y p" record per line with p in {0,1} (mapped to
// -1/+1) or already signed {-1,+1}. '#' lines are comments. A trailing ".gz"
// selects transparent zlib decompression. Timestamps must be non-decreasing
// and coordinates must fit the sensor when a size is given (0 disables the
// bound check).
inline std::vector<Event> parse_events(const std::string& path, int width = 0, int height = 0) {
  std::string text;
  if (path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0) {
    gzFile gz = gzopen(path.c_str(), "rb");
    if (!gz) throw std::runtime_error("parse_events: cannot open " + path);
    char buf[1 << 16];
    int got;
    while ((got = gzread(gz, buf, sizeof(buf))) > 0) text.append(buf, got);
    const bool bad = got < 0;
    gzclose(gz);
    if (bad) throw std::runtime_error("parse_events: decompression failed for " + path);
  } else {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("parse_events: cannot open " + path);
    text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }

  std::vector<Event> events;
  events.reserve(text.size() / 16);
  const char* p = text.data();
  const char* end = p + text.size();
  size_t line_no = 0;
  double prev_t = -std::numeric_limits<double>::infinity();
  while (p < end) {
    ++line_no;
    const char* eol = static_cast<const char*>(memchr(p, '\n', end - p));
    const char* line_end = eol ? eol : end;
    const char* q = detail::skip_ws(p, line_end);
    p = eol ? eol + 1 : end;
    if (q == line_end || *q == '#') continue;

    double t;
    int x, y, pol;
    q = detail::parse_num(q, line_end, t, line_no, "timestamp");
    q = detail::parse_num(q, line_end, x, line_no, "x");
    q = detail::parse_num(q, line_end, y, line_no, "y");
    detail::parse_num(q, line_end, pol, line_no, "polarity");

    if (t < prev_t)
      throw std::runtime_error("parse_events: line " + std::to_string(line_no) +
                               ": timestamps decrease");
    prev_t = t;
    if (pol == 0) pol = -1;
    if (pol != -1 && pol != 1)
      throw std::runtime_error("parse_events: line " + std::to_string(line_no) +
                               ": polarity must be in {0,1} or {-1,1}");
    if (x < 0 || y < 0 || (width > 0 && x >= width) || (height > 0 && y >= height))
      throw std::runtime_error("parse_events: line " + std::to_string(line_no) +
                               ": coordinates outside the sensor");
    events.push_back({t, static_cast<uint16_t>(x), static_cast<uint16_t>(y),
                      static_cast<int8_t>(pol)});
  }
  return events;
}

// Writes the same text format, polarity encoded as 0/1.
inline void save_events(const std::vector<Event>& events, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_events: cannot open " + path);
  char buf[96];
  for (const Event& e : events) {
    const int n = std::snprintf(buf, sizeof(buf), "%.9f %u %u %d\n", e.t, e.x, e.y,
                                e.polarity > 0 ? 1 : 0);
    out.write(buf, n);
  }
  if (!out) throw std::runtime_error("save_events: write failed for " + path);
}

inline EventKeyframe accumulate_keyframe(std::span<const Event> window, int width, int height) {
  if (window.empty()) throw std::invalid_argument("accumulate_keyframe: empty window");
  EventKeyframe kf;
  kf.delta = ImageF64(width, height, 0.0);
  kf.n_events = window.size();
  kf.tau = 0.5 * (window.front().t + window.back().t);
  kf.delta_tau = window.back().t - window.front().t;
  for (const Event& e : window) {
    if (e.x >= width || e.y >= height) {
      ++kf.dropped;
      continue;
    }
    kf.delta(e.x, e.y) += e.polarity;
  }
  return kf;
}

// Consecutive non-overlapping windows of exactly events_per_keyframe events;
// a trailing remainder shorter than one window is discarded.
inline std::vector<EventKeyframe> make_keyframes(std::span<const Event> events,
                                                 size_t events_per_keyframe, int width,
                                                 int height) {
  if (events_per_keyframe == 0)
    throw std::invalid_argument("make_keyframes: events_per_keyframe must be positive");
  std::vector<EventKeyframe> out;
  out.reserve(events.size() / events_per_keyframe);
  for (size_t i = 0; i + events_per_keyframe <= events.size(); i += events_per_keyframe)
    out.push_back(accumulate_keyframe(events.subspan(i, events_per_keyframe), width, height));
  return out;
}

}  // namespace evsplat
