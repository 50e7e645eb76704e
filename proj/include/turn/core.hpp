#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace turn {

// Error taxonomy; the CLI maps each category to a distinct exit code.
enum class errc {
    config = 2,   // bad/unknown config keys, invalid values
    io = 3,       // missing or unreadable files
    format = 4,   // magic/version/dimension mismatches, parse failures
    data = 5,     // empty sample pools, zero ground truths, zero variance
    internal = 6, // non-finite intermediates and other bugs
};

class error : public std::runtime_error {
  public:
    error(errc c, const std::string& msg) : std::runtime_error(msg), code_(c) {}
    errc code() const { return code_; }

  private:
    errc code_;
};

// Half-open span of unit indices [start, end).
struct UnitInterval {
    std::int64_t start = 0;
    std::int64_t end = 0;

    std::int64_t length() const { return end - start; }
    bool valid() const { return start >= 0 && start < end; }
    friend bool operator==(const UnitInterval&, const UnitInterval&) = default;
};

// Closed real segment in seconds.
struct SecondsInterval {
    double start_s = 0.0;
    double end_s = 0.0;

    double length() const { return end_s - start_s; }
    bool valid() const { return start_s >= 0.0 && start_s < end_s; }
    friend bool operator==(const SecondsInterval&, const SecondsInterval&) = default;
};

struct GroundTruth {
    std::string video_id;
    SecondsInterval span;
    std::string label;
};

struct Proposal {
    std::string video_id;
    SecondsInterval span;
    double score = 0.0;
    std::string label; // optional; only detection_map consumes it
};

// Temporal IoU of two real segments. Touching segments overlap by 0 and score 0.
inline double tiou(const SecondsInterval& a, const SecondsInterval& b) {
    double ov = std::min(a.end_s, b.end_s) - std::max(a.start_s, b.start_s);
    if (ov <= 0.0) return 0.0;
    return ov / (a.length() + b.length() - ov);
}

inline SecondsInterval units_to_seconds(const UnitInterval& u, std::int64_t unit_frames,
                                        double fps) {
    double k = static_cast<double>(unit_frames) / fps;
    return {static_cast<double>(u.start) * k, static_cast<double>(u.end) * k};
}

} // namespace turn
