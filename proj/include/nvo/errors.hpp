#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace nvo {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A camera-frame point with z <= 0 was handed to the stereo model.
class NonPositiveDepth : public Error {
public:
    explicit NonPositiveDepth(double z)
        : Error("point has non-positive depth z = " + std::to_string(z)), depth(z) {}
    double depth;
};

/// Stereo disparity at or below the triangulation floor.
class DegenerateDisparity : public Error {
public:
    DegenerateDisparity(double disparity, double floor)
        : Error("disparity " + std::to_string(disparity) + " px <= minimum " + std::to_string(floor) + " px"),
          disparity(disparity) {}
    double disparity;
};

/// Fewer than three non-collinear points in a plane fit.
class DegenerateCloud : public Error {
public:
    using Error::Error;
};

/// Pose-only optimization could not produce a usable pose for a frame.
class TrackingLost : public Error {
public:
    TrackingLost(std::int64_t frame, const std::string& why)
        : Error("tracking lost at frame " + std::to_string(frame) + ": " + why), frame_id(frame) {}
    std::int64_t frame_id;
};

class TooFewPoses : public Error {
public:
    using Error::Error;
};

class TimestampMismatch : public Error {
public:
    using Error::Error;
};

class SequenceTooShort : public Error {
public:
    using Error::Error;
};

/// Configuration key unknown, malformed, or out of range.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed input file; the message carries path and line number.
class ParseError : public Error {
public:
    ParseError(const std::string& path, std::size_t line, const std::string& what)
        : Error(path + ":" + std::to_string(line) + ": " + what), line(line) {}
    std::size_t line;
};

}  // namespace nvo
