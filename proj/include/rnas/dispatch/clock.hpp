#pragma once

#include <chrono>

namespace rnas::dispatch {

/// Seconds on a monotonic timeline.
class Clock {
public:
    virtual ~Clock() = default;
    virtual double now() const = 0;
};

class SteadyClock final : public Clock {
public:
    double now() const override {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

class ManualClock final : public Clock {
public:
    double now() const override { return now_; }
    void advance_to(double t) {
        if (t > now_) now_ = t;
    }

private:
    double now_ = 0.0;
};

}  // namespace rnas::dispatch
