#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace specmesh {

using Points = Eigen::MatrixX3d;   // one row per vertex / centroid
using Faces = Eigen::MatrixX3i;    // one row per triangle, 0-based vertex ids

// Base error for anything raised by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Violated precondition or malformed configuration (CLI exit code 2).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

// Unreadable or malformed input file.
class ParseError : public Error {
public:
    using Error::Error;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw InvalidArgument(message);
}

// Wall-clock timer accumulating named stage durations in seconds.
class StageTimings {
public:
    void add(const std::string& stage, double seconds) { seconds_[stage] += seconds; }
    double get(const std::string& stage) const {
        auto it = seconds_.find(stage);
        return it == seconds_.end() ? 0.0 : it->second;
    }
    const std::map<std::string, double>& all() const { return seconds_; }
    void merge(const StageTimings& other) {
        for (const auto& [k, v] : other.seconds_) seconds_[k] += v;
    }

private:
    std::map<std::string, double> seconds_;
};

class Stopwatch {
public:
    Stopwatch() : start_(clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(clock::now() - start_).count();
    }
    void reset() { start_ = clock::now(); }

private:
    using clock = std::chrono::steady_clock;
    clock::time_point start_;
};

namespace detail {

inline unsigned default_thread_count() {
    if (const char* env = std::getenv("SPECMESH_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) return static_cast<unsigned>(n);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

// Static partition of [0, count) over at most `threads` workers. Bodies must
// write disjoint state so results do not depend on the worker count.
template <typename Fn>
void parallel_for(std::int64_t count, unsigned threads, Fn&& body) {
    if (threads == 0) threads = default_thread_count();
    if (threads <= 1 || count <= 1) {
        for (std::int64_t i = 0; i < count; ++i) body(i);
        return;
    }
    unsigned workers = static_cast<unsigned>(
        std::min<std::int64_t>(count, static_cast<std::int64_t>(threads)));
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([=]() {
            for (std::int64_t i = w; i < count; i += workers) body(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace detail

}  // namespace specmesh
