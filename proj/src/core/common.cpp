#include "core/common.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace fastbvp {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::Argument: return "argument";
        case ErrorCode::Io: return "io";
        case ErrorCode::Schema: return "schema";
        case ErrorCode::Data: return "data";
        case ErrorCode::State: return "state";
        case ErrorCode::Shape: return "shape";
        case ErrorCode::Config: return "config";
        case ErrorCode::Diverged: return "diverged";
        case ErrorCode::Insufficient: return "insufficient";
        case ErrorCode::Degenerate: return "degenerate";
        case ErrorCode::Internal: return "internal";
    }
    return "unknown";
}

double Rng::uniform() {
    // 53-bit mantissa construction: exact on every platform.
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

int Rng::uniform_int(int n) {
    if (n <= 0) raise(ErrorCode::Argument, "uniform_int requires n > 0");
    const uint64_t un = static_cast<uint64_t>(n);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return static_cast<int>(x % un);
}

double Rng::gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // Box-Muller; u1 is kept away from zero so log() stays finite.
    double u1;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

double Rng::gaussian(double mean, double sigma) {
    return mean + sigma * gaussian();
}

uint64_t split_seed(uint64_t master, uint64_t stream) {
    // splitmix64 finalizer over the combined value; decorrelates streams
    // even for adjacent (master, stream) pairs.
    uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

int log_level() {
    static const int level = [] {
        const char* env = std::getenv("FASTBVP_LOG");
        if (!env || !*env) return 0;
        return std::atoi(env);
    }();
    return level;
}

namespace {
std::mutex& log_mutex() {
    static std::mutex m;
    return m;
}
}  // namespace

void log_info(const std::string& line) {
    if (log_level() >= 1) {
        std::lock_guard<std::mutex> lock(log_mutex());
        std::fprintf(stderr, "[fastbvp] %s\n", line.c_str());
    }
}

void log_debug(const std::string& line) {
    if (log_level() >= 2) {
        std::lock_guard<std::mutex> lock(log_mutex());
        std::fprintf(stderr, "[fastbvp:debug] %s\n", line.c_str());
    }
}

std::string format_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", x);
    return buf;
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    if (n <= 0) return;
    if (threads <= 1 || n == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    const int workers = std::min(threads, n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            // Static block partition: worker w owns a contiguous index range,
            // so the result layout never depends on scheduling.
            const int lo = static_cast<int>(static_cast<int64_t>(n) * w / workers);
            const int hi = static_cast<int>(static_cast<int64_t>(n) * (w + 1) / workers);
            for (int i = lo; i < hi; ++i) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

bool all_finite(const std::vector<double>& values) {
    for (double v : values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double mean_of(const std::vector<double>& values) {
    if (values.empty()) raise(ErrorCode::Argument, "mean of empty vector");
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

double sample_std(const std::vector<double>& values) {
    if (values.size() < 2) raise(ErrorCode::Argument, "sample_std needs >= 2 values");
    const double m = mean_of(values);
    double acc = 0.0;
    for (double v : values) acc += (v - m) * (v - m);
    return std::sqrt(acc / static_cast<double>(values.size() - 1));
}

double population_std(const std::vector<double>& values) {
    if (values.empty()) raise(ErrorCode::Argument, "population_std of empty vector");
    const double m = mean_of(values);
    double acc = 0.0;
    for (double v : values) acc += (v - m) * (v - m);
    return std::sqrt(acc / static_cast<double>(values.size()));
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) raise(ErrorCode::Shape, "pearson: length mismatch");
    if (a.size() < 2) raise(ErrorCode::Argument, "pearson needs >= 2 samples");
    const double ma = mean_of(a);
    const double mb = mean_of(b);
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if (va <= 0.0 || vb <= 0.0) {
        raise(ErrorCode::Degenerate, "pearson undefined for a constant series");
    }
    return cov / std::sqrt(va * vb);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) raise(ErrorCode::Io, "cannot open for reading: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) raise(ErrorCode::Io, "read failure: " + path);
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(parent, ec);
        if (ec) raise(ErrorCode::Io, "cannot create directory: " + parent.string());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorCode::Io, "cannot open for writing: " + path);
    out << text;
    out.flush();
    if (!out) raise(ErrorCode::Io, "write failure: " + path);
}

}  // namespace fastbvp
