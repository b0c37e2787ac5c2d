#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace fastbvp {

enum class ErrorCode {
    Argument,      // bad parameter value
    Io,            // file system failure
    Schema,        // malformed input file structure
    Data,          // structurally valid but unusable values
    State,         // operation applied to an object in the wrong state
    Shape,         // tensor/array dimension mismatch
    Config,        // invalid or inconsistent configuration
    Diverged,      // training produced non-finite loss
    Insufficient,  // not enough signal to compute the result
    Degenerate,    // result undefined for this input (e.g. constant series)
    Internal,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& msg)
        : std::runtime_error(msg), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& msg) {
    throw Error(code, msg);
}

// Deterministic RNG. mt19937_64 has a standard-specified sequence; the
// uniform/gaussian mappings below are implemented here rather than with
// std distributions so that streams are identical on every platform.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }
    double uniform();                       // [0, 1)
    double uniform(double lo, double hi);   // [lo, hi)
    int uniform_int(int n);                 // [0, n), unbiased
    double gaussian();                      // N(0, 1), Box-Muller
    double gaussian(double mean, double sigma);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Derives an independent per-stream seed from a master seed (splitmix64).
uint64_t split_seed(uint64_t master, uint64_t stream);

// FASTBVP_LOG: unset/0 = quiet, 1 = info, 2 = debug.
int log_level();
void log_info(const std::string& line);
void log_debug(const std::string& line);

// Shortest stable text form used for CSV/report output ("%.10g").
std::string format_double(double x);

// Runs fn(i) for i in [0, n). threads <= 1 executes inline. Work is
// partitioned statically so output written per-index is schedule-free.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

bool all_finite(const std::vector<double>& values);

double mean_of(const std::vector<double>& values);
double sample_std(const std::vector<double>& values);      // divide by N-1
double population_std(const std::vector<double>& values);  // divide by N

// Pearson correlation; raises Degenerate when either side is constant.
double pearson(const std::vector<double>& a, const std::vector<double>& b);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace fastbvp
