#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsgsum {

// Data-level failure (bad file, bad record, mismatched ids). The CLI maps
// these to exit code 2; everything else thrown is a usage/internal error.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

#define DSG_CHECK(cond, msg)                              \
  do {                                                    \
    if (!(cond)) {                                        \
      std::ostringstream oss__;                           \
      oss__ << msg;                                       \
      throw std::runtime_error(oss__.str());              \
    }                                                     \
  } while (0)

#define DSG_DATA_CHECK(cond, msg)                         \
  do {                                                    \
    if (!(cond)) {                                        \
      std::ostringstream oss__;                           \
      oss__ << msg;                                       \
      throw ::dsgsum::DataError(oss__.str());             \
    }                                                     \
  } while (0)

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

// Controlled by env DSGSUM_LOG in {error,info,debug}; default info.
LogLevel log_level();

void log_line(LogLevel lvl, const std::string& msg);

#define DSG_LOG_INFO(msg)                                  \
  do {                                                     \
    if (::dsgsum::log_level() >= ::dsgsum::LogLevel::Info) { \
      std::ostringstream oss__;                            \
      oss__ << msg;                                        \
      ::dsgsum::log_line(::dsgsum::LogLevel::Info, oss__.str()); \
    }                                                      \
  } while (0)

#define DSG_LOG_DEBUG(msg)                                 \
  do {                                                     \
    if (::dsgsum::log_level() >= ::dsgsum::LogLevel::Debug) { \
      std::ostringstream oss__;                            \
      oss__ << msg;                                        \
      ::dsgsum::log_line(::dsgsum::LogLevel::Debug, oss__.str()); \
    }                                                      \
  } while (0)

#define DSG_LOG_ERROR(msg)                                 \
  do {                                                     \
    std::ostringstream oss__;                              \
    oss__ << msg;                                          \
    ::dsgsum::log_line(::dsgsum::LogLevel::Error, oss__.str()); \
  } while (0)

// splitmix64: counter-based generator used everywhere randomness must be
// reproducible from a seed (init, dropout masks, bootstrap resampling).
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t x = state_;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  // uniform in [0, 1)
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // uniform in [lo, hi)
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // standard normal via Box-Muller
  double normal() {
    double u1 = next_double();
    double u2 = next_double();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // uniform integer in [0, n)
  uint64_t next_below(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

 private:
  uint64_t state_;
};

std::string lowercase(const std::string& s);

// whitespace tokenization; consecutive separators collapse
std::vector<std::string> split_ws(const std::string& s);

std::string join_tokens(const std::vector<std::string>& toks, const std::string& sep = " ");

}  // namespace dsgsum
