#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mer {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- strings ---------------------------------------------------------------

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char delim);

// shortest decimal form that round-trips a double (printf %.17g, then the
// shortest precision that still parses back exactly)
std::string format_double(double v);

// strict conversions; `context` names the file/line/field for error messages
double parse_double(const std::string& s, const std::string& context);
std::uint64_t parse_u64(const std::string& s, const std::string& context);

// --- deterministic randomness ----------------------------------------------

std::uint64_t splitmix64(std::uint64_t x);

// seed for a named substream, stable across platforms
std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t stream);

// bounded draw and Fisher-Yates shuffle that do not depend on the standard
// library's distribution implementations
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound);

template <typename T>
void deterministic_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(v[i - 1], v[j]);
  }
}

// --- hashing ----------------------------------------------------------------

std::uint64_t fnv1a(const void* data, std::size_t n,
                    std::uint64_t h = 0xcbf29ce484222325ull);
std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ull);
std::string hash_hex(std::uint64_t h);
std::uint64_t hash_file(const std::filesystem::path& p);

// --- files -------------------------------------------------------------------

std::string read_text_file(const std::filesystem::path& p);
// writes to a sibling temp file, then renames over the target
void atomic_write_file(const std::filesystem::path& p, const std::string& content);

// --- parallelism --------------------------------------------------------------

// runs fn(i) for i in [0, n); partitions the range over `jobs` threads.
// Exceptions are captured and the first one is rethrown on the caller.
void parallel_for(std::size_t n, std::size_t jobs,
                  const std::function<void(std::size_t)>& fn);

}  // namespace mer
