#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace storyscore {

// 64-bit FNV-1a. Used for cache keys, artifact digests and sub-seed derivation.
// The basis parameter lets a digest continue from a saved intermediate state:
// fnv1a64(b, fnv1a64(a)) == fnv1a64(a + b).
uint64_t fnv1a64(std::string_view data, uint64_t basis = 14695981039346656037ull);
std::string hex16(uint64_t h);
std::string digest_hex(std::string_view data);

// Derive a child seed from a parent seed and a label, so that independent
// random streams never share state.
uint64_t derive_seed(uint64_t parent, std::string_view label);

// Portable draws on top of mt19937_64. The engine's output sequence is fixed
// by the standard; std::uniform_* distributions are not, so we roll our own
// to keep generated corpora byte-identical across toolchains.
double u01(std::mt19937_64& rng);                       // [0, 1)
double u01_open(std::mt19937_64& rng);                  // (0, 1)
int uniform_int(std::mt19937_64& rng, int lo, int hi);  // inclusive bounds
double uniform_real(std::mt19937_64& rng, double lo, double hi);
double normal(std::mt19937_64& rng, double mean, double stddev);

template <typename T>
void shuffle_portable(std::vector<T>& v, std::mt19937_64& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

// Shortest decimal string that round-trips to the same double.
std::string format_double(double value);

// Split a UTF-8 string into one string per encoded character. Invalid lead
// bytes are passed through as single bytes rather than rejected. The view
// variant aliases the input, which must outlive the result.
std::vector<std::string> utf8_chars(std::string_view text);
std::vector<std::string_view> utf8_char_views(std::string_view text);

std::string trim(std::string_view s);
std::string lowercase_ascii(std::string_view s);
bool starts_with_at(std::string_view text, size_t pos, std::string_view prefix);

std::string read_file(const std::filesystem::path& path);
// Write via a temp file in the same directory plus rename, so readers never
// observe a half-written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace storyscore
