#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mpeval {

/// Deterministic splitmix64 generator. Used everywhere a seeded draw must be
/// reproducible across platforms and standard-library versions; std::mt19937
/// distributions are implementation-defined and would break replay.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next();

    /// Uniform draw in [0, bound) via rejection sampling. bound >= 1.
    std::uint64_t below(std::uint64_t bound);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

    /// First k indices of a Fisher-Yates pass over [0, population):
    /// a uniform sample without replacement, in draw order.
    std::vector<std::size_t> sample_indices(std::size_t population, std::size_t k);

    /// Combines two seeds into a well-scrambled derived seed.
    static std::uint64_t mix(std::uint64_t a, std::uint64_t b);

private:
    std::uint64_t state_;
};

std::uint64_t fnv1a64(std::string_view data);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

/// Formats with exactly two decimals, rounding halves away from zero.
std::string format_fixed2(double value);

/// Rounds to two decimals, halves away from zero.
double round2(double value);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace mpeval
