#pragma once

#include "cal/data.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cal::synth {

// Two interleaving half circles with isotropic Gaussian noise, classes balanced.
Dataset two_moons(std::size_t n, double noise, std::uint64_t seed);

// Two overlapping classes in 2-D: class "a" is a two-component Gaussian
// mixture, class "b" a single elongated Gaussian that overlaps both.
Dataset clouds(std::size_t n, std::uint64_t seed);

struct Blob {
    std::vector<double> mean;
    double stddev = 1.0;
    std::size_t count = 0;
    int label = 0;
};

// Isotropic Gaussian blobs; the dataset has one class per distinct label.
Dataset blobs(const std::vector<Blob>& spec, std::uint64_t seed);

Dataset generate(const std::string& kind, std::size_t n, double noise, std::uint64_t seed);

}  // namespace cal::synth
