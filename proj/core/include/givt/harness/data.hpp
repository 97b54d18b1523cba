#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "givt/rng.hpp"

namespace givt::harness {

struct LabeledImages {
    std::size_t size = 0;
    std::size_t image_size = 32;
    /// size x image_size x image_size, values in [0, 1].
    std::vector<float> pixels;
    std::vector<std::size_t> labels;
};

/// Procedural 32x32 grayscale shapes. Class c sets the background level and the
/// shape family (disc, square, stripes, ring, cycling); position, size and
/// pixel noise vary per image. Image i of a split is a pure function of
/// (seed, split, i) and its label is i mod num_classes.
class ToyDataset {
public:
    ToyDataset(std::uint64_t seed, std::size_t num_classes, std::size_t image_size = 32);

    std::size_t num_classes() const noexcept { return num_classes_; }
    std::size_t image_size() const noexcept { return image_size_; }
    std::size_t label(std::size_t index) const noexcept { return index % num_classes_; }
    double background(std::size_t cls) const;

    /// Writes image_size^2 pixels.
    void image(const std::string& split, std::size_t index, float* out) const;
    LabeledImages generate(const std::string& split, std::size_t first, std::size_t n) const;

private:
    RngKey key_;
    std::size_t num_classes_;
    std::size_t image_size_;
};

/// n images of the "train" split.
LabeledImages gen_toy_dataset(std::uint64_t seed, std::size_t n, std::size_t num_classes);

/// Per-channel stationary AR(1) token process: z_0 ~ N(0,1),
/// z_i = a z_{i-1} + sqrt(1 - a^2) eps_i.
struct ArProcess {
    double a = 0.8;
    std::size_t tokens = 64;
    std::size_t d = 4;

    std::vector<double> sample(const RngKey& key) const;
    /// Differential entropy per channel per position, averaged over positions (nats).
    double conditional_entropy() const;
};

} // namespace givt::harness
