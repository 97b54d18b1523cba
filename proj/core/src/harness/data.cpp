#include "givt/harness/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "givt/error.hpp"

namespace givt::harness {

ToyDataset::ToyDataset(std::uint64_t seed, std::size_t num_classes, std::size_t image_size)
    : key_(RngKey(seed).child("toy_data")), num_classes_(num_classes), image_size_(image_size)
{
    if (num_classes < 1 || image_size < 16) {
        throw Error(ErrorCode::invalid_argument, "toy dataset needs >= 1 class and images of at least 16 px");
    }
}

double ToyDataset::background(std::size_t cls) const
{
    if (num_classes_ == 1) {
        return 0.45;
    }
    return 0.15 + 0.6 * static_cast<double>(cls) / static_cast<double>(num_classes_ - 1);
}

void ToyDataset::image(const std::string& split, std::size_t index, float* out) const
{
    Rng rng(key_.child(split).child(index));
    const std::size_t cls = label(index);
    const double s = static_cast<double>(image_size_);
    const double base = background(cls);
    const double contrast = base < 0.5 ? 0.25 : -0.25;
    const double cx = s * (0.3 + 0.4 * rng.uniform());
    const double cy = s * (0.3 + 0.4 * rng.uniform());
    const double r = s * (0.16 + 0.12 * rng.uniform());
    const std::size_t family = cls % 4;
    for (std::size_t y = 0; y < image_size_; ++y) {
        for (std::size_t x = 0; x < image_size_; ++x) {
            const double dx = static_cast<double>(x) + 0.5 - cx;
            const double dy = static_cast<double>(y) + 0.5 - cy;
            const double dist = std::hypot(dx, dy);
            bool inside = false;
            switch (family) {
            case 0:
                inside = dist < r;
                break;
            case 1:
                inside = std::abs(dx) < r && std::abs(dy) < r;
                break;
            case 2:
                inside = std::abs(dx) < r && std::abs(dy) < r && (y / 2) % 2 == 0;
                break;
            default:
                inside = dist < r && dist > r - 2.5;
                break;
            }
            const double v = base + (inside ? contrast : 0.0) + 0.03 * rng.normal();
            out[y * image_size_ + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
}

LabeledImages ToyDataset::generate(const std::string& split, std::size_t first, std::size_t n) const
{
    LabeledImages b;
    b.size = n;
    b.image_size = image_size_;
    b.pixels.resize(n * image_size_ * image_size_);
    b.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        image(split, first + i, b.pixels.data() + i * image_size_ * image_size_);
        b.labels[i] = label(first + i);
    }
    return b;
}

LabeledImages gen_toy_dataset(std::uint64_t seed, std::size_t n, std::size_t num_classes)
{
    if (n < 1) {
        throw Error(ErrorCode::invalid_argument, "dataset size must be >= 1");
    }
    return ToyDataset(seed, num_classes).generate("train", 0, n);
}

std::vector<double> ArProcess::sample(const RngKey& key) const
{
    Rng rng(key);
    const double innovation = std::sqrt(1.0 - a * a);
    std::vector<double> z(tokens * d);
    for (std::size_t c = 0; c < d; ++c) {
        z[c] = rng.normal();
    }
    for (std::size_t i = 1; i < tokens; ++i) {
        for (std::size_t c = 0; c < d; ++c) {
            z[i * d + c] = a * z[(i - 1) * d + c] + innovation * rng.normal();
        }
    }
    return z;
}

double ArProcess::conditional_entropy() const
{
    const double h0 = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
    const double hc = h0 + 0.5 * std::log(1.0 - a * a);
    return (h0 + static_cast<double>(tokens - 1) * hc) / static_cast<double>(tokens);
}

} // namespace givt::harness
