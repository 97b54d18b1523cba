#pragma once

#include <string>
#include <utility>
#include <vector>

#include "givt/tensor.hpp"

namespace givt {

/// Ordered, named collection of trainable leaves.
template <typename T>
class ParameterStore {
public:
    Tensor<T>& add(std::string name, Tensor<T> tensor);

    Tensor<T>& at(const std::string& name);
    const Tensor<T>& at(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t scalar_count() const;

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    void zero_grad();

    /// Copies parameter values into another precision (same names and order).
    template <typename U>
    void copy_to(ParameterStore<U>& other) const
    {
        for (const auto& [name, t] : entries_) {
            auto dst = other.at(name).mutable_data();
            const auto src = t.data();
            for (std::size_t i = 0; i < src.size(); ++i) {
                dst[i] = static_cast<U>(src[i]);
            }
        }
    }

private:
    std::vector<std::pair<std::string, Tensor<T>>> entries_;
};

} // namespace givt
