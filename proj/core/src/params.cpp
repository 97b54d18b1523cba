#include "givt/params.hpp"

#include <algorithm>

namespace givt {

template <typename T>
Tensor<T>& ParameterStore<T>::add(std::string name, Tensor<T> tensor)
{
    if (contains(name)) {
        throw Error(ErrorCode::invalid_argument, "duplicate parameter " + name);
    }
    tensor.set_requires_grad(true);
    entries_.emplace_back(std::move(name), std::move(tensor));
    return entries_.back().second;
}

template <typename T>
Tensor<T>& ParameterStore<T>::at(const std::string& name)
{
    for (auto& [n, t] : entries_) {
        if (n == name) {
            return t;
        }
    }
    throw Error(ErrorCode::invalid_argument, "unknown parameter " + name);
}

template <typename T>
const Tensor<T>& ParameterStore<T>::at(const std::string& name) const
{
    return const_cast<ParameterStore*>(this)->at(name);
}

template <typename T>
bool ParameterStore<T>::contains(const std::string& name) const
{
    return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

template <typename T>
std::size_t ParameterStore<T>::scalar_count() const
{
    std::size_t n = 0;
    for (const auto& e : entries_) {
        n += e.second.size();
    }
    return n;
}

template <typename T>
void ParameterStore<T>::zero_grad()
{
    for (auto& e : entries_) {
        e.second.zero_grad();
    }
}

template class ParameterStore<float>;
template class ParameterStore<double>;

} // namespace givt
