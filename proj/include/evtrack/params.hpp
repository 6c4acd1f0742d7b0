#pragma once

#include <string>
#include <vector>

#include "evtrack/autograd.hpp"

namespace evtrack {

/// Ordered set of named tensors. Insertion order is the serialisation order.
class ParamStore {
public:
    void add(std::string name, Tensor value);
    bool contains(const std::string& name) const;
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;

    const std::vector<std::string>& names() const { return names_; }
    std::vector<Tensor>& values() { return values_; }
    const std::vector<Tensor>& values() const { return values_; }
    std::size_t size() const { return names_.size(); }
    std::size_t scalar_count() const;

    bool operator==(const ParamStore&) const = default;

private:
    std::size_t index(const std::string& name) const;

    std::vector<std::string> names_;
    std::vector<Tensor> values_;
};

/// Graph leaves for every tensor of a store, trainable or constant.
class Binding {
public:
    Binding(const ParamStore& store, bool trainable);
    /// Binds caller-owned leaves, one per tensor of `store`, in store order.
    Binding(const ParamStore& store, std::vector<ag::Var> vars);
    const ag::Var& operator()(const std::string& name) const;
    /// Gradients in store order; zero tensors where nothing flowed.
    std::vector<Tensor> gradients() const;

private:
    const ParamStore* store_;
    std::vector<ag::Var> vars_;
};

}  // namespace evtrack
