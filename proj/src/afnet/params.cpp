#include "evtrack/params.hpp"

#include <algorithm>
#include <stdexcept>

namespace evtrack {

void ParamStore::add(std::string name, Tensor value) {
    if (contains(name)) {
        throw std::invalid_argument("duplicate parameter " + name);
    }
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
}

bool ParamStore::contains(const std::string& name) const {
    return std::find(names_.begin(), names_.end(), name) != names_.end();
}

std::size_t ParamStore::index(const std::string& name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) {
        throw std::out_of_range("unknown parameter " + name);
    }
    return static_cast<std::size_t>(it - names_.begin());
}

Tensor& ParamStore::get(const std::string& name) { return values_[index(name)]; }
const Tensor& ParamStore::get(const std::string& name) const { return values_[index(name)]; }

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
}

Binding::Binding(const ParamStore& store, bool trainable) : store_(&store) {
    for (const auto& v : store.values()) {
        vars_.push_back(ag::leaf(v, trainable));
    }
}

Binding::Binding(const ParamStore& store, std::vector<ag::Var> vars) : store_(&store), vars_(std::move(vars)) {
    if (vars_.size() != store.size()) {
        throw std::invalid_argument("binding needs one variable per parameter");
    }
}

const ag::Var& Binding::operator()(const std::string& name) const {
    const auto& names = store_->names();
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) {
        throw std::out_of_range("unknown parameter " + name);
    }
    return vars_[static_cast<std::size_t>(it - names.begin())];
}

std::vector<Tensor> Binding::gradients() const {
    std::vector<Tensor> out;
    for (const auto& v : vars_) {
        out.push_back(v->grad.empty() ? Tensor::zeros_like(v->value) : v->grad);
    }
    return out;
}

}  // namespace evtrack
