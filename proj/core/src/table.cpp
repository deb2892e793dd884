#include "trpa/table.hpp"

#include <cmath>
#include <string>

#include "trpa/errors.hpp"

namespace trpa {

RaggedTable::RaggedTable(std::span<const std::size_t> widths) {
    offsets_.reserve(widths.size() + 1);
    offsets_.push_back(0);
    for (std::size_t w : widths) offsets_.push_back(offsets_.back() + w);
    data_.assign(offsets_.back(), 0.0);
}

RaggedTable::RaggedTable(const std::vector<std::vector<double>>& rows) {
    offsets_.push_back(0);
    for (const auto& r : rows) {
        offsets_.push_back(offsets_.back() + r.size());
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

std::span<double> RaggedTable::row(std::size_t r) {
    if (r >= rows()) throw LookupError("row " + std::to_string(r) + " out of range");
    return std::span<double>(data_).subspan(offsets_[r], offsets_[r + 1] - offsets_[r]);
}

std::span<const double> RaggedTable::row(std::size_t r) const {
    if (r >= rows()) throw LookupError("row " + std::to_string(r) + " out of range");
    return std::span<const double>(data_).subspan(offsets_[r], offsets_[r + 1] - offsets_[r]);
}

double& RaggedTable::at(std::size_t r, std::size_t c) {
    auto rw = row(r);
    if (c >= rw.size()) throw LookupError("column " + std::to_string(c) + " out of range");
    return rw[c];
}

double RaggedTable::at(std::size_t r, std::size_t c) const {
    auto rw = row(r);
    if (c >= rw.size()) throw LookupError("column " + std::to_string(c) + " out of range");
    return rw[c];
}

std::vector<std::size_t> RaggedTable::widths() const {
    std::vector<std::size_t> w;
    w.reserve(rows());
    for (std::size_t r = 0; r < rows(); ++r) w.push_back(offsets_[r + 1] - offsets_[r]);
    return w;
}

RaggedTable RaggedTable::zeros_like() const {
    RaggedTable t;
    t.offsets_ = offsets_;
    t.data_.assign(data_.size(), 0.0);
    return t;
}

RaggedTable& RaggedTable::axpy(double alpha, const RaggedTable& other) {
    if (!same_shape(other)) throw ShapeError("axpy on tables of different shape");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += alpha * other.data_[i];
    return *this;
}

double RaggedTable::max_abs() const noexcept {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace trpa
