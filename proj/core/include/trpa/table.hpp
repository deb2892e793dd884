#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace trpa {

/// Row-ragged table of reals: one row per prompt, one column per response of
/// that prompt. Backs logits, rewards and gradients.
class RaggedTable {
public:
    RaggedTable() = default;
    /// Zero-filled table with the given row widths.
    explicit RaggedTable(std::span<const std::size_t> widths);
    explicit RaggedTable(const std::vector<std::vector<double>>& rows);

    std::size_t rows() const noexcept { return offsets_.empty() ? 0 : offsets_.size() - 1; }
    std::size_t width(std::size_t row) const { return offsets_.at(row + 1) - offsets_.at(row); }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<double> row(std::size_t r);
    std::span<const double> row(std::size_t r) const;
    double& at(std::size_t r, std::size_t c);
    double at(std::size_t r, std::size_t c) const;

    std::span<double> flat() noexcept { return data_; }
    std::span<const double> flat() const noexcept { return data_; }

    bool same_shape(const RaggedTable& other) const noexcept { return offsets_ == other.offsets_; }
    std::vector<std::size_t> widths() const;
    RaggedTable zeros_like() const;

    /// this += alpha * other; shapes must match.
    RaggedTable& axpy(double alpha, const RaggedTable& other);
    double max_abs() const noexcept;

    friend bool operator==(const RaggedTable&, const RaggedTable&) = default;

private:
    std::vector<std::size_t> offsets_;
    std::vector<double> data_;
};

}  // namespace trpa
