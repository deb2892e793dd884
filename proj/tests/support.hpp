#pragma once

#include <memory>
#include <vector>

#include "oracles.hpp"
#include "trpa/policy.hpp"
#include "trpa/table.hpp"

namespace testing_support {

inline oracle::Rows to_rows(const trpa::RaggedTable& t) {
    oracle::Rows out;
    for (std::size_t r = 0; r < t.rows(); ++r) out.emplace_back(t.row(r).begin(), t.row(r).end());
    return out;
}

inline trpa::SpacePtr space_for(const oracle::Rows& rows) {
    std::vector<std::size_t> widths;
    for (const auto& r : rows) widths.push_back(r.size());
    return trpa::Space::anonymous(widths);
}

inline trpa::Policy policy(const trpa::SpacePtr& space, const oracle::Rows& logits) {
    return trpa::Policy(space, trpa::RaggedTable(logits));
}

}  // namespace testing_support
