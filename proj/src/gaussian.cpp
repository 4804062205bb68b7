#include <radiant/gaussian.hpp>

#include <vector>

namespace radiant {

GaussianMoments<double> estimate_moments(const HeadSliceView& slice,
                                         const std::function<bool(std::int64_t)>& selector,
                                         std::optional<double> ridge)
{
    std::vector<Eigen::Index> rows;
    for (std::int64_t i = 0; i < slice.size(); ++i) {
        if (selector(i)) {
            rows.push_back(i);
        }
    }
    if (rows.empty()) {
        throw Error(ErrorCode::EmptySelection, "selector matched no sample at (" +
                                                   std::to_string(slice.layer) + ", " +
                                                   std::to_string(slice.head) + ")");
    }
    Matrix selected(static_cast<Eigen::Index>(rows.size()), slice.dim());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        selected.row(static_cast<Eigen::Index>(r)) = slice.vectors.row(rows[r]).cast<double>();
    }
    return sample_moments(selected, ridge);
}

} // namespace radiant
