#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace cts::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using MatMap = Eigen::Map<Matrix>;
using ConstMatMap = Eigen::Map<const Matrix>;

/// Named, column-major tensors packed into one flat buffer. Parameters,
/// gradients and optimizer moments all share a layout.
class ParamLayout {
public:
    struct Slice {
        std::string name;
        std::size_t offset = 0;
        Eigen::Index rows = 0;
        Eigen::Index cols = 0;
        std::size_t size() const { return static_cast<std::size_t>(rows * cols); }
    };

    std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols = 1);

    std::size_t size() const { return total_; }
    const std::vector<Slice>& slices() const { return slices_; }
    const Slice& slice(std::size_t id) const { return slices_.at(id); }
    /// Name of the slice holding flat index i.
    const std::string& owner(std::size_t i) const;

    MatMap map(std::span<double> buf, std::size_t id) const {
        const Slice& s = slices_[id];
        return MatMap(buf.data() + s.offset, s.rows, s.cols);
    }
    ConstMatMap map(std::span<const double> buf, std::size_t id) const {
        const Slice& s = slices_[id];
        return ConstMatMap(buf.data() + s.offset, s.rows, s.cols);
    }

private:
    std::vector<Slice> slices_;
    std::size_t total_ = 0;
};

}  // namespace cts::nn
