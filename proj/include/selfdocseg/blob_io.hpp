#pragma once

#include <Eigen/Dense>
#include <string>

namespace selfdocseg::detail {

// Raw little-endian float32 blob, row-major.
void write_tensor_blob(const Eigen::MatrixXd& m, const std::string& path);
Eigen::MatrixXd read_tensor_blob(const std::string& path, Eigen::Index rows,
                                 Eigen::Index cols);

}  // namespace selfdocseg::detail
