#include "selfdocseg/blob_io.hpp"

#include <fstream>
#include <vector>

#include "selfdocseg/types.hpp"

namespace selfdocseg::detail {

void write_tensor_blob(const Eigen::MatrixXd& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IO_ERROR, "cannot write tensor: " + path);
  std::vector<float> row(static_cast<size_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      row[static_cast<size_t>(c)] = static_cast<float>(m(r, c));
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
}

Eigen::MatrixXd read_tensor_blob(const std::string& path, Eigen::Index rows,
                                 Eigen::Index cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IO_ERROR, "cannot read tensor: " + path);
  Eigen::MatrixXd m(rows, cols);
  std::vector<float> row(static_cast<size_t>(cols));
  for (Eigen::Index r = 0; r < rows; ++r) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!in) throw Error(ErrorCode::IO_ERROR, "truncated tensor: " + path);
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<size_t>(c)];
  }
  return m;
}

}  // namespace selfdocseg::detail
