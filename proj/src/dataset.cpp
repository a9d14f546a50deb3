#include "ensdiff/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace ensdiff {

MinMaxScaler::MinMaxScaler(Vector lo, Vector hi) : lo_(std::move(lo)), hi_(std::move(hi)) {
  require(lo_.size() == hi_.size(), "MinMaxScaler: bound size mismatch");
  require((hi_.array() >= lo_.array()).all(), "MinMaxScaler: hi < lo");
}

MinMaxScaler MinMaxScaler::fit(const MatrixRef& points) {
  require(points.rows() >= 1, "MinMaxScaler::fit: no rows");
  return {points.colwise().minCoeff().transpose(), points.colwise().maxCoeff().transpose()};
}

Matrix MinMaxScaler::transform(const MatrixRef& points) const {
  require(points.cols() == dim(), "MinMaxScaler::transform: dimension mismatch");
  Matrix out(points.rows(), points.cols());
  for (Eigen::Index j = 0; j < dim(); ++j) {
    const double range = hi_[j] - lo_[j];
    if (range > 0.0)
      out.col(j) = ((points.col(j).array() - lo_[j]) * (2.0 / range) - 1.0).matrix();
    else
      out.col(j).setZero();
  }
  return out;
}

Matrix MinMaxScaler::inverse(const MatrixRef& scaled) const {
  require(scaled.cols() == dim(), "MinMaxScaler::inverse: dimension mismatch");
  Matrix out(scaled.rows(), scaled.cols());
  for (Eigen::Index j = 0; j < dim(); ++j) {
    const double range = hi_[j] - lo_[j];
    out.col(j) = ((scaled.col(j).array() + 1.0) * (0.5 * range) + lo_[j]).matrix();
  }
  return out;
}

void Dataset::validate() const {
  require(points.cols() >= 1, "dataset: need at least one feature");
  require(points.rows() >= 2, "dataset: need at least two rows");
  require(points.allFinite(), "dataset: missing or non-finite values");
  require(feature_names.empty() || static_cast<Eigen::Index>(feature_names.size()) == points.cols(),
          "dataset: header width does not match data");
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    fields.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

Dataset read_csv(std::istream& in) {
  Dataset ds;
  std::string line;
  if (!std::getline(in, line)) throw DomainError("csv: missing header row");
  ds.feature_names = split_fields(line);
  const std::size_t d = ds.feature_names.size();
  require(d >= 1, "csv: empty header");

  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_fields(line);
    if (fields.size() != d)
      throw DomainError("csv: row " + std::to_string(rows + 1) + " has " +
                        std::to_string(fields.size()) + " fields, expected " + std::to_string(d));
    for (const auto& f : fields) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(f, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (f.empty() || used != f.size() || !std::isfinite(v))
        throw DomainError("csv: non-numeric or missing value '" + f + "' in row " +
                          std::to_string(rows + 1));
      values.push_back(v);
    }
    ++rows;
  }
  ds.points = Eigen::Map<Matrix>(values.data(), static_cast<Eigen::Index>(rows),
                                 static_cast<Eigen::Index>(d));
  return ds;
}

Dataset read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return read_csv(in);
}

void write_csv(std::ostream& out, const std::vector<std::string>& header, const MatrixRef& rows) {
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << '\n';
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j) out << (j ? "," : "") << rows(i, j);
    out << '\n';
  }
}

void write_csv_file(const std::string& path, const std::vector<std::string>& header,
                    const MatrixRef& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  write_csv(out, header, rows);
}

std::string bytes_hash(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return bytes_hash(ss.str());
}

namespace {

std::vector<Eigen::Index> shuffled_indices(Eigen::Index n, Stream& stream) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  // Fisher-Yates with the stream's own index draws, so the order depends
  // only on the stream key.
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[stream.index(i)]);
  return idx;
}

Matrix gather(const MatrixRef& points, const std::vector<Eigen::Index>& idx, std::size_t from,
              std::size_t to) {
  Matrix out(static_cast<Eigen::Index>(to - from), points.cols());
  for (std::size_t i = from; i < to; ++i) out.row(static_cast<Eigen::Index>(i - from)) = points.row(idx[i]);
  return out;
}

}  // namespace

Split train_test_split(const MatrixRef& points, double test_fraction, Stream stream) {
  require(test_fraction > 0.0 && test_fraction < 1.0, "train_test_split: fraction outside (0, 1)");
  const Eigen::Index n = points.rows();
  require(n >= 3, "train_test_split: need at least three rows");
  auto n_test = static_cast<Eigen::Index>(std::llround(static_cast<double>(n) * test_fraction));
  n_test = std::clamp<Eigen::Index>(n_test, 1, n - 2);
  const auto idx = shuffled_indices(n, stream);
  const auto cut = static_cast<std::size_t>(n - n_test);
  return {gather(points, idx, 0, cut), gather(points, idx, cut, idx.size())};
}

Matrix subsample_rows(const MatrixRef& points, Eigen::Index m, Stream stream) {
  const auto idx = shuffled_indices(points.rows(), stream);
  const auto take = static_cast<std::size_t>(std::min(m, points.rows()));
  return gather(points, idx, 0, take);
}

}  // namespace ensdiff
