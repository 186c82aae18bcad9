#include "ewmlab/metrics.hpp"

#include <cstdio>
#include <fstream>

#include "ewmlab/errors.hpp"

namespace ewmlab {

void ConfusionMatrix::add(int truth, int predicted) {
  if (truth < 0 || predicted < 0 || static_cast<std::size_t>(truth) >= k_ ||
      static_cast<std::size_t>(predicted) >= k_) {
    throw ContractError("confusion: class index out of range");
  }
  ++at(static_cast<std::size_t>(truth), static_cast<std::size_t>(predicted));
}

std::size_t ConfusionMatrix::total() const {
  std::size_t n = 0;
  for (auto c : counts_) n += c;
  return n;
}

std::size_t ConfusionMatrix::support(std::size_t c) const {
  std::size_t n = 0;
  for (std::size_t j = 0; j < k_; ++j) n += at(c, j);
  return n;
}

double ConfusionMatrix::accuracy() const {
  const auto n = total();
  if (n == 0) throw ContractError("accuracy: empty confusion matrix");
  std::size_t hit = 0;
  for (std::size_t c = 0; c < k_; ++c) hit += at(c, c);
  return static_cast<double>(hit) / static_cast<double>(n);
}

double ConfusionMatrix::weighted_f1() const {
  const auto n = total();
  if (n == 0) throw ContractError("weighted_f1: empty confusion matrix");
  double acc = 0.0;
  for (std::size_t c = 0; c < k_; ++c) {
    const auto sup = support(c);
    if (sup == 0) continue;
    std::size_t predicted = 0;
    for (std::size_t t = 0; t < k_; ++t) predicted += at(t, c);
    const auto tp = at(c, c);
    const double f1 = tp == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(sup + predicted);
    acc += f1 * static_cast<double>(sup);
  }
  return acc / static_cast<double>(n);
}

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted, std::size_t classes) {
  if (truth.size() != predicted.size()) throw DimensionError("confusion: length mismatch");
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
  return cm;
}

struct CsvWriter::Impl {
  std::ofstream out;
  std::filesystem::path path;
};

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : impl_(std::make_unique<Impl>()), columns_(header.size()) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  impl_->path = path;
  impl_->out.open(path, std::ios::binary | std::ios::trunc);
  if (!impl_->out) throw IoError("cannot write " + path.string());
  row(header);
}

CsvWriter::~CsvWriter() = default;

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_) throw ContractError("csv: row width does not match header in " + impl_->path.string());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) impl_->out << ',';
    impl_->out << cells[i];
  }
  impl_->out << '\n';
  if (!impl_->out) throw IoError("write failed: " + impl_->path.string());
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string fmt(std::size_t v) { return std::to_string(v); }
std::string fmt(int v) { return std::to_string(v); }

}  // namespace ewmlab
