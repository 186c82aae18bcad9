#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ewmlab {

// Row = true class, column = predicted class.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes) : k_(classes), counts_(classes * classes, 0) {}

  void add(int truth, int predicted);
  std::size_t classes() const { return k_; }
  std::size_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * k_ + predicted]; }
  std::size_t& at(std::size_t truth, std::size_t predicted) { return counts_[truth * k_ + predicted]; }
  std::size_t total() const;
  std::size_t support(std::size_t c) const;

  double accuracy() const;
  // Support-weighted mean of per-class F1; a class with no predictions and
  // no support contributes nothing, one with support but no true positives
  // contributes 0.
  double weighted_f1() const;

 private:
  std::size_t k_;
  std::vector<std::size_t> counts_;
};

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted, std::size_t classes);

// Minimal CSV writer: header on construction, one row per call, fixed
// number formatting so equal runs produce identical bytes.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  ~CsvWriter();
  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;

  void row(const std::vector<std::string>& cells);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::size_t columns_;
};

std::string fmt(double v);
std::string fmt(std::size_t v);
std::string fmt(int v);

}  // namespace ewmlab
