#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace mugnet {

// Rows are ground truth, columns predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes = 0);

  std::size_t num_classes() const { return c_; }
  void add(int truth, int pred);
  std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts_[truth * c_ + pred]; }
  std::uint64_t total() const;
  std::uint64_t row_sum(std::size_t truth) const;
  std::uint64_t col_sum(std::size_t pred) const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t c_;
  std::vector<std::uint64_t> counts_;
};

// What mIoU does with a class that occurs in neither truth nor prediction.
enum class AbsentClassMode { Exclude, CountAsZero };

std::string absent_class_mode_name(AbsentClassMode mode);
AbsentClassMode parse_absent_class_mode(const std::string& text);

struct EvalResult {
  double oa = 0.0;
  std::vector<double> iou;     // 0 for absent classes
  std::vector<bool> present;   // class occurs in truth or prediction
  double miou = 0.0;
  ConfusionMatrix confusion;
};

// Throws ContractError on length mismatch or empty input, ValidationError on
// labels outside [0, C).
EvalResult evaluate(std::span<const int> pred, std::span<const int> truth, std::size_t num_classes,
                    AbsentClassMode mode = AbsentClassMode::Exclude);

// Class columns then OA and mIoU, values in percent.
std::string format_report(const EvalResult& r, const std::vector<std::string>& class_names);
nlohmann::json report_json(const EvalResult& r, const std::vector<std::string>& class_names);

// Name of class c, falling back to "class<c>".
std::string class_name(const std::vector<std::string>& names, std::size_t c);

}  // namespace mugnet
