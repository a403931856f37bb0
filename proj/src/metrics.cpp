#include "mugnet/metrics.hpp"

#include <cstdio>
#include <numeric>
#include <sstream>

#include "mugnet/errors.hpp"

namespace mugnet {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes) : c_(num_classes), counts_(num_classes * num_classes, 0) {}

void ConfusionMatrix::add(int truth, int pred) {
  if (truth < 0 || pred < 0 || static_cast<std::size_t>(truth) >= c_ || static_cast<std::size_t>(pred) >= c_) {
    throw ValidationError("label pair (" + std::to_string(truth) + ", " + std::to_string(pred) + ") outside [0, " +
                          std::to_string(c_) + ")");
  }
  ++counts_[static_cast<std::size_t>(truth) * c_ + static_cast<std::size_t>(pred)];
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < c_; ++p) s += at(truth, p);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t pred) const {
  std::uint64_t s = 0;
  for (std::size_t t = 0; t < c_; ++t) s += at(t, pred);
  return s;
}

std::string absent_class_mode_name(AbsentClassMode mode) {
  return mode == AbsentClassMode::Exclude ? "exclude" : "zero";
}

AbsentClassMode parse_absent_class_mode(const std::string& text) {
  if (text == "exclude") return AbsentClassMode::Exclude;
  if (text == "zero") return AbsentClassMode::CountAsZero;
  throw ConfigError("unknown absent-class mode '" + text + "'");
}

EvalResult evaluate(std::span<const int> pred, std::span<const int> truth, std::size_t num_classes,
                    AbsentClassMode mode) {
  if (pred.size() != truth.size()) {
    throw ContractError("evaluate: " + std::to_string(pred.size()) + " predictions for " +
                        std::to_string(truth.size()) + " labels");
  }
  if (pred.empty()) throw ContractError("evaluate: no points");
  if (num_classes == 0) throw ContractError("evaluate: zero classes");

  EvalResult r;
  r.confusion = ConfusionMatrix(num_classes);
  for (std::size_t i = 0; i < pred.size(); ++i) r.confusion.add(truth[i], pred[i]);

  std::uint64_t diag = 0;
  for (std::size_t c = 0; c < num_classes; ++c) diag += r.confusion.at(c, c);
  r.oa = static_cast<double>(diag) / static_cast<double>(pred.size());

  r.iou.assign(num_classes, 0.0);
  r.present.assign(num_classes, false);
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const std::uint64_t tp = r.confusion.at(c, c);
    const std::uint64_t uni = r.confusion.row_sum(c) + r.confusion.col_sum(c) - tp;
    r.present[c] = uni > 0;
    if (uni > 0) r.iou[c] = static_cast<double>(tp) / static_cast<double>(uni);
    if (uni > 0 || mode == AbsentClassMode::CountAsZero) {
      sum += r.iou[c];
      ++counted;
    }
  }
  r.miou = counted > 0 ? sum / static_cast<double>(counted) : 0.0;
  return r;
}

std::string class_name(const std::vector<std::string>& names, std::size_t c) {
  return c < names.size() && !names[c].empty() ? names[c] : "class" + std::to_string(c);
}

std::string format_report(const EvalResult& r, const std::vector<std::string>& class_names) {
  std::ostringstream out;
  char buf[32];
  auto cell = [&](const std::string& s) {
    std::snprintf(buf, sizeof(buf), "%10s", s.c_str());
    out << buf;
  };
  auto pct = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%10.1f", 100.0 * v);
    out << buf;
  };
  cell("OA");
  cell("mIoU");
  for (std::size_t c = 0; c < r.iou.size(); ++c) cell(class_name(class_names, c));
  out << '\n';
  pct(r.oa);
  pct(r.miou);
  for (std::size_t c = 0; c < r.iou.size(); ++c) {
    if (r.present[c]) {
      pct(r.iou[c]);
    } else {
      cell("-");
    }
  }
  out << '\n';
  return out.str();
}

nlohmann::json report_json(const EvalResult& r, const std::vector<std::string>& class_names) {
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t c = 0; c < r.iou.size(); ++c) {
    nlohmann::json rec{{"name", class_name(class_names, c)}, {"present", static_cast<bool>(r.present[c])}};
    rec["iou"] = r.present[c] ? nlohmann::json(r.iou[c]) : nlohmann::json(nullptr);
    classes.push_back(rec);
  }
  nlohmann::json confusion = nlohmann::json::array();
  for (std::size_t t = 0; t < r.confusion.num_classes(); ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t p = 0; p < r.confusion.num_classes(); ++p) row.push_back(r.confusion.at(t, p));
    confusion.push_back(row);
  }
  return {{"oa", r.oa}, {"miou", r.miou}, {"classes", classes}, {"confusion", confusion}};
}

}  // namespace mugnet
