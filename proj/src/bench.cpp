#include "mugnet/bench.hpp"

#include <sys/resource.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>

#include "mugnet/errors.hpp"
#include "mugnet/kv_config.hpp"

namespace mugnet {

SceneInput union_scenes(const std::vector<const SceneInput*>& scenes) {
  if (scenes.empty()) throw ParameterError("union_scenes: no scenes");
  if (scenes.size() == 1) return *scenes.front();

  SceneInput u;
  const std::size_t width = scenes.front()->cluster_points.cols();
  std::vector<double> points, edges;
  bool has_edges = false;
  for (const auto* s : scenes) {
    if (s->cluster_points.cols() != width) throw ContractError("union_scenes: point widths differ");
    const auto p = s->cluster_points.data();
    points.insert(points.end(), p.begin(), p.end());
    const std::size_t offset = u.topology.num_nodes;
    for (std::size_t e = 0; e < s->topology.num_edges(); ++e) {
      u.topology.src.push_back(s->topology.src[e] + offset);
      u.topology.dst.push_back(s->topology.dst[e] + offset);
    }
    if (s->topology.edge_features.defined()) {
      const auto f = s->topology.edge_features.data();
      edges.insert(edges.end(), f.begin(), f.end());
      has_edges = true;
    }
    u.topology.num_nodes += s->topology.num_nodes;
    u.cluster_labels.insert(u.cluster_labels.end(), s->cluster_labels.begin(), s->cluster_labels.end());
    u.cluster_sizes.insert(u.cluster_sizes.end(), s->cluster_sizes.begin(), s->cluster_sizes.end());
    u.num_points += s->num_points;
  }
  const std::size_t rows = points.size() / width;
  u.cluster_points = Tensor::matrix(rows, width, std::move(points));
  if (has_edges) {
    u.topology.edge_features = Tensor::matrix(u.topology.num_edges(), kEdgeFeatureWidth, std::move(edges));
  }
  return u;
}

namespace {

std::vector<Tensor> split_rows(const Tensor& logits, const std::vector<const SceneInput*>& scenes) {
  std::vector<Tensor> out;
  const std::size_t c = logits.cols();
  const auto z = logits.data();
  std::size_t row = 0;
  for (const auto* s : scenes) {
    const std::size_t k = s->num_clusters();
    out.push_back(Tensor::matrix(k, c, std::vector<double>(z.begin() + row * c, z.begin() + (row + k) * c)));
    row += k;
  }
  return out;
}

}  // namespace

std::vector<Tensor> infer_sequential(MuGNet& model, const std::vector<const SceneInput*>& scenes) {
  NoGradGuard guard;
  std::vector<Tensor> out;
  for (const auto* s : scenes) out.push_back(model.forward(*s, BatchNormMode::Eval));
  return out;
}

std::vector<Tensor> infer_batched(MuGNet& model, const std::vector<const SceneInput*>& scenes, std::size_t workers) {
  if (scenes.empty()) throw ParameterError("infer_batched: no scenes");
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, scenes.size());

  std::vector<std::vector<const SceneInput*>> groups(workers);
  for (std::size_t i = 0; i < scenes.size(); ++i) groups[i * workers / scenes.size()].push_back(scenes[i]);

  std::vector<std::vector<Tensor>> results(workers);
  auto run = [&](std::size_t g) {
    NoGradGuard guard;
    const SceneInput u = union_scenes(groups[g]);
    results[g] = split_rows(model.forward(u, BatchNormMode::Eval), groups[g]);
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t g = 0; g < workers; ++g) threads.emplace_back(run, g);
    for (auto& t : threads) t.join();
  }
  std::vector<Tensor> out;
  for (auto& r : results) out.insert(out.end(), r.begin(), r.end());
  return out;
}

std::uint64_t peak_rss_bytes() {
  std::ifstream status("/proc/self/status");
  std::string line;
  while (std::getline(status, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      std::istringstream in(line.substr(6));
      std::uint64_t kb = 0;
      if (in >> kb) return kb * 1024;
    }
  }
  rusage usage{};
  getrusage(RUSAGE_SELF, &usage);
  return static_cast<std::uint64_t>(usage.ru_maxrss) * 1024;
}

bool reset_peak_rss() {
  std::ofstream clear("/proc/self/clear_refs");
  if (!clear) return false;
  clear << "5";
  clear.flush();
  return static_cast<bool>(clear);
}

BenchReport bench_batched(MuGNet& model, const std::vector<SceneInput>& scenes,
                          const std::vector<std::size_t>& batch_sizes, const BenchOptions& opts) {
  if (batch_sizes.empty()) throw ParameterError("bench: no batch sizes");
  if (opts.repetitions < 1) throw ParameterError("bench: repetitions must be positive");
  for (std::size_t i = 0; i < batch_sizes.size(); ++i) {
    if (batch_sizes[i] == 0) throw ParameterError("bench: batch size 0");
    if (batch_sizes[i] > scenes.size()) {
      throw ParameterError("bench: batch size " + std::to_string(batch_sizes[i]) + " exceeds the " +
                           std::to_string(scenes.size()) + " available scenes");
    }
    if (i > 0 && batch_sizes[i] <= batch_sizes[i - 1]) {
      throw ParameterError("bench: batch sizes must be strictly increasing");
    }
  }

  BenchReport report;
  for (auto b : batch_sizes) {
    std::vector<const SceneInput*> batch;
    BenchRow row;
    row.batch_size = b;
    row.scenes = b;
    for (std::size_t i = 0; i < b; ++i) {
      batch.push_back(&scenes[i]);
      row.points += scenes[i].num_points;
    }
    reset_peak_rss();
    infer_batched(model, batch, opts.workers);  // warm-up
    std::vector<double> times;
    for (std::size_t r = 0; r < opts.repetitions; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      infer_batched(model, batch, opts.workers);
      times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    row.mean_s = std::accumulate(times.begin(), times.end(), 0.0) / static_cast<double>(times.size());
    std::sort(times.begin(), times.end());
    const std::size_t n = times.size();
    row.median_s = n % 2 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
    row.peak_mem_bytes = peak_rss_bytes();
    report.rows.push_back(row);
  }
  return report;
}

double BenchReport::time_ratio_vs_linear() const {
  if (rows.empty() || rows.front().mean_s <= 0.0) return 0.0;
  const auto& first = rows.front();
  const auto& last = rows.back();
  const double linear = first.mean_s * static_cast<double>(last.batch_size) / static_cast<double>(first.batch_size);
  return last.mean_s / linear;
}

bool BenchReport::memory_monotone() const {
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].peak_mem_bytes < rows[i - 1].peak_mem_bytes) return false;
  }
  return true;
}

void write_bench_csv(std::ostream& out, const BenchReport& report) {
  out << "batch_size,scenes,points,mean_s,median_s,peak_mem_bytes\n";
  for (const auto& r : report.rows) {
    out << r.batch_size << ',' << r.scenes << ',' << r.points << ',' << format_double(r.mean_s) << ','
        << format_double(r.median_s) << ',' << r.peak_mem_bytes << '\n';
  }
}

BenchReport read_bench_csv(std::istream& in) {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line) || trim(line) != "batch_size,scenes,points,mean_s,median_s,peak_mem_bytes") {
    throw ParseError("unexpected bench CSV header", lineno);
  }
  BenchReport report;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split_list(line);
    if (f.size() != 6) throw ParseError("expected 6 fields", lineno);
    try {
      BenchRow r;
      r.batch_size = std::stoull(f[0]);
      r.scenes = std::stoull(f[1]);
      r.points = std::stoull(f[2]);
      r.mean_s = std::stod(f[3]);
      r.median_s = std::stod(f[4]);
      r.peak_mem_bytes = std::stoull(f[5]);
      report.rows.push_back(r);
    } catch (const std::logic_error&) {
      throw ParseError("malformed number", lineno);
    }
  }
  return report;
}

void write_bench_summary(std::ostream& out, const BenchReport& report) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%10s %8s %10s %12s %12s %14s\n", "batch", "scenes", "points", "mean_s", "median_s",
                "peak_mem_MB");
  out << buf;
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof(buf), "%10zu %8zu %10zu %12.4f %12.4f %14.1f\n", r.batch_size, r.scenes, r.points,
                  r.mean_s, r.median_s, static_cast<double>(r.peak_mem_bytes) / (1024.0 * 1024.0));
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "time vs linear scaling: %.3f, memory nondecreasing: %s\n",
                report.time_ratio_vs_linear(), report.memory_monotone() ? "yes" : "no");
  out << buf;
}

}  // namespace mugnet
