#include "cbed/run_io.hpp"

#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "cbed/serialization.hpp"

namespace cbed {

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string format_metrics_row(const MetricsRow& row) {
  return std::to_string(row.batch_index) + ',' + num(row.e_shd) + ',' + num(row.f1) + ',' + num(row.i_mmd) + ',' +
         num(row.ess) + ',' + std::to_string(row.seed);
}

std::string format_trace_row(std::size_t batch, const TraceRow& row) {
  Json j;
  j["batch"] = batch;
  j["step"] = row.step;
  j["eig_value"] = std::isfinite(row.eig_value) ? Json(row.eig_value) : Json(nullptr);
  j["temperature"] = row.temperature;
  j["ess"] = row.ess ? Json(*row.ess) : Json(nullptr);
  j["grad_norm"] = row.grad_norm;
  if (row.aborted) j["aborted"] = true;
  return j.dump();
}

DirectorySink::DirectorySink(std::filesystem::path dir, const RunConfig& config) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
  write_json_file(dir_ / "config.json", to_json(config));
  for (const char* name : {"trace.jsonl", "designs.jsonl"}) write_text_file(dir_ / name, "");
  write_text_file(dir_ / "metrics.csv", std::string(kMetricsHeader) + "\n");
}

void DirectorySink::append(const char* name, const std::string& chunk) {
  std::ofstream out(dir_ / name, std::ios::binary | std::ios::app);
  if (!out) throw std::runtime_error("cannot append to " + (dir_ / name).string());
  out.write(chunk.data(), static_cast<std::streamsize>(chunk.size()));
  out.flush();
  if (!out) throw std::runtime_error("write failed for " + (dir_ / name).string());
}

void DirectorySink::on_trace(std::size_t batch, const std::vector<TraceRow>& rows) {
  std::string chunk;
  for (const auto& row : rows) chunk += format_trace_row(batch, row) + "\n";
  append("trace.jsonl", chunk);
}

void DirectorySink::on_designs(std::size_t batch, const DesignBatch& designs) {
  Json j;
  j["batch"] = batch;
  j["designs"] = to_json(designs);
  append("designs.jsonl", j.dump() + "\n");
}

void DirectorySink::on_metrics(const MetricsRow& row) { append("metrics.csv", format_metrics_row(row) + "\n"); }

void DirectorySink::on_particles(const ParticleSet& particles) {
  write_json_file(dir_ / "particles_final.json", to_json(particles));
}

std::vector<AggregateRow> aggregate(const std::vector<std::vector<MetricsRow>>& runs) {
  std::map<std::size_t, std::vector<const MetricsRow*>> by_batch;
  for (const auto& run : runs) {
    for (const auto& row : run) {
      if (!row.failed) by_batch[row.batch_index].push_back(&row);
    }
  }
  auto stats = [](const std::vector<double>& v, double& mean, double& ci) {
    const auto n = static_cast<double>(v.size());
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    ci = v.size() > 1 ? 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n) : 0.0;
  };
  std::vector<AggregateRow> out;
  for (const auto& [batch, rows] : by_batch) {
    AggregateRow a;
    a.batch_index = batch;
    a.count = rows.size();
    std::vector<double> shd, f1, mmd;
    for (const MetricsRow* r : rows) {
      shd.push_back(r->e_shd);
      f1.push_back(r->f1);
      mmd.push_back(r->i_mmd);
    }
    stats(shd, a.e_shd_mean, a.e_shd_ci);
    stats(f1, a.f1_mean, a.f1_ci);
    stats(mmd, a.i_mmd_mean, a.i_mmd_ci);
    out.push_back(a);
  }
  return out;
}

void write_aggregate_csv(const std::filesystem::path& path, const std::vector<AggregateRow>& rows) {
  std::string text = "batch_index,n_seeds,e_shd_mean,e_shd_ci95,f1_mean,f1_ci95,i_mmd_mean,i_mmd_ci95\n";
  for (const auto& r : rows) {
    text += std::to_string(r.batch_index) + ',' + std::to_string(r.count) + ',' + num(r.e_shd_mean) + ',' +
            num(r.e_shd_ci) + ',' + num(r.f1_mean) + ',' + num(r.f1_ci) + ',' + num(r.i_mmd_mean) + ',' +
            num(r.i_mmd_ci) + '\n';
  }
  write_text_file(path, text);
}

}  // namespace cbed
