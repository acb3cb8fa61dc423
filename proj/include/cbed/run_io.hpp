#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cbed/acquisition.hpp"

namespace cbed {

inline constexpr const char* kMetricsHeader = "batch_index,e_shd,f1,i_mmd,ess,seed";

std::string format_metrics_row(const MetricsRow& row);
std::string format_trace_row(std::size_t batch, const TraceRow& row);

/// Writes the run directory: config.json, trace.jsonl, designs.jsonl,
/// metrics.csv and particles_final.json. Line files are appended and flushed
/// one batch at a time.
class DirectorySink : public RunSink {
 public:
  DirectorySink(std::filesystem::path dir, const RunConfig& config);

  void on_trace(std::size_t batch, const std::vector<TraceRow>& rows) override;
  void on_designs(std::size_t batch, const DesignBatch& designs) override;
  void on_metrics(const MetricsRow& row) override;
  void on_particles(const ParticleSet& particles) override;

  const std::filesystem::path& dir() const { return dir_; }

 private:
  void append(const char* name, const std::string& chunk);

  std::filesystem::path dir_;
};

struct AggregateRow {
  std::size_t batch_index = 0;
  std::size_t count = 0;
  double e_shd_mean = 0.0, e_shd_ci = 0.0;
  double f1_mean = 0.0, f1_ci = 0.0;
  double i_mmd_mean = 0.0, i_mmd_ci = 0.0;
};

/// Per batch index: mean and 1.96 standard errors over runs (failed rows skipped).
std::vector<AggregateRow> aggregate(const std::vector<std::vector<MetricsRow>>& runs);
void write_aggregate_csv(const std::filesystem::path& path, const std::vector<AggregateRow>& rows);

}  // namespace cbed
