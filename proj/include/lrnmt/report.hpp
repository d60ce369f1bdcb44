#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lrnmt/trainer.hpp"

namespace lrnmt {

// One run's row in the comparison table, plus its metrics curve.
struct RunSummary {
  std::string name;
  std::string method;            // compression method description
  double size_reduction = 0.0;   // percent
  double bleu = std::nan("");    // NaN when not evaluated
  double val_ppl = std::nan("");
  std::vector<MetricsRow> curve;
  bool ok = true;
  std::string warning;
};

std::vector<MetricsRow> parse_metrics_csv(const std::string& text);
std::string emit_metrics_csv(const std::vector<MetricsRow>& rows);

// Comparison table in the layout of the paper-style results tables:
// method | size reduction | BLEU | validation perplexity.
std::string render_table_text(const std::vector<RunSummary>& runs);
std::string render_table_csv(const std::vector<RunSummary>& runs);
std::vector<RunSummary> parse_table_csv(const std::string& text);

// Wall-time (s) vs validation perplexity, one polyline per run, with legend.
std::string render_curves_svg(const std::vector<RunSummary>& runs);

}  // namespace lrnmt
