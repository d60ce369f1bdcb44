#include "lrnmt/report.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "lrnmt/compression.hpp"

namespace lrnmt {

std::string spectrum_csv(const SpectrumReport& report, int top_k) {
  std::ostringstream os;
  os << "matrix,group,top_values,relevant_rank,relevant_fraction\n";
  for (const auto& e : report.entries) {
    os << e.name << "," << layer_group_name(e.group) << ",";
    int k = std::min<int>(top_k, static_cast<int>(e.spectrum.values.size()));
    for (int i = 0; i < k; ++i) {
      if (i) os << ";";
      os << std::setprecision(8) << e.spectrum.values[static_cast<std::size_t>(i)];
    }
    os << "," << e.relevant_rank << "," << std::setprecision(8) << e.relevant_fraction << "\n";
  }
  return os.str();
}

std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
  std::vector<MetricsRow> rows;
  std::istringstream is(text);
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line.rfind("step,", 0) == 0) continue;  // header
    }
    MetricsRow r;
    std::istringstream ls(line);
    char comma;
    ls >> r.step >> comma >> r.wall_time >> comma >> r.train_loss >> comma >> r.val_ppl >> comma >>
        r.lr;
    if (!ls) throw IoError("malformed metrics row: " + line);
    rows.push_back(r);
  }
  return rows;
}

std::string emit_metrics_csv(const std::vector<MetricsRow>& rows) {
  std::ostringstream os;
  os << "step,wall_time_s,train_loss,val_ppl,lr\n";
  for (const auto& r : rows)
    os << r.step << "," << r.wall_time << "," << r.train_loss << "," << r.val_ppl << "," << r.lr
       << "\n";
  return os.str();
}

namespace {

std::string fmt_bleu(double bleu) {
  if (std::isnan(bleu)) return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << bleu;
  return os.str();
}

std::string fmt_pct(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << v << "%";
  return os.str();
}

std::string fmt_ppl(double v) {
  if (std::isnan(v)) return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << v;
  return os.str();
}

}  // namespace

std::string render_table_text(const std::vector<RunSummary>& runs) {
  std::vector<std::array<std::string, 5>> cells;
  cells.push_back({"run", "compression method", "size reduction", "BLEU", "val ppl"});
  for (const auto& r : runs) {
    if (!r.ok) {
      cells.push_back({r.name, "(" + r.warning + ")", "-", "-", "-"});
      continue;
    }
    cells.push_back({r.name, r.method, fmt_pct(r.size_reduction), fmt_bleu(r.bleu),
                     fmt_ppl(r.val_ppl)});
  }
  std::array<std::size_t, 5> width{};
  for (const auto& row : cells)
    for (std::size_t c = 0; c < 5; ++c) width[c] = std::max(width[c], row[c].size());
  std::ostringstream os;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t c = 0; c < 5; ++c)
      os << std::left << std::setw(static_cast<int>(width[c]) + 2) << cells[i][c];
    os << "\n";
    if (i == 0) {
      for (std::size_t c = 0; c < 5; ++c) os << std::string(width[c], '-') << "  ";
      os << "\n";
    }
  }
  return os.str();
}

std::string render_table_csv(const std::vector<RunSummary>& runs) {
  std::ostringstream os;
  os << "run,method,size_reduction,bleu,val_ppl\n";
  os << std::setprecision(10);
  for (const auto& r : runs) {
    if (!r.ok) continue;
    os << r.name << "," << r.method << "," << r.size_reduction << ","
       << (std::isnan(r.bleu) ? "" : std::to_string(r.bleu)) << ","
       << (std::isnan(r.val_ppl) ? "" : std::to_string(r.val_ppl)) << "\n";
  }
  return os.str();
}

std::vector<RunSummary> parse_table_csv(const std::string& text) {
  std::vector<RunSummary> out;
  std::istringstream is(text);
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (first && line.rfind("run,", 0) == 0) {
      first = false;
      continue;
    }
    first = false;
    std::vector<std::string> fields;
    std::size_t pos = 0;
    while (true) {
      std::size_t comma = line.find(',', pos);
      if (comma == std::string::npos) {
        fields.push_back(line.substr(pos));
        break;
      }
      fields.push_back(line.substr(pos, comma - pos));
      pos = comma + 1;
    }
    if (fields.size() != 5) throw IoError("malformed report row: " + line);
    RunSummary r;
    r.name = fields[0];
    r.method = fields[1];
    r.size_reduction = std::stod(fields[2]);
    r.bleu = fields[3].empty() ? std::nan("") : std::stod(fields[3]);
    r.val_ppl = fields[4].empty() ? std::nan("") : std::stod(fields[4]);
    out.push_back(std::move(r));
  }
  return out;
}

std::string render_curves_svg(const std::vector<RunSummary>& runs) {
  const int w = 720, h = 440, ml = 70, mr = 160, mt = 30, mb = 50;
  const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  double xmin = 0.0, xmax = 1e-9, ymin = 1e300, ymax = -1e300;
  bool any = false;
  for (const auto& r : runs)
    for (const auto& m : r.curve) {
      if (m.val_ppl <= 0.0) continue;
      any = true;
      xmax = std::max(xmax, m.wall_time);
      ymin = std::min(ymin, m.val_ppl);
      ymax = std::max(ymax, m.val_ppl);
    }
  if (!any) {
    ymin = 0.0;
    ymax = 1.0;
  }
  if (ymax <= ymin) ymax = ymin + 1.0;

  auto sx = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
  auto sy = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
  os << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\""
     << h - mb << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb
     << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 12
     << "\" text-anchor=\"middle\" font-size=\"13\">wall time (s)</text>\n";
  os << "<text x=\"18\" y=\"" << (mt + h - mb) / 2
     << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
     << (mt + h - mb) / 2 << ")\">validation perplexity</text>\n";
  for (int i = 0; i <= 4; ++i) {
    double xv = xmin + (xmax - xmin) * i / 4.0;
    double yv = ymin + (ymax - ymin) * i / 4.0;
    os << "<text x=\"" << sx(xv) << "\" y=\"" << h - mb + 18
       << "\" text-anchor=\"middle\" font-size=\"11\">" << std::fixed << std::setprecision(1)
       << xv << "</text>\n";
    os << "<text x=\"" << ml - 8 << "\" y=\"" << sy(yv) + 4
       << "\" text-anchor=\"end\" font-size=\"11\">" << std::setprecision(2) << yv << "</text>\n";
  }

  int ci = 0;
  for (const auto& r : runs) {
    if (r.curve.empty()) continue;
    const char* color = palette[ci % 6];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& m : r.curve)
      if (m.val_ppl > 0.0) os << sx(m.wall_time) << "," << sy(m.val_ppl) << " ";
    os << "\"/>\n";
    int ly = mt + 18 * ci;
    os << "<line x1=\"" << w - mr + 10 << "\" y1=\"" << ly << "\" x2=\"" << w - mr + 34
       << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << w - mr + 40 << "\" y=\"" << ly + 4 << "\" font-size=\"12\">" << r.name
       << "</text>\n";
    ++ci;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace lrnmt
