#pragma once

// Standalone SVG renderers: ROC curves, emotion timeline strips, attention
// traces and label count heatmaps. Output bytes depend only on the inputs.

#include "speechfuse/common.hpp"
#include "speechfuse/corpus.hpp"

namespace speechfuse::plot {

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string num(double v) { return fmt_fixed(v, 2); }

inline std::string svg_open(double w, double h) {
  return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) +
         "\" height=\"" + num(h) + "\" viewBox=\"0 0 " + num(w) + " " + num(h) + "\">\n";
}

inline std::string text(double x, double y, std::string_view s, int size = 12, std::string_view anchor = "start") {
  return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-family=\"sans-serif\" font-size=\"" +
         std::to_string(size) + "\" text-anchor=\"" + std::string(anchor) + "\">" + xml_escape(s) + "</text>\n";
}

inline constexpr std::array<const char*, 8> kPalette{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                                     "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

// ---------------------------------------------------------------------------

struct RocSeries {
  std::string label;
  std::vector<double> fpr, tpr;
  double auc = 0.0;
};

inline std::string roc_svg(const std::string& title, const std::vector<RocSeries>& series) {
  const double size = 320, left = 50, top = 30, w = left + size + 170, h = top + size + 50;
  std::string s = svg_open(w, h);
  s += "<rect x=\"0\" y=\"0\" width=\"" + num(w) + "\" height=\"" + num(h) + "\" fill=\"white\"/>\n";
  s += text(left + size / 2, 20, title, 14, "middle");
  s += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(size) + "\" height=\"" + num(size) +
       "\" fill=\"none\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + num(left) + "\" y1=\"" + num(top + size) + "\" x2=\"" + num(left + size) + "\" y2=\"" +
       num(top) + "\" stroke=\"#bbbbbb\" stroke-dasharray=\"4 4\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = t / 4.0;
    s += text(left + v * size, top + size + 16, fmt_fixed(v, 2), 10, "middle");
    s += text(left - 6, top + size - v * size + 4, fmt_fixed(v, 2), 10, "end");
  }
  s += text(left + size / 2, top + size + 36, "False positive rate", 12, "middle");
  s += text(12, top + size / 2, "TPR", 12, "middle");
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& c = series[i];
    std::string pts;
    for (std::size_t p = 0; p < c.fpr.size(); ++p) {
      pts += (p ? " " : "") + num(left + c.fpr[p] * size) + "," + num(top + size - c.tpr[p] * size);
    }
    const char* col = kPalette[i % kPalette.size()];
    s += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + col + "\" stroke-width=\"2\"/>\n";
    const double ly = top + 14 + 18.0 * static_cast<double>(i);
    s += "<rect x=\"" + num(left + size + 12) + "\" y=\"" + num(ly - 9) + "\" width=\"12\" height=\"10\" fill=\"" +
         col + "\"/>\n";
    s += text(left + size + 30, ly, c.label + " (AUC " + fmt_fixed(c.auc, 3) + ")", 11);
  }
  return s + "</svg>\n";
}

// ---------------------------------------------------------------------------

inline const char* emotion_color(std::string_view emotion) {
  if (emotion == "anger") return "#d62728";
  if (emotion == "fear") return "#9467bd";
  if (emotion == "joy") return "#f2c40f";
  if (emotion == "sadness") return "#1f77b4";
  return "#ffffff";  // neutral
}

struct TimelineRow {
  int index = 0;
  std::string segment_id;
  double start_s = 0.0;
  double duration_s = 0.0;
  std::string emotion;  // predicted, "neutral" when no class is confident
  double score = 0.0;
};

// One bar per segment, width proportional to duration; neutral bars are white.
inline std::string timeline_svg(const std::string& title, const std::vector<TimelineRow>& rows) {
  double total = 0.0;
  for (const auto& r : rows) total = std::max(total, r.start_s + r.duration_s);
  const double width = 720, left = 20, top = 34, bar_h = 40;
  const double scale = total > 0 ? width / total : 0.0;
  std::string s = svg_open(left * 2 + width, top + bar_h + 70);
  s += text(left, 20, title, 14);
  for (const auto& r : rows) {
    const double x = left + r.start_s * scale;
    const double w = std::max(r.duration_s * scale, 0.5);
    s += "<rect x=\"" + num(x) + "\" y=\"" + num(top) + "\" width=\"" + num(w) + "\" height=\"" + num(bar_h) +
         "\" fill=\"" + emotion_color(r.emotion) + "\" stroke=\"#333333\" stroke-width=\"0.5\"><title>" +
         xml_escape(r.segment_id + " " + r.emotion) + "</title></rect>\n";
  }
  double lx = left;
  for (auto e : kEmotionNames) {
    s += "<rect x=\"" + num(lx) + "\" y=\"" + num(top + bar_h + 20) + "\" width=\"12\" height=\"12\" fill=\"" +
         emotion_color(e) + "\" stroke=\"#333333\" stroke-width=\"0.5\"/>\n";
    s += text(lx + 16, top + bar_h + 30, e, 11);
    lx += 90;
  }
  s += text(left + width, top + bar_h + 60, "time (s), total " + fmt_fixed(total, 2), 10, "end");
  return s + "</svg>\n";
}

// ---------------------------------------------------------------------------

// One line per segment; the highlight opacity is weight / max weight.
inline std::string attention_svg(const std::string& title, const std::vector<std::string>& lines,
                                 const std::vector<double>& weights) {
  if (lines.size() != weights.size()) throw DataError("attention lines and weights differ in length");
  double wmax = 0.0;
  for (double w : weights) wmax = std::max(wmax, w);
  const double width = 760, line_h = 20, top = 34;
  std::string s = svg_open(width, top + line_h * static_cast<double>(lines.size()) + 10);
  s += text(10, 20, title, 14);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const double y = top + line_h * static_cast<double>(i);
    const double op = wmax > 0 ? weights[i] / wmax : 0.0;
    s += "<rect x=\"8\" y=\"" + num(y) + "\" width=\"" + num(width - 16) + "\" height=\"" + num(line_h - 2) +
         "\" fill=\"#d62728\" fill-opacity=\"" + fmt_fixed(op, 4) + "\"/>\n";
    s += text(12, y + 13, lines[i] + "  [" + fmt_fixed(weights[i], 4) + "]", 11);
  }
  return s + "</svg>\n";
}

// ---------------------------------------------------------------------------

inline std::string heatmap_svg(const std::string& title, const CountMatrix& m) {
  std::size_t vmax = 0;
  for (const auto& r : m.counts) {
    for (auto v : r) vmax = std::max(vmax, v);
  }
  const double cell = 48, left = 130, top = 90;
  const double w = left + cell * static_cast<double>(m.col_names.size()) + 10;
  const double h = top + cell * static_cast<double>(m.row_names.size()) + 10;
  std::string s = svg_open(w, h);
  s += text(10, 20, title, 14);
  for (std::size_t c = 0; c < m.col_names.size(); ++c) {
    const double x = left + cell * (static_cast<double>(c) + 0.5);
    s += "<text x=\"" + num(x) + "\" y=\"" + num(top - 6) +
         "\" font-family=\"sans-serif\" font-size=\"10\" transform=\"rotate(-45 " + num(x) + " " + num(top - 6) +
         ")\">" + xml_escape(m.col_names[c]) + "</text>\n";
  }
  for (std::size_t r = 0; r < m.row_names.size(); ++r) {
    const double y = top + cell * static_cast<double>(r);
    s += text(left - 6, y + cell / 2 + 4, m.row_names[r], 11, "end");
    for (std::size_t c = 0; c < m.col_names.size(); ++c) {
      const auto v = m.counts[r][c];
      const double op = vmax ? static_cast<double>(v) / static_cast<double>(vmax) : 0.0;
      const double x = left + cell * static_cast<double>(c);
      s += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(cell) + "\" height=\"" + num(cell) +
           "\" fill=\"#1f77b4\" fill-opacity=\"" + fmt_fixed(op, 4) + "\" stroke=\"white\"/>\n";
      s += text(x + cell / 2, y + cell / 2 + 4, std::to_string(v), 10, "middle");
    }
  }
  return s + "</svg>\n";
}

}  // namespace speechfuse::plot
