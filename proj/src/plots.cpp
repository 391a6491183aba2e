#include "flatspec/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

#include "flatspec/format.hpp"

namespace flatspec {

namespace {

constexpr double kW = 640, kH = 400, kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

std::string label(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

struct Axis {
  double lo, hi, px0, px1;
  double map(double v) const { return hi == lo ? (px0 + px1) / 2 : px0 + (v - lo) / (hi - lo) * (px1 - px0); }
};

Axis padded(double lo, double hi, double px0, double px1) {
  if (hi == lo) {
    const double d = lo == 0 ? 1.0 : std::abs(lo) * 0.1;
    return {lo - d, hi + d, px0, px1};
  }
  const double pad = (hi - lo) * 0.05;
  return {lo - pad, hi + pad, px0, px1};
}

std::string header(double w, double h, const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) + "\" viewBox=\"0 0 " +
         num(w) + " " + num(h) + "\" font-family=\"sans-serif\" font-size=\"11\">\n" +
         "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" + "<text x=\"" + num(w / 2) +
         "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">" + escape(title) + "</text>\n";
}

void frame(std::string& out, const Axis& x, const Axis& y, double bottom, const std::string& xlab,
           const std::string& ylab, bool log_y) {
  out += "<line x1=\"" + num(x.px0) + "\" y1=\"" + num(bottom) + "\" x2=\"" + num(x.px1) + "\" y2=\"" + num(bottom) +
         "\" stroke=\"black\"/>\n";
  out += "<line x1=\"" + num(x.px0) + "\" y1=\"" + num(y.px1) + "\" x2=\"" + num(x.px0) + "\" y2=\"" + num(bottom) +
         "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = x.lo + (x.hi - x.lo) * i / 4.0, px = x.map(v);
    out += "<line x1=\"" + num(px) + "\" y1=\"" + num(bottom) + "\" x2=\"" + num(px) + "\" y2=\"" + num(bottom + 4) +
           "\" stroke=\"black\"/>\n<text x=\"" + num(px) + "\" y=\"" + num(bottom + 16) +
           "\" text-anchor=\"middle\">" + label(v) + "</text>\n";
  }
  if (log_y) {
    for (int e = static_cast<int>(std::ceil(y.lo)); e <= static_cast<int>(std::floor(y.hi)); ++e) {
      const double py = y.map(e);
      out += "<line x1=\"" + num(x.px0 - 4) + "\" y1=\"" + num(py) + "\" x2=\"" + num(x.px0) + "\" y2=\"" + num(py) +
             "\" stroke=\"black\"/>\n<text x=\"" + num(x.px0 - 8) + "\" y=\"" + num(py + 4) +
             "\" text-anchor=\"end\">1e" + std::to_string(e) + "</text>\n";
    }
  } else {
    for (int i = 0; i <= 4; ++i) {
      const double v = y.lo + (y.hi - y.lo) * i / 4.0, py = y.map(v);
      out += "<line x1=\"" + num(x.px0 - 4) + "\" y1=\"" + num(py) + "\" x2=\"" + num(x.px0) + "\" y2=\"" + num(py) +
             "\" stroke=\"black\"/>\n<text x=\"" + num(x.px0 - 8) + "\" y=\"" + num(py + 4) +
             "\" text-anchor=\"end\">" + label(v) + "</text>\n";
    }
  }
  out += "<text x=\"" + num((x.px0 + x.px1) / 2) + "\" y=\"" + num(bottom + 34) + "\" text-anchor=\"middle\">" +
         escape(xlab) + "</text>\n";
  const double cy = (y.px1 + bottom) / 2;
  out += "<text x=\"" + num(x.px0 - 54) + "\" y=\"" + num(cy) + "\" text-anchor=\"middle\" transform=\"rotate(-90 " + num(x.px0 - 54) + " " + num(cy) + ")\">" +
         escape(ylab) + "</text>\n";
}

}  // namespace

std::string spectrum_csv(const RitzSpectrum& s) {
  std::string out = "node,weight\n";
  for (std::size_t i = 0; i < s.nodes.size(); ++i) out += fmt17(s.nodes[i]) + "," + fmt17(s.weights[i]) + "\n";
  return out;
}

std::string spectrum_svg(const RitzSpectrum& s, const std::string& title) {
  std::string out = header(kW, kH, title);
  const double bottom = kH - kBottom;
  double xlo = 0, xhi = 0, ylo = 0, yhi = 0;
  bool any = false;
  for (std::size_t i = 0; i < s.nodes.size(); ++i) {
    if (!(s.weights[i] > 0)) continue;
    const double ly = std::log10(s.weights[i]);
    if (!any) xlo = xhi = s.nodes[i], ylo = yhi = ly, any = true;
    xlo = std::min(xlo, s.nodes[i]);
    xhi = std::max(xhi, s.nodes[i]);
    ylo = std::min(ylo, ly);
    yhi = std::max(yhi, ly);
  }
  ylo = std::floor(ylo) - 0.5;
  yhi = std::max(std::ceil(yhi), ylo + 1.0);
  const Axis x = padded(xlo, xhi, kLeft, kW - kRight);
  const Axis y{ylo, yhi, bottom, kTop};
  frame(out, x, y, bottom, "eigenvalue", "spectral density (log10 weight)", true);
  for (std::size_t i = 0; i < s.nodes.size(); ++i) {
    if (!(s.weights[i] > 0)) continue;
    const double px = x.map(s.nodes[i]), py = y.map(std::log10(s.weights[i]));
    out += "<line x1=\"" + num(px) + "\" y1=\"" + num(bottom) + "\" x2=\"" + num(px) + "\" y2=\"" + num(py) +
           "\" stroke=\"steelblue\"/>\n<circle cx=\"" + num(px) + "\" cy=\"" + num(py) +
           "\" r=\"2.5\" fill=\"steelblue\"/>\n";
  }
  return out + "</svg>\n";
}

std::vector<EpochRecord> parse_history_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("epoch,lr,train_loss", 0) != 0)
    throw std::runtime_error("not a training history CSV");
  std::vector<EpochRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) throw std::runtime_error("history CSV row has " + std::to_string(cells.size()) + " fields");
    EpochRecord r;
    r.epoch = std::stoul(cells[0]);
    double* fields[] = {&r.lr, &r.train_loss, &r.train_acc, &r.test_loss, &r.test_acc, &r.weight_norm};
    for (int i = 0; i < 6; ++i) *fields[i] = std::strtod(cells[i + 1].c_str(), nullptr);
    out.push_back(r);
  }
  return out;
}

std::string history_plot_csv(const std::vector<EpochRecord>& h) {
  std::string out = "epoch,test_error,weight_norm\n";
  for (const auto& r : h) out += std::to_string(r.epoch) + "," + fmt17(1.0 - r.test_acc) + "," + fmt17(r.weight_norm) + "\n";
  return out;
}

std::string history_svg(const std::vector<EpochRecord>& h, const std::string& title) {
  const double panel = (kW - 40) / 2;
  std::string out = header(kW * 1.0 + 80, kH, title);
  const double bottom = kH - kBottom;
  auto series = [&](double offset, auto get, const std::string& ylab, const char* colour) {
    double lo = 0, hi = 0, elo = 0, ehi = 0;
    for (std::size_t i = 0; i < h.size(); ++i) {
      const double v = get(h[i]);
      const double e = static_cast<double>(h[i].epoch);
      if (i == 0) lo = hi = v, elo = ehi = e;
      lo = std::min(lo, v), hi = std::max(hi, v), elo = std::min(elo, e), ehi = std::max(ehi, e);
    }
    const Axis x = padded(elo, ehi, offset + kLeft, offset + panel + 40 - kRight);
    Axis y = padded(lo, hi, bottom, kTop);
    frame(out, x, y, bottom, "epoch", ylab, false);
    std::string pts;
    for (const auto& r : h) {
      const double v = get(r);
      if (!std::isfinite(v)) continue;
      pts += num(x.map(static_cast<double>(r.epoch))) + "," + num(y.map(v)) + " ";
    }
    out += "<polyline fill=\"none\" stroke=\"" + std::string(colour) + "\" stroke-width=\"1.5\" points=\"" + pts +
           "\"/>\n";
  };
  series(0, [](const EpochRecord& r) { return 1.0 - r.test_acc; }, "test error", "firebrick");
  series(panel + 40, [](const EpochRecord& r) { return r.weight_norm; }, "weight norm", "darkgreen");
  return out + "</svg>\n";
}

std::string degeneracy_csv(const std::vector<DegeneracyPoint>& pts) {
  std::string out = "epoch,ratio,node_value\n";
  for (const auto& p : pts) out += std::to_string(p.epoch) + "," + fmt17(p.ratio) + "," + fmt17(p.node_value) + "\n";
  return out;
}

}  // namespace flatspec
