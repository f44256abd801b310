#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fpesc/errors.hpp"

namespace fpesc {

struct SvgSeries {
  std::string label;
  std::vector<double> x, y;
  std::string color = "#1f6feb";
};

// Minimal line-plot writer; log_y draws the y axis in decades.
inline void write_svg_plot(const std::string& path, const std::string& title,
                           const std::string& xlabel, const std::string& ylabel,
                           const std::vector<SvgSeries>& series, bool log_y) {
  const double W = 640, H = 420, ml = 70, mr = 20, mt = 40, mb = 50;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      double yv = s.y[i];
      if (log_y && yv <= 0) continue;
      if (log_y) yv = std::log10(yv);
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, yv);
      ymax = std::max(ymax, yv);
    }
  if (xmin > xmax) {
    xmin = 0;
    xmax = 1;
  }
  if (ymin > ymax) {
    ymin = 0;
    ymax = 1;
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  auto px = [&](double v) { return ml + (v - xmin) / (xmax - xmin) * (W - ml - mr); };
  auto py = [&](double v) {
    if (log_y) v = std::log10(std::max(v, 1e-300));
    return H - mb - (v - ymin) / (ymax - ymin) * (H - mt - mb);
  };

  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='"
     << H << "' viewBox='0 0 " << W << " " << H << "'>\n";
  os << "<rect width='100%' height='100%' fill='white'/>\n";
  os << "<text x='" << W / 2 << "' y='24' text-anchor='middle' font-size='16'>"
     << title << "</text>\n";

  // axes
  os << "<line x1='" << ml << "' y1='" << H - mb << "' x2='" << W - mr
     << "' y2='" << H - mb << "' stroke='black'/>\n";
  os << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='"
     << H - mb << "' stroke='black'/>\n";
  os << "<text x='" << (ml + W - mr) / 2 << "' y='" << H - 12
     << "' text-anchor='middle' font-size='12'>" << xlabel << "</text>\n";
  os << "<text x='16' y='" << (mt + H - mb) / 2
     << "' text-anchor='middle' font-size='12' transform='rotate(-90 16 "
     << (mt + H - mb) / 2 << ")'>" << ylabel << "</text>\n";

  // ticks
  for (int k = 0; k <= 5; ++k) {
    double xv = xmin + k * (xmax - xmin) / 5.0;
    os << "<line x1='" << px(xv) << "' y1='" << H - mb << "' x2='" << px(xv)
       << "' y2='" << H - mb + 5 << "' stroke='black'/>\n";
    os << "<text x='" << px(xv) << "' y='" << H - mb + 18
       << "' text-anchor='middle' font-size='10'>";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", xv);
    os << buf << "</text>\n";
  }
  if (log_y) {
    int dlo = static_cast<int>(std::floor(ymin));
    int dhi = static_cast<int>(std::ceil(ymax));
    for (int dec = dlo; dec <= dhi; ++dec) {
      double yv = dec;
      if (yv < ymin || yv > ymax) continue;
      double yy = H - mb - (yv - ymin) / (ymax - ymin) * (H - mt - mb);
      os << "<line x1='" << ml - 5 << "' y1='" << yy << "' x2='" << ml
         << "' y2='" << yy << "' stroke='black'/>\n";
      os << "<text x='" << ml - 8 << "' y='" << yy + 3
         << "' text-anchor='end' font-size='10'>1e" << dec << "</text>\n";
    }
  } else {
    for (int k = 0; k <= 5; ++k) {
      double yv = ymin + k * (ymax - ymin) / 5.0;
      double yy = H - mb - (yv - ymin) / (ymax - ymin) * (H - mt - mb);
      os << "<line x1='" << ml - 5 << "' y1='" << yy << "' x2='" << ml
         << "' y2='" << yy << "' stroke='black'/>\n";
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.3g", yv);
      os << "<text x='" << ml - 8 << "' y='" << yy + 3
         << "' text-anchor='end' font-size='10'>" << buf << "</text>\n";
    }
  }

  int li = 0;
  for (const auto& s : series) {
    os << "<polyline fill='none' stroke='" << s.color
       << "' stroke-width='1.5' points='";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (log_y && s.y[i] <= 0) continue;
      os << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    }
    os << "'/>\n";
    if (!s.label.empty()) {
      double ly = mt + 14 * (li++);
      os << "<line x1='" << W - mr - 110 << "' y1='" << ly << "' x2='"
         << W - mr - 90 << "' y2='" << ly << "' stroke='" << s.color
         << "' stroke-width='2'/>\n";
      os << "<text x='" << W - mr - 84 << "' y='" << ly + 4
         << "' font-size='11'>" << s.label << "</text>\n";
    }
  }
  os << "</svg>\n";

  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write svg: " + path);
  f << os.str();
}

}  // namespace fpesc
