#include "dockflow/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "dockflow/csv.hpp"

namespace dockflow::svg {

namespace {

constexpr const char* kFont = "font-family=\"monospace\"";

std::string num(double v) { return fmt2(v); }

std::string esc(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

// White -> deep red ramp; t clamped to [0,1].
std::string heat_color(double t) {
    t = std::clamp(t, 0.0, 1.0);
    const int r = 255 - static_cast<int>(std::lround(t * 75.0));
    const int g = 255 - static_cast<int>(std::lround(t * 215.0));
    const int b = 255 - static_cast<int>(std::lround(t * 235.0));
    char buf[8];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
    return buf;
}

struct Doc {
    std::ostringstream body;
    double width, height;

    Doc(double w, double h) : width(w), height(h) {
        body << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\""
             << num(h) << "\" viewBox=\"0 0 " << num(w) << " " << num(h) << "\">\n";
        body << "<rect x=\"0\" y=\"0\" width=\"" << num(w) << "\" height=\"" << num(h)
             << "\" fill=\"#ffffff\"/>\n";
    }

    void rect(double x, double y, double w, double h, const std::string& fill,
              const std::string& stroke = "") {
        body << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w)
             << "\" height=\"" << num(h) << "\" fill=\"" << fill << "\"";
        if (!stroke.empty()) body << " stroke=\"" << stroke << "\" stroke-width=\"0.50\"";
        body << "/>\n";
    }

    void text(double x, double y, const std::string& s, int size,
              const std::string& anchor = "start", const std::string& fill = "#333333") {
        body << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\"" << size
             << "\" " << kFont << " text-anchor=\"" << anchor << "\" fill=\"" << fill << "\">"
             << esc(s) << "</text>\n";
    }

    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke,
                  double width_px) {
        body << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\""
             << num(width_px) << "\" points=\"";
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (i) body << ' ';
            body << num(pts[i].first) << ',' << num(pts[i].second);
        }
        body << "\"/>\n";
    }

    void polygon(const std::vector<std::pair<double, double>>& pts, const std::string& fill,
                 const std::string& opacity) {
        body << "<polygon fill=\"" << fill << "\" fill-opacity=\"" << opacity << "\" points=\"";
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (i) body << ' ';
            body << num(pts[i].first) << ',' << num(pts[i].second);
        }
        body << "\"/>\n";
    }

    std::string finish() {
        body << "</svg>\n";
        return body.str();
    }
};

void empty_note(Doc& doc) {
    doc.text(doc.width / 2, doc.height / 2, "no data", 14, "middle", "#999999");
}

}  // namespace

std::string heatmap(const std::string& title, std::span<const std::string> row_labels,
                    std::span<const std::string> col_labels, std::span<const double> values,
                    double max_value, const std::string& unit) {
    const double cell = 22.0;
    const double left = 120.0, top = 48.0;
    const double w = left + cell * static_cast<double>(col_labels.size()) + 30.0;
    const double h = top + cell * static_cast<double>(row_labels.size()) + 40.0;
    Doc doc(std::max(w, 320.0), std::max(h, 140.0));
    doc.text(12, 24, title, 14);

    if (row_labels.empty() || col_labels.empty()) {
        empty_note(doc);
        return doc.finish();
    }

    for (std::size_t c = 0; c < col_labels.size(); ++c) {
        doc.text(left + cell * (static_cast<double>(c) + 0.5), top - 6, col_labels[c], 9,
                 "middle");
    }
    for (std::size_t r = 0; r < row_labels.size(); ++r) {
        doc.text(left - 8, top + cell * (static_cast<double>(r) + 0.7), row_labels[r], 10,
                 "end");
        for (std::size_t c = 0; c < col_labels.size(); ++c) {
            const double v = values[r * col_labels.size() + c];
            const double x = left + cell * static_cast<double>(c);
            const double y = top + cell * static_cast<double>(r);
            if (v < 0) {
                doc.rect(x, y, cell, cell, "#f4f4f4", "#dddddd");
            } else {
                doc.rect(x, y, cell, cell, heat_color(max_value > 0 ? v / max_value : 0.0),
                         "#dddddd");
            }
        }
    }
    doc.text(left, top + cell * static_cast<double>(row_labels.size()) + 24,
             "0 to " + fmt2(max_value) + " " + unit + " (grey: no activity)", 10);
    return doc.finish();
}

std::string bar_chart(const std::string& title, std::span<const std::string> labels,
                      std::span<const double> values) {
    const double bar_h = 18.0, gap = 6.0;
    const double left = 170.0, top = 48.0;
    const double plot_w = 420.0;
    const double h = top + (bar_h + gap) * static_cast<double>(labels.size()) + 30.0;
    Doc doc(left + plot_w + 90.0, std::max(h, 140.0));
    doc.text(12, 24, title, 14);

    if (labels.empty()) {
        empty_note(doc);
        return doc.finish();
    }

    double vmax = 0;
    for (double v : values) vmax = std::max(vmax, v);
    if (vmax <= 0) vmax = 1;

    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double y = top + (bar_h + gap) * static_cast<double>(i);
        const double w = plot_w * std::max(values[i], 0.0) / vmax;
        doc.text(left - 8, y + bar_h - 5, labels[i], 10, "end");
        doc.rect(left, y, w, bar_h, "#4878a8");
        doc.text(left + w + 6, y + bar_h - 5, fmt2(values[i]) + "", 10);
    }
    return doc.finish();
}

std::string line_band_chart(const std::string& title, std::span<const std::string> x_labels,
                            std::span<const double> mean, std::span<const double> half_width,
                            std::span<const double> secondary,
                            const std::string& secondary_label) {
    const double left = 60.0, top = 48.0, plot_w = 640.0, plot_h = 240.0;
    Doc doc(left + plot_w + 40.0, top + plot_h + 70.0);
    doc.text(12, 24, title, 14);

    const std::size_t n = x_labels.size();
    if (n == 0) {
        empty_note(doc);
        return doc.finish();
    }

    double ymax = 1e-12;
    for (std::size_t i = 0; i < n; ++i) ymax = std::max(ymax, mean[i] + half_width[i]);
    double smax = 1e-12;
    for (double v : secondary) smax = std::max(smax, v);

    auto x_at = [&](std::size_t i) {
        return n == 1 ? left + plot_w / 2
                      : left + plot_w * static_cast<double>(i) / static_cast<double>(n - 1);
    };
    auto y_at = [&](double v) { return top + plot_h * (1.0 - v / ymax); };
    auto y2_at = [&](double v) { return top + plot_h * (1.0 - v / smax); };

    doc.rect(left, top, plot_w, plot_h, "#ffffff", "#bbbbbb");

    std::vector<std::pair<double, double>> band;
    band.reserve(2 * n);
    for (std::size_t i = 0; i < n; ++i) band.push_back({x_at(i), y_at(mean[i] + half_width[i])});
    for (std::size_t i = n; i-- > 0;)
        band.push_back({x_at(i), y_at(std::max(mean[i] - half_width[i], 0.0))});
    doc.polygon(band, "#4878a8", "0.25");

    std::vector<std::pair<double, double>> line;
    line.reserve(n);
    for (std::size_t i = 0; i < n; ++i) line.push_back({x_at(i), y_at(mean[i])});
    doc.polyline(line, "#2a4d75", 1.6);

    std::vector<std::pair<double, double>> sec;
    sec.reserve(n);
    for (std::size_t i = 0; i < n; ++i) sec.push_back({x_at(i), y2_at(secondary[i])});
    doc.polyline(sec, "#c23b22", 1.2);

    for (std::size_t i = 0; i < n; ++i) {
        if (n > 12 && i % 2 == 1) continue;
        doc.text(x_at(i), top + plot_h + 16, x_labels[i], 9, "middle");
    }
    doc.text(left, top + plot_h + 36, "mean per day (band: 95% interval)", 10, "start",
             "#2a4d75");
    doc.text(left, top + plot_h + 50, secondary_label + " (own scale, max " + fmt2(smax) + ")",
             10, "start", "#c23b22");
    doc.text(left - 8, top + 10, fmt2(ymax), 9, "end");
    doc.text(left - 8, top + plot_h, "0", 9, "end");
    return doc.finish();
}

}  // namespace dockflow::svg
