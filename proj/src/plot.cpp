#include "sigquant/plot.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <stdexcept>

namespace sigquant {
namespace plot {

const std::vector<Color>& palette() {
    static const std::vector<Color> p = {
        {214, 39, 40},   // red
        {31, 119, 180},  // blue
        {44, 160, 44},   // green
        {148, 103, 189}, // purple
        {255, 127, 14},  // orange
        {140, 86, 75},   // brown
        {23, 190, 207},  // cyan
        {127, 127, 127}, // gray
    };
    return p;
}

namespace {

// 5x7 bitmap glyphs, rows top to bottom, bit 4 = leftmost column.
const std::map<char, std::array<std::uint8_t, 7>>& font() {
    static const std::map<char, std::array<std::uint8_t, 7>> f = {
        {' ', {0, 0, 0, 0, 0, 0, 0}},
        {'-', {0, 0, 0, 0x1f, 0, 0, 0}},
        {'+', {0, 0x04, 0x04, 0x1f, 0x04, 0x04, 0}},
        {'.', {0, 0, 0, 0, 0, 0x06, 0x06}},
        {',', {0, 0, 0, 0, 0, 0x06, 0x04}},
        {':', {0, 0x06, 0x06, 0, 0x06, 0x06, 0}},
        {'/', {0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10}},
        {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
        {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
        {'%', {0x19, 0x1a, 0x02, 0x04, 0x08, 0x0b, 0x13}},
        {'_', {0, 0, 0, 0, 0, 0, 0x1f}},
        {'=', {0, 0, 0x1f, 0, 0x1f, 0, 0}},
        {'0', {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e}},
        {'1', {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e}},
        {'2', {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f}},
        {'3', {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e}},
        {'4', {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02}},
        {'5', {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e}},
        {'6', {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e}},
        {'7', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
        {'8', {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e}},
        {'9', {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c}},
        {'A', {0x0e, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11}},
        {'B', {0x1e, 0x11, 0x11, 0x1e, 0x11, 0x11, 0x1e}},
        {'C', {0x0e, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0e}},
        {'D', {0x1c, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1c}},
        {'E', {0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x1f}},
        {'F', {0x1f, 0x10, 0x10, 0x1e, 0x10, 0x10, 0x10}},
        {'G', {0x0e, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0f}},
        {'H', {0x11, 0x11, 0x11, 0x1f, 0x11, 0x11, 0x11}},
        {'I', {0x0e, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0e}},
        {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0c}},
        {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
        {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1f}},
        {'M', {0x11, 0x1b, 0x15, 0x15, 0x11, 0x11, 0x11}},
        {'N', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}},
        {'O', {0x0e, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e}},
        {'P', {0x1e, 0x11, 0x11, 0x1e, 0x10, 0x10, 0x10}},
        {'Q', {0x0e, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0d}},
        {'R', {0x1e, 0x11, 0x11, 0x1e, 0x14, 0x12, 0x11}},
        {'S', {0x0f, 0x10, 0x10, 0x0e, 0x01, 0x01, 0x1e}},
        {'T', {0x1f, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
        {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0e}},
        {'V', {0x11, 0x11, 0x11, 0x11, 0x0a, 0x0a, 0x04}},
        {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x1b, 0x11}},
        {'X', {0x11, 0x11, 0x0a, 0x04, 0x0a, 0x11, 0x11}},
        {'Y', {0x11, 0x11, 0x0a, 0x04, 0x04, 0x04, 0x04}},
        {'Z', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1f}},
    };
    return f;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

}  // namespace

Canvas::Canvas(int width, int height, Color background) : w_(width), h_(height) {
    pix_.assign(static_cast<std::size_t>(width) * height * 3, 0);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) set(x, y, background);
}

void Canvas::set(int x, int y, Color c) {
    if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
    const std::size_t i = (static_cast<std::size_t>(y) * w_ + x) * 3;
    pix_[i] = c[0];
    pix_[i + 1] = c[1];
    pix_[i + 2] = c[2];
}

void Canvas::line(int x0, int y0, int x1, int y1, Color c) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        set(x0, y0, c);
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

void Canvas::fill_rect(int x0, int y0, int x1, int y1, Color c) {
    for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y)
        for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) set(x, y, c);
}

void Canvas::text(int x, int y, const std::string& s, Color c, int scale) {
    int cx = x;
    const auto& f = font();
    for (char raw : s) {
        const char ch = static_cast<char>(std::toupper(static_cast<unsigned char>(raw)));
        auto it = f.find(ch);
        if (it != f.end()) {
            for (int r = 0; r < 7; ++r)
                for (int col = 0; col < 5; ++col)
                    if ((it->second[r] >> (4 - col)) & 1)
                        for (int dy = 0; dy < scale; ++dy)
                            for (int dx = 0; dx < scale; ++dx)
                                set(cx + col * scale + dx, y + r * scale + dy, c);
        }
        cx += 6 * scale;
    }
}

void Canvas::save_png(const std::string& path) const { write_png(path, w_, h_, pix_); }

namespace {

struct Frame {
    int left, right, top, bottom;
    double x0, x1, y0, y1;
    int px(double x) const {
        return left + static_cast<int>(std::lround((x - x0) / (x1 - x0 + 1e-300) *
                                                   (right - left)));
    }
    int py(double y) const {
        return bottom - static_cast<int>(std::lround((y - y0) / (y1 - y0 + 1e-300) *
                                                     (bottom - top)));
    }
};

void draw_frame(Canvas& cv, const Frame& f, const std::string& title,
                const std::string& x_label, const std::string& y_label) {
    cv.line(f.left, f.top, f.left, f.bottom, kBlack);
    cv.line(f.left, f.bottom, f.right, f.bottom, kBlack);
    cv.text(f.left, 6, title, kBlack);
    cv.text(f.left, f.bottom + 22, x_label, kBlack);
    cv.text(2, f.top - 12, y_label, kBlack);
    cv.text(2, f.bottom - 3, fmt(f.y0), kBlack);
    cv.text(2, f.top, fmt(f.y1), kBlack);
    cv.text(f.left - 6, f.bottom + 10, fmt(f.x0), kBlack);
    cv.text(f.right - 18, f.bottom + 10, fmt(f.x1), kBlack);
}

}  // namespace

void line_chart(const std::string& path, const std::string& title,
                const std::vector<Series>& series, const std::string& x_label,
                const std::string& y_label) {
    Canvas cv(640, 420);
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (y0 == y1) y1 = y0 + 1;
    if (x0 == x1) x1 = x0 + 1;
    Frame f{60, 470, 24, 380, x0, x1, y0, y1};
    draw_frame(cv, f, title, x_label, y_label);
    for (std::size_t si = 0; si < series.size(); ++si) {
        const Color c = palette()[si % palette().size()];
        const auto& s = series[si];
        for (std::size_t i = 0; i + 1 < s.x.size(); ++i) {
            if (s.dashed && i % 2 == 1) continue;
            cv.line(f.px(s.x[i]), f.py(s.y[i]), f.px(s.x[i + 1]), f.py(s.y[i + 1]), c);
        }
        const int ly = 24 + static_cast<int>(si) * 12;
        cv.fill_rect(478, ly, 486, ly + 6, c);
        cv.text(490, ly, s.name, kBlack);
    }
    cv.save_png(path);
}

void bar_chart(const std::string& path, const std::string& title, const std::vector<Bar>& bars,
               const std::string& y_label) {
    const int n = static_cast<int>(bars.size());
    const int width = std::max(420, 70 + n * 26);
    Canvas cv(width, 420);
    double y1 = 0.0;
    for (const auto& b : bars) y1 = std::max(y1, b.value);
    if (y1 == 0.0) y1 = 1.0;
    Frame f{60, width - 16, 24, 330, 0.0, static_cast<double>(n), 0.0, y1 * 1.05};
    draw_frame(cv, f, title, "", y_label);
    for (int i = 0; i < n; ++i) {
        const int xa = f.px(i + 0.15), xb = f.px(i + 0.85);
        const int yb = f.py(bars[i].value);
        cv.fill_rect(xa, yb, xb, f.bottom - 1, palette()[bars[i].color_index % palette().size()]);
        // vertical-ish label: stack characters
        for (std::size_t k = 0; k < bars[i].label.size() && k < 8; ++k)
            cv.text(xa, f.bottom + 6 + static_cast<int>(k) * 8, std::string(1, bars[i].label[k]),
                    kBlack);
    }
    cv.save_png(path);
}

void histogram_panels(const std::string& path, const std::string& title,
                      const std::vector<std::string>& panel_names,
                      const std::vector<std::vector<double>>& panel_counts) {
    if (panel_names.size() != panel_counts.size())
        throw std::invalid_argument("histogram_panels: name/count mismatch");
    const int panels = static_cast<int>(panel_names.size());
    const int ph = 130;
    Canvas cv(520, 30 + panels * (ph + 26));
    cv.text(10, 8, title, kBlack);
    for (int p = 0; p < panels; ++p) {
        const auto& counts = panel_counts[p];
        double y1 = 1.0;
        for (double c : counts) y1 = std::max(y1, c);
        const int top = 30 + p * (ph + 26);
        Frame f{50, 500, top, top + ph, 0.0, static_cast<double>(counts.size()), 0.0, y1};
        cv.line(f.left, f.top, f.left, f.bottom, kBlack);
        cv.line(f.left, f.bottom, f.right, f.bottom, kBlack);
        cv.text(6, top + ph / 2, panel_names[p], kBlack);
        for (std::size_t b = 0; b < counts.size(); ++b) {
            const int xa = f.px(static_cast<double>(b));
            const int xb = std::max(xa, f.px(static_cast<double>(b + 1)) - 1);
            cv.fill_rect(xa, f.py(counts[b]), xb, f.bottom - 1,
                         palette()[p % palette().size()]);
        }
    }
    cv.save_png(path);
}

}  // namespace plot
}  // namespace sigquant
