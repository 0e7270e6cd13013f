#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace sigquant {
namespace plot {

using Color = std::array<std::uint8_t, 3>;

constexpr Color kBlack{0, 0, 0};
constexpr Color kWhite{255, 255, 255};
constexpr Color kGray{180, 180, 180};

// default qualitative palette
const std::vector<Color>& palette();

class Canvas {
  public:
    Canvas(int width, int height, Color background = kWhite);

    int width() const { return w_; }
    int height() const { return h_; }

    void set(int x, int y, Color c);
    void line(int x0, int y0, int x1, int y1, Color c);
    void fill_rect(int x0, int y0, int x1, int y1, Color c);
    // 5x7 bitmap font, upper-case ASCII subset; scale 1 = 6px advance
    void text(int x, int y, const std::string& s, Color c, int scale = 1);

    void save_png(const std::string& path) const;

  private:
    int w_, h_;
    std::vector<std::uint8_t> pix_;
};

void write_png(const std::string& path, int width, int height,
               const std::vector<std::uint8_t>& rgb);

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
    bool dashed = false;
};

void line_chart(const std::string& path, const std::string& title,
                const std::vector<Series>& series, const std::string& x_label,
                const std::string& y_label);

struct Bar {
    std::string label;
    double value;
    int color_index = 0;
};

void bar_chart(const std::string& path, const std::string& title, const std::vector<Bar>& bars,
               const std::string& y_label);

// Stacked per-channel histogram panels, one panel per channel.
void histogram_panels(const std::string& path, const std::string& title,
                      const std::vector<std::string>& panel_names,
                      const std::vector<std::vector<double>>& panel_counts);

}  // namespace plot
}  // namespace sigquant
