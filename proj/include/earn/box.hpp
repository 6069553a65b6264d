#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace earn {

/// Axis-aligned box in image pixel coordinates, stored as corners.
class Box {
public:
    Box() = default;

    Box(double x_tl, double y_tl, double x_br, double y_br)
        : x_tl_(x_tl), y_tl_(y_tl), x_br_(x_br), y_br_(y_br) {
        if (!std::isfinite(x_tl) || !std::isfinite(y_tl) || !std::isfinite(x_br) ||
            !std::isfinite(y_br)) {
            throw std::invalid_argument("box coordinates must be finite");
        }
        if (!(x_br > x_tl) || !(y_br > y_tl)) {
            throw std::invalid_argument("box must have positive width and height");
        }
    }

    double x_tl() const { return x_tl_; }
    double y_tl() const { return y_tl_; }
    double x_br() const { return x_br_; }
    double y_br() const { return y_br_; }

    double width() const { return x_br_ - x_tl_; }
    double height() const { return y_br_ - y_tl_; }
    double area() const { return width() * height(); }
    double center_x() const { return 0.5 * (x_tl_ + x_br_); }
    double center_y() const { return 0.5 * (y_tl_ + y_br_); }

    std::array<double, 4> corners() const { return {x_tl_, y_tl_, x_br_, y_br_}; }

    bool inside(double width, double height) const {
        return x_tl_ >= 0.0 && y_tl_ >= 0.0 && x_br_ <= width && y_br_ <= height;
    }

    friend bool operator==(const Box&, const Box&) = default;

private:
    double x_tl_ = 0.0;
    double y_tl_ = 0.0;
    double x_br_ = 1.0;
    double y_br_ = 1.0;
};

inline double compute_iou(const Box& a, const Box& b) {
    const double iw = std::min(a.x_br(), b.x_br()) - std::max(a.x_tl(), b.x_tl());
    const double ih = std::min(a.y_br(), b.y_br()) - std::max(a.y_tl(), b.y_tl());
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    return inter / (a.area() + b.area() - inter);
}

inline double center_distance(const Box& a, const Box& b) {
    return std::hypot(a.center_x() - b.center_x(), a.center_y() - b.center_y());
}

}  // namespace earn
