#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "navlab/core/tensor.hpp"

namespace navlab {

// RGB raster, values in [0,1], row-major h*w*3.
struct Image {
    int h = 0, w = 0;
    std::vector<double> px;

    Image() = default;
    Image(int h_, int w_, double fill = 0.0) : h(h_), w(w_), px(static_cast<size_t>(h_) * w_ * 3, fill) {}

    double& at(int y, int x, int c) { return px[(static_cast<size_t>(y) * w + x) * 3 + c]; }
    double at(int y, int x, int c) const { return px[(static_cast<size_t>(y) * w + x) * 3 + c]; }
    bool empty() const { return px.empty(); }

    bool operator==(const Image& o) const { return h == o.h && w == o.w && px == o.px; }
};

// 8-bit PNG persistence (values quantized with round(v*255)).
void save_png(const Image& img, const std::filesystem::path& path);
Image load_png(const std::filesystem::path& path);

// [3,h,w] tensor conversion
nd::Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const nd::Tensor& t, bool clamp_01 = true);

double mse(const Image& a, const Image& b);

}  // namespace navlab
