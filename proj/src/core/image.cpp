#include "navlab/core/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace navlab {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

void save_png(const Image& img, const std::filesystem::path& path) {
    if (img.empty()) throw std::invalid_argument("save_png: empty image");
    if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        FilePtr fp(std::fopen(tmp.c_str(), "wb"));
        if (!fp) throw std::runtime_error("save_png: cannot open " + tmp.string());
        png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        png_infop info = png_create_info_struct(png);
        if (!png || !info) throw std::runtime_error("save_png: libpng init failed");
        if (setjmp(png_jmpbuf(png))) {
            png_destroy_write_struct(&png, &info);
            throw std::runtime_error("save_png: libpng write error for " + path.string());
        }
        png_init_io(png, fp.get());
        png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
                     PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                     PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        std::vector<png_byte> row(static_cast<size_t>(img.w) * 3);
        for (int y = 0; y < img.h; ++y) {
            for (int x = 0; x < img.w; ++x)
                for (int c = 0; c < 3; ++c) {
                    double v = img.at(y, x, c);
                    v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
                    row[static_cast<size_t>(x) * 3 + c] = static_cast<png_byte>(std::lround(v * 255.0));
                }
            png_write_row(png, row.data());
        }
        png_write_end(png, nullptr);
        png_destroy_write_struct(&png, &info);
    }
    std::filesystem::rename(tmp, path);
}

Image load_png(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("load_png: cannot open " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) throw std::runtime_error("load_png: libpng init failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("load_png: libpng read error for " + path.string());
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    Image img(h, w);
    std::vector<png_byte> row(static_cast<size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = row[static_cast<size_t>(x) * 3 + c] / 255.0;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

nd::Tensor image_to_tensor(const Image& img) {
    nd::Tensor t = nd::Tensor::zeros({3, img.h, img.w});
    double* d = t.data();
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) d[(static_cast<int64_t>(c) * img.h + y) * img.w + x] = img.at(y, x, c);
    return t;
}

Image tensor_to_image(const nd::Tensor& t, bool clamp_01) {
    if (t.ndim() != 3 || t.dim(0) != 3) throw std::invalid_argument("tensor_to_image: need [3,h,w]");
    const int h = t.dim(1), w = t.dim(2);
    Image img(h, w);
    const double* d = t.data();
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double v = d[(static_cast<int64_t>(c) * h + y) * w + x];
                if (clamp_01) v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
                img.at(y, x, c) = v;
            }
    return img;
}

double mse(const Image& a, const Image& b) {
    if (a.h != b.h || a.w != b.w) throw std::invalid_argument("mse: image shape mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.px.size(); ++i) {
        const double d = a.px[i] - b.px[i];
        s += d * d;
    }
    return s / static_cast<double>(a.px.size());
}

}  // namespace navlab
