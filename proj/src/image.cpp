#include "image.hpp"

#include "common.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

namespace dag {

ImageBuffer::ImageBuffer(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
    if (width <= 0 || height <= 0) throw Error(ErrorCode::InvalidArgument, "image size must be positive");
    if (channels != 1 && channels != 3) throw Error(ErrorCode::InvalidArgument, "images have 1 or 3 channels");
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

double ImageBuffer::mean() const noexcept {
    double s = 0.0;
    for (double v : data_) s += v;
    return data_.empty() ? 0.0 : s / static_cast<double>(data_.size());
}

void ImageBuffer::validate_range() const {
    for (double v : data_)
        if (!std::isfinite(v) || v < -1.0 || v > 1.0)
            throw Error(ErrorCode::InvalidArgument, "image intensities must be finite and within [-1, 1]");
}

namespace {

double snap(double x) noexcept {
    const double r = std::nearbyint(x);
    return std::abs(x - r) <= kPixelSnap ? r : x;
}

}  // namespace

double sample_bilinear(const ImageBuffer& img, double u, double v, int ch) noexcept {
    const double x = std::clamp(snap(u - 0.5), 0.0, static_cast<double>(img.width() - 1));
    const double y = std::clamp(snap(v - 0.5), 0.0, static_cast<double>(img.height() - 1));
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0;
    const double fy = y - y0;
    const int x1 = std::min(x0 + 1, img.width() - 1);
    const int y1 = std::min(y0 + 1, img.height() - 1);
    if (fx == 0.0 && fy == 0.0) return img.at(x0, y0, ch);
    const double top = (1.0 - fx) * img.at(x0, y0, ch) + fx * img.at(x1, y0, ch);
    const double bottom = (1.0 - fx) * img.at(x0, y1, ch) + fx * img.at(x1, y1, ch);
    return (1.0 - fy) * top + fy * bottom;
}

namespace {

int read_header_int(std::istream& in) {
    int c = in.peek();
    while (c == ' ' || c == '\n' || c == '\r' || c == '\t' || c == '#') {
        if (c == '#') {
            std::string skip;
            std::getline(in, skip);
        } else {
            in.get();
        }
        c = in.peek();
    }
    int v = -1;
    in >> v;
    return v;
}

unsigned char to_byte(double v) noexcept {
    const double p = std::floor((v + 1.0) * 127.5 + 0.5);
    return static_cast<unsigned char>(std::clamp(p, 0.0, 255.0));
}

}  // namespace

ImageBuffer load_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::MissingInput, "cannot open image " + path.string());
    std::string magic(2, '\0');
    in.read(magic.data(), 2);
    int channels = 0;
    if (magic == "P5") channels = 1;
    else if (magic == "P6") channels = 3;
    else throw Error(ErrorCode::InvalidArgument, path.string() + ": not a binary PGM/PPM");
    const int w = read_header_int(in);
    const int h = read_header_int(in);
    const int maxval = read_header_int(in);
    if (w <= 0 || h <= 0 || maxval != 255)
        throw Error(ErrorCode::InvalidArgument, path.string() + ": unsupported PNM header");
    in.get();
    std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * channels);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!in) throw Error(ErrorCode::InvalidArgument, path.string() + ": truncated pixel data");
    ImageBuffer img(w, h, channels);
    auto data = img.data();
    for (std::size_t i = 0; i < bytes.size(); ++i) data[i] = bytes[i] / 127.5 - 1.0;
    return img;
}

void save_pnm(const std::filesystem::path& path, const ImageBuffer& img) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write image " + path.string());
    out << (img.channels() == 1 ? "P5" : "P6") << "\n" << img.width() << " " << img.height() << "\n255\n";
    std::vector<unsigned char> bytes(img.size());
    const auto data = img.data();
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(data[i]);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

ImageBuffer quantize_8bit(const ImageBuffer& img) {
    ImageBuffer out = img;
    for (double& v : out.data()) v = to_byte(v) / 127.5 - 1.0;
    return out;
}

ImageBuffer contact_sheet(std::span<const ImageBuffer> tiles, int cols, int gap) {
    if (tiles.empty() || cols <= 0) throw Error(ErrorCode::InvalidArgument, "empty contact sheet");
    const int tw = tiles[0].width(), th = tiles[0].height(), ch = tiles[0].channels();
    const int rows = static_cast<int>((tiles.size() + cols - 1) / cols);
    ImageBuffer sheet(cols * tw + (cols - 1) * gap, rows * th + (rows - 1) * gap, ch, 1.0);
    for (std::size_t t = 0; t < tiles.size(); ++t) {
        const auto& tile = tiles[t];
        if (tile.width() == 0) continue;
        if (tile.width() != tw || tile.height() != th || tile.channels() != ch)
            throw Error(ErrorCode::InvalidArgument, "contact sheet tiles differ in size");
        const int ox = static_cast<int>(t % cols) * (tw + gap);
        const int oy = static_cast<int>(t / cols) * (th + gap);
        for (int r = 0; r < th; ++r)
            for (int c = 0; c < tw; ++c)
                for (int k = 0; k < ch; ++k) sheet.at(ox + c, oy + r, k) = tile.at(c, r, k);
    }
    return sheet;
}

}  // namespace dag
