#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace dag {

// Row-major, channel-interleaved float image. In memory intensities live in
// [-1, 1]; pixel centres sit at (col + 0.5, row + 0.5) in landmark coordinates.
class ImageBuffer {
public:
    ImageBuffer() = default;
    ImageBuffer(int width, int height, int channels, double fill = 0.0);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int channels() const noexcept { return channels_; }
    std::size_t size() const noexcept { return data_.size(); }

    double& at(int col, int row, int ch = 0) noexcept {
        return data_[(static_cast<std::size_t>(row) * width_ + col) * channels_ + ch];
    }
    double at(int col, int row, int ch = 0) const noexcept {
        return data_[(static_cast<std::size_t>(row) * width_ + col) * channels_ + ch];
    }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    double mean() const noexcept;
    // Throws InvalidArgument if any value is non-finite or outside [-1, 1].
    void validate_range() const;

    friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    int channels_ = 1;
    std::vector<double> data_;
};

// Offsets within this distance of a pixel centre are snapped onto it, so
// identity and integer-shift mappings reproduce source pixels exactly.
inline constexpr double kPixelSnap = 1e-9;

// Bilinear sample at landmark coordinates (u, v) with edge clamping.
double sample_bilinear(const ImageBuffer& img, double u, double v, int ch = 0) noexcept;

// Binary PGM (P5) / PPM (P6), 8 bit. Load maps p -> p / 127.5 - 1; save
// rounds (v + 1) * 127.5 half-up and clamps to [0, 255].
ImageBuffer load_pnm(const std::filesystem::path& path);
void save_pnm(const std::filesystem::path& path, const ImageBuffer& img);

// Simulates a save/load round trip.
ImageBuffer quantize_8bit(const ImageBuffer& img);

// Tiles equally sized images into a grid (row-major, `cols` per row). Gaps and
// default-constructed tiles render white.
ImageBuffer contact_sheet(std::span<const ImageBuffer> tiles, int cols, int gap = 1);

}  // namespace dag
