#include "nusr/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

static_assert(std::endian::native == std::endian::little,
              "FGRD serialization assumes a little-endian host");

namespace nusr {

namespace {

constexpr char kFgrdMagic[4] = {'F', 'G', 'R', 'D'};

// Image files must carry at least an 8x8 raster; smaller grids cannot hold a
// meaningful scan and usually indicate a mangled file.
constexpr std::int64_t kMinImageDim = 8;

void check_image_tensor(const Tensor& image, const char* what) {
    if (!(image.ndim() == 2 ||
          (image.ndim() == 4 && image.dim(0) == 1 && image.dim(1) == 1))) {
        throw DimensionError(std::string(what) + " expects a 2d image or a [1,1,H,W] tensor, got " +
                             shape_str(image.shape()));
    }
    const std::int64_t h = image.dim(image.ndim() - 2);
    const std::int64_t w = image.dim(image.ndim() - 1);
    if (h < kMinImageDim || w < kMinImageDim) {
        throw DimensionError(std::string(what) + ": image files must be at least 8x8, got " +
                             std::to_string(w) + "x" + std::to_string(h));
    }
}

std::string lower_extension(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext;
}

}  // namespace

Tensor read_fgrd(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open image file: " + path.string());
    }
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0, std::ios::beg);

    if (size < 12) {
        throw FormatError("FGRD file shorter than its 12-byte header", size);
    }
    std::vector<std::uint8_t> bytes(size);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    if (!in) {
        throw IoError("failed reading image file: " + path.string());
    }
    if (std::memcmp(bytes.data(), kFgrdMagic, 4) != 0) {
        throw FormatError("bad FGRD magic (expected \"FGRD\")", 0);
    }
    std::uint32_t w = 0, h = 0;
    std::memcpy(&w, bytes.data() + 4, 4);
    std::memcpy(&h, bytes.data() + 8, 4);
    if (w < kMinImageDim || h < kMinImageDim) {
        throw FormatError("FGRD dimensions must be at least 8x8, got " + std::to_string(w) + "x" +
                              std::to_string(h),
                          4);
    }
    const std::size_t expected = 12 + static_cast<std::size_t>(w) * h * 4;
    if (size != expected) {
        throw FormatError("FGRD payload size mismatch: " + std::to_string(w) + "x" +
                              std::to_string(h) + " needs " + std::to_string(expected) +
                              " bytes, file has " + std::to_string(size),
                          std::min(size, expected));
    }
    std::vector<scalar> data(static_cast<std::size_t>(w) * h);
    const std::uint8_t* p = bytes.data() + 12;
    for (std::size_t i = 0; i < data.size(); ++i) {
        float f;
        std::memcpy(&f, p + 4 * i, 4);
        data[i] = static_cast<scalar>(f);
    }
    return Tensor::from_data({1, 1, static_cast<std::int64_t>(h), static_cast<std::int64_t>(w)},
                             data);
}

void write_fgrd(const Tensor& image, const std::filesystem::path& path) {
    check_image_tensor(image, "write_fgrd");
    const std::int64_t h = image.dim(image.ndim() - 2);
    const std::int64_t w = image.dim(image.ndim() - 1);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open image file for writing: " + path.string());
    }
    out.write(kFgrdMagic, 4);
    const std::uint32_t w32 = static_cast<std::uint32_t>(w), h32 = static_cast<std::uint32_t>(h);
    out.write(reinterpret_cast<const char*>(&w32), 4);
    out.write(reinterpret_cast<const char*>(&h32), 4);
    const auto data = image.data();
    std::vector<float> row(static_cast<std::size_t>(w));
    for (std::int64_t r = 0; r < h; ++r) {
        for (std::int64_t c = 0; c < w; ++c) {
            row[static_cast<std::size_t>(c)] = static_cast<float>(data[r * w + c]);
        }
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * 4));
    }
    if (!out) {
        throw IoError("short write to image file: " + path.string());
    }
}

Tensor read_png(const std::filesystem::path& path) {
    std::FILE* fp = std::fopen(path.string().c_str(), "rb");
    if (!fp) {
        throw IoError("cannot open image file: " + path.string());
    }
    png_byte header[8];
    if (std::fread(header, 1, 8, fp) != 8 || png_sig_cmp(header, 0, 8) != 0) {
        std::fclose(fp);
        throw FormatError("not a PNG file: " + path.string(), 0);
    }

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("libpng initialization failed");
    }
    std::vector<png_bytep> row_ptrs;
    std::vector<png_byte> pixels;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw FormatError("PNG decode failed: " + path.string(), 0);
    }
    png_init_io(png, fp);
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (w < kMinImageDim || h < kMinImageDim) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw FormatError("PNG dimensions must be at least 8x8, got " + std::to_string(w) + "x" +
                              std::to_string(h),
                          8);
    }

    // Normalize everything to single-channel gray at 8 or 16 bits.
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
        color == PNG_COLOR_TYPE_PALETTE) {
        png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    }
    png_read_update_info(png, info);

    const int out_depth = png_get_bit_depth(png, info);
    const std::size_t row_bytes = png_get_rowbytes(png, info);
    pixels.resize(row_bytes * h);
    row_ptrs.resize(h);
    for (png_uint_32 r = 0; r < h; ++r) row_ptrs[r] = pixels.data() + r * row_bytes;
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);

    std::vector<scalar> data(static_cast<std::size_t>(w) * h);
    if (out_depth == 16) {
        for (std::size_t i = 0; i < data.size(); ++i) {
            // PNG 16-bit samples are big-endian on the wire.
            const std::uint16_t v = static_cast<std::uint16_t>((pixels[2 * i] << 8) | pixels[2 * i + 1]);
            data[i] = static_cast<scalar>(v / 65535.0);
        }
    } else {
        for (std::size_t i = 0; i < data.size(); ++i) {
            data[i] = static_cast<scalar>(pixels[i] / 255.0);
        }
    }
    return Tensor::from_data({1, 1, static_cast<std::int64_t>(h), static_cast<std::int64_t>(w)},
                             data);
}

void write_png(const Tensor& image, const std::filesystem::path& path, int bit_depth) {
    check_image_tensor(image, "write_png");
    if (bit_depth != 8 && bit_depth != 16) {
        throw UsageError("PNG bit depth must be 8 or 16, got " + std::to_string(bit_depth));
    }
    const std::int64_t h = image.dim(image.ndim() - 2);
    const std::int64_t w = image.dim(image.ndim() - 1);

    std::FILE* fp = std::fopen(path.string().c_str(), "wb");
    if (!fp) {
        throw IoError("cannot open image file for writing: " + path.string());
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("PNG encode failed: " + path.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), bit_depth,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const auto data = image.data();
    const double full = bit_depth == 16 ? 65535.0 : 255.0;
    std::vector<png_byte> row(static_cast<std::size_t>(w) * (bit_depth / 8));
    for (std::int64_t r = 0; r < h; ++r) {
        for (std::int64_t c = 0; c < w; ++c) {
            const double v = std::clamp(static_cast<double>(data[r * w + c]), 0.0, 1.0);
            const auto q = static_cast<std::uint32_t>(v * full + 0.5);
            if (bit_depth == 16) {
                row[static_cast<std::size_t>(2 * c)] = static_cast<png_byte>(q >> 8);
                row[static_cast<std::size_t>(2 * c + 1)] = static_cast<png_byte>(q & 0xff);
            } else {
                row[static_cast<std::size_t>(c)] = static_cast<png_byte>(q);
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    if (std::fclose(fp) != 0) {
        throw IoError("short write to image file: " + path.string());
    }
}

Tensor read_image(const std::filesystem::path& path) {
    const std::string ext = lower_extension(path);
    if (ext == ".fgrd") return read_fgrd(path);
    if (ext == ".png") return read_png(path);
    throw UsageError("unsupported image extension '" + ext + "' (expected .fgrd or .png): " +
                     path.string());
}

void write_image(const Tensor& image, const std::filesystem::path& path) {
    const std::string ext = lower_extension(path);
    if (ext == ".fgrd") {
        write_fgrd(image, path);
    } else if (ext == ".png") {
        write_png(image, path);
    } else {
        throw UsageError("unsupported image extension '" + ext + "' (expected .fgrd or .png): " +
                         path.string());
    }
}

}  // namespace nusr
