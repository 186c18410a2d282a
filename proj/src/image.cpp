#include "tsdn/image.hpp"

#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

namespace tsdn {

namespace {

using Kind = FormatError::Kind;

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

std::uint8_t quantize(float v) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

// --------------------------------------------------------------------------
// PNM (PGM P2/P5, PPM P3/P6)

struct PnmHeader {
    int channels = 0;
    bool binary = false;
    int width = 0, height = 0, maxval = 0;
    std::size_t data_offset = 0;
};

// Reads the next whitespace/comment-delimited integer token.
int pnm_int(const std::vector<std::uint8_t>& b, std::size_t& pos, const std::string& path) {
    while (pos < b.size()) {
        if (b[pos] == '#') {
            while (pos < b.size() && b[pos] != '\n') ++pos;
        } else if (std::isspace(b[pos])) {
            ++pos;
        } else {
            break;
        }
    }
    if (pos >= b.size() || !std::isdigit(b[pos]))
        throw FormatError(Kind::CorruptHeader, path + ": malformed PNM header");
    long v = 0;
    while (pos < b.size() && std::isdigit(b[pos])) {
        v = v * 10 + (b[pos] - '0');
        if (v > 1 << 30) throw FormatError(Kind::CorruptHeader, path + ": PNM value overflow");
        ++pos;
    }
    return static_cast<int>(v);
}

PnmHeader parse_pnm_header(const std::vector<std::uint8_t>& b, const std::string& path) {
    PnmHeader h;
    switch (b[1]) {
        case '2': h.channels = 1; h.binary = false; break;
        case '3': h.channels = 3; h.binary = false; break;
        case '5': h.channels = 1; h.binary = true; break;
        case '6': h.channels = 3; h.binary = true; break;
        default:
            throw FormatError(Kind::UnsupportedFormat,
                              path + ": unsupported PNM variant P" + std::string(1, b[1]));
    }
    std::size_t pos = 2;
    h.width = pnm_int(b, pos, path);
    h.height = pnm_int(b, pos, path);
    h.maxval = pnm_int(b, pos, path);
    if (h.width < 1 || h.height < 1)
        throw FormatError(Kind::CorruptHeader, path + ": bad PNM dimensions");
    if (h.maxval < 1 || h.maxval > 255)
        throw FormatError(Kind::UnsupportedFormat,
                          path + ": only 8-bit PNM supported (maxval " +
                              std::to_string(h.maxval) + ")");
    if (h.binary) {
        if (pos >= b.size() || !std::isspace(b[pos]))
            throw FormatError(Kind::CorruptHeader, path + ": bad PNM header terminator");
        ++pos;  // single whitespace byte before the raster
    }
    h.data_offset = pos;
    return h;
}

Image load_pnm(const std::vector<std::uint8_t>& b, const std::string& path) {
    const PnmHeader h = parse_pnm_header(b, path);
    Image img(h.channels, h.height, h.width);
    const std::size_t count =
        static_cast<std::size_t>(h.channels) * h.height * h.width;
    const float maxval = static_cast<float>(h.maxval);
    if (h.binary) {
        if (b.size() - h.data_offset < count)
            throw FormatError(Kind::Truncated, path + ": PNM pixel data truncated");
        // Interleaved bytes -> planar floats.
        for (int y = 0; y < h.height; ++y)
            for (int x = 0; x < h.width; ++x)
                for (int c = 0; c < h.channels; ++c)
                    img.at(c, y, x) =
                        b[h.data_offset +
                          (static_cast<std::size_t>(y) * h.width + x) * h.channels + c] /
                        maxval;
    } else {
        std::size_t pos = h.data_offset;
        for (int y = 0; y < h.height; ++y)
            for (int x = 0; x < h.width; ++x)
                for (int c = 0; c < h.channels; ++c)
                    img.at(c, y, x) = static_cast<float>(pnm_int(b, pos, path)) / maxval;
    }
    img.source_path = path;
    return img;
}

void save_pnm(const Image& img, const std::string& path, bool color) {
    if (color && img.channels != 3)
        throw ShapeError("save_image: PPM requires a 3-channel image");
    if (!color && img.channels != 1)
        throw ShapeError("save_image: PGM requires a 1-channel image");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << (color ? "P6" : "P5") << "\n" << img.width << " " << img.height << "\n255\n";
    std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width) * img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                row[static_cast<std::size_t>(x) * img.channels + c] =
                    quantize(img.at(c, y, x));
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw IoError("short write to " + path);
}

// --------------------------------------------------------------------------
// PNG (8-bit grayscale / RGB, non-interlaced; zlib handles the compression)

constexpr std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

std::uint32_t be32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    return pb <= pc ? b : c;
}

Image load_png(const std::vector<std::uint8_t>& b, const std::string& path) {
    std::size_t pos = 8;
    int width = 0, height = 0, channels = 0;
    bool seen_ihdr = false;
    std::vector<std::uint8_t> idat;
    while (pos + 8 <= b.size()) {
        const std::uint32_t len = be32(&b[pos]);
        if (pos + 12 + len > b.size())
            throw FormatError(Kind::Truncated, path + ": PNG chunk truncated");
        const char* type = reinterpret_cast<const char*>(&b[pos + 4]);
        const std::uint8_t* data = &b[pos + 8];
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw FormatError(Kind::CorruptHeader, path + ": bad IHDR length");
            width = static_cast<int>(be32(data));
            height = static_cast<int>(be32(data + 4));
            const int depth = data[8], color = data[9], interlace = data[12];
            if (width < 1 || height < 1)
                throw FormatError(Kind::CorruptHeader, path + ": bad PNG dimensions");
            if (depth != 8 || (color != 0 && color != 2) || interlace != 0)
                throw FormatError(Kind::UnsupportedFormat,
                                  path + ": only 8-bit gray/RGB non-interlaced PNG supported");
            channels = color == 0 ? 1 : 3;
            seen_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (!seen_ihdr) throw FormatError(Kind::CorruptHeader, path + ": missing IHDR");
    if (idat.empty()) throw FormatError(Kind::Truncated, path + ": missing IDAT");

    const std::size_t rowbytes = static_cast<std::size_t>(width) * channels;
    std::vector<std::uint8_t> raw((rowbytes + 1) * height);
    {
        z_stream zs{};
        if (inflateInit(&zs) != Z_OK) throw Error(path + ": inflateInit failed");
        zs.next_in = idat.data();
        zs.avail_in = static_cast<uInt>(idat.size());
        zs.next_out = raw.data();
        zs.avail_out = static_cast<uInt>(raw.size());
        const int rc = inflate(&zs, Z_FINISH);
        inflateEnd(&zs);
        if (rc != Z_STREAM_END || zs.total_out != raw.size())
            throw FormatError(Kind::Truncated, path + ": PNG pixel data corrupt or truncated");
    }

    // Undo per-row filtering in place.
    std::vector<std::uint8_t> prev(rowbytes, 0);
    Image img(channels, height, width);
    for (int y = 0; y < height; ++y) {
        std::uint8_t* row = &raw[static_cast<std::size_t>(y) * (rowbytes + 1)];
        const int filter = row[0];
        std::uint8_t* cur = row + 1;
        switch (filter) {
            case 0: break;
            case 1:
                for (std::size_t i = channels; i < rowbytes; ++i) cur[i] += cur[i - channels];
                break;
            case 2:
                for (std::size_t i = 0; i < rowbytes; ++i) cur[i] += prev[i];
                break;
            case 3:
                for (std::size_t i = 0; i < rowbytes; ++i) {
                    const int left = i >= static_cast<std::size_t>(channels)
                                         ? cur[i - channels] : 0;
                    cur[i] += static_cast<std::uint8_t>((left + prev[i]) / 2);
                }
                break;
            case 4:
                for (std::size_t i = 0; i < rowbytes; ++i) {
                    const int left = i >= static_cast<std::size_t>(channels)
                                         ? cur[i - channels] : 0;
                    const int up_left = i >= static_cast<std::size_t>(channels)
                                            ? prev[i - channels] : 0;
                    cur[i] += static_cast<std::uint8_t>(paeth(left, prev[i], up_left));
                }
                break;
            default:
                throw FormatError(Kind::CorruptHeader,
                                  path + ": unknown PNG filter " + std::to_string(filter));
        }
        std::memcpy(prev.data(), cur, rowbytes);
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(c, y, x) =
                    cur[static_cast<std::size_t>(x) * channels + c] / 255.0f;
    }
    img.source_path = path;
    return img;
}

void png_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::vector<std::uint8_t>& data) {
    put_be32(out, static_cast<std::uint32_t>(data.size()));
    const std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const uLong crc =
        crc32(0, out.data() + start, static_cast<uInt>(out.size() - start));
    put_be32(out, static_cast<std::uint32_t>(crc));
}

void save_png(const Image& img, const std::string& path) {
    if (img.channels != 1 && img.channels != 3)
        throw ShapeError("save_image: PNG requires 1 or 3 channels");
    const std::size_t rowbytes = static_cast<std::size_t>(img.width) * img.channels;
    std::vector<std::uint8_t> raw((rowbytes + 1) * img.height);
    for (int y = 0; y < img.height; ++y) {
        std::uint8_t* row = &raw[static_cast<std::size_t>(y) * (rowbytes + 1)];
        row[0] = 0;  // filter: none
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                row[1 + static_cast<std::size_t>(x) * img.channels + c] =
                    quantize(img.at(c, y, x));
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()),
                  6) != Z_OK)
        throw Error(path + ": deflate failed");
    compressed.resize(bound);

    std::vector<std::uint8_t> out(kPngSig, kPngSig + 8);
    std::vector<std::uint8_t> ihdr;
    put_be32(ihdr, static_cast<std::uint32_t>(img.width));
    put_be32(ihdr, static_cast<std::uint32_t>(img.height));
    ihdr.push_back(8);                            // bit depth
    ihdr.push_back(img.channels == 1 ? 0 : 2);    // color type
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);                            // no interlace
    png_chunk(out, "IHDR", ihdr);
    png_chunk(out, "IDAT", compressed);
    png_chunk(out, "IEND", {});

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f.write(reinterpret_cast<const char*>(out.data()),
            static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("short write to " + path);
}

}  // namespace

Image load_image(const std::string& path) {
    if (!std::filesystem::exists(path)) throw IoError("no such file: " + path);
    const std::vector<std::uint8_t> bytes = read_file(path);
    if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0)
        return load_png(bytes, path);
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] >= '2' && bytes[1] <= '6')
        return load_pnm(bytes, path);
    throw FormatError(Kind::UnsupportedFormat, path + ": not a PNG, PGM, or PPM file");
}

void save_image(const Image& img, const std::string& path) {
    if (img.width < 1 || img.height < 1 || img.pixels.empty())
        throw ShapeError("save_image: empty image");
    const auto ext = std::filesystem::path(path).extension().string();
    std::string lower;
    for (char ch : ext) lower.push_back(static_cast<char>(std::tolower(ch)));
    if (lower == ".png")
        save_png(img, path);
    else if (lower == ".pgm")
        save_pnm(img, path, false);
    else if (lower == ".ppm")
        save_pnm(img, path, true);
    else
        throw FormatError(Kind::UnsupportedFormat,
                          "save_image: unsupported extension '" + ext + "' for " + path);
}

Image to_grayscale(const Image& img) {
    if (img.channels == 1) throw ShapeError("to_grayscale: image is already grayscale");
    if (img.channels != 3) throw ShapeError("to_grayscale: expected 3 channels");
    Image out(1, img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            out.at(0, y, x) = 0.299f * img.at(0, y, x) + 0.587f * img.at(1, y, x) +
                              0.114f * img.at(2, y, x);
    out.source_path = img.source_path;
    return out;
}

Image to_color(const Image& img) {
    if (img.channels == 3) throw ShapeError("to_color: image is already 3-channel");
    if (img.channels != 1) throw ShapeError("to_color: expected 1 channel");
    Image out(3, img.height, img.width);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) out.at(c, y, x) = img.at(0, y, x);
    out.source_path = img.source_path;
    return out;
}

}  // namespace tsdn
