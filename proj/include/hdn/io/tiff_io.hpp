#pragma once

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <string>
#include <tiffio.h>
#include <vector>

#include "hdn/core/image.hpp"

namespace hdn {

// Single-channel TIFF I/O. Reads 8/16-bit unsigned and 32-bit float data
// (first sample when multiple are present); writes 32-bit float by default
// or 16-bit unsigned on request.

inline Image read_tiff(const std::string& path) {
    if (!std::filesystem::exists(path)) throw FileNotFoundError("no such image: " + path);
    TIFF* tif = TIFFOpen(path.c_str(), "r");
    if (!tif) throw FileNotFoundError("cannot open TIFF: " + path);
    uint32_t w = 0, h = 0;
    uint16_t bits = 0, fmt = SAMPLEFORMAT_UINT, spp = 1;
    TIFFGetField(tif, TIFFTAG_IMAGEWIDTH, &w);
    TIFFGetField(tif, TIFFTAG_IMAGELENGTH, &h);
    TIFFGetField(tif, TIFFTAG_BITSPERSAMPLE, &bits);
    TIFFGetFieldDefaulted(tif, TIFFTAG_SAMPLEFORMAT, &fmt);
    TIFFGetFieldDefaulted(tif, TIFFTAG_SAMPLESPERPIXEL, &spp);
    if (w == 0 || h == 0) {
        TIFFClose(tif);
        throw ShapeError("empty TIFF: " + path);
    }
    Image img(static_cast<int>(h), static_cast<int>(w));
    const tmsize_t scanline = TIFFScanlineSize(tif);
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(scanline));
    for (uint32_t y = 0; y < h; ++y) {
        if (TIFFReadScanline(tif, buf.data(), y) < 0) {
            TIFFClose(tif);
            throw ShapeError("TIFF scanline read failed: " + path);
        }
        for (uint32_t x = 0; x < w; ++x) {
            const std::size_t off = static_cast<std::size_t>(x) * spp;
            float v = 0;
            if (fmt == SAMPLEFORMAT_IEEEFP && bits == 32) {
                float f;
                std::memcpy(&f, buf.data() + (off * 4), 4);
                v = f;
            } else if (bits == 16) {
                uint16_t u;
                std::memcpy(&u, buf.data() + (off * 2), 2);
                v = static_cast<float>(u);
            } else if (bits == 8) {
                v = static_cast<float>(buf[off]);
            } else {
                TIFFClose(tif);
                throw ShapeError("unsupported TIFF sample format in " + path);
            }
            img.at(static_cast<int>(y), static_cast<int>(x)) = v;
        }
    }
    TIFFClose(tif);
    return img;
}

inline void write_tiff(const std::string& path, const Image& img, int bits = 32) {
    TIFF* tif = TIFFOpen(path.c_str(), "w");
    if (!tif) throw FileNotFoundError("cannot create TIFF: " + path);
    TIFFSetField(tif, TIFFTAG_IMAGEWIDTH, static_cast<uint32_t>(img.width));
    TIFFSetField(tif, TIFFTAG_IMAGELENGTH, static_cast<uint32_t>(img.height));
    TIFFSetField(tif, TIFFTAG_SAMPLESPERPIXEL, 1);
    TIFFSetField(tif, TIFFTAG_PLANARCONFIG, PLANARCONFIG_CONTIG);
    TIFFSetField(tif, TIFFTAG_PHOTOMETRIC, PHOTOMETRIC_MINISBLACK);
    TIFFSetField(tif, TIFFTAG_COMPRESSION, COMPRESSION_NONE);
    TIFFSetField(tif, TIFFTAG_ROWSPERSTRIP, 1);
    if (bits == 32) {
        TIFFSetField(tif, TIFFTAG_BITSPERSAMPLE, 32);
        TIFFSetField(tif, TIFFTAG_SAMPLEFORMAT, SAMPLEFORMAT_IEEEFP);
        for (int y = 0; y < img.height; ++y)
            TIFFWriteScanline(tif, const_cast<float*>(img.px.data() + static_cast<std::size_t>(y) * img.width),
                              static_cast<uint32_t>(y));
    } else if (bits == 16) {
        TIFFSetField(tif, TIFFTAG_BITSPERSAMPLE, 16);
        TIFFSetField(tif, TIFFTAG_SAMPLEFORMAT, SAMPLEFORMAT_UINT);
        std::vector<uint16_t> row(static_cast<std::size_t>(img.width));
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x)
                row[static_cast<std::size_t>(x)] = static_cast<uint16_t>(
                    std::clamp(std::lround(img.at(y, x)), 0l, 65535l));
            TIFFWriteScanline(tif, row.data(), static_cast<uint32_t>(y));
        }
    } else {
        TIFFClose(tif);
        throw ConfigError("write_tiff: bits must be 16 or 32");
    }
    TIFFClose(tif);
}

// Lexicographically ordered *.tif / *.tiff files in a directory.
inline std::vector<std::string> list_tiffs(const std::string& dir) {
    if (!std::filesystem::is_directory(dir)) throw FileNotFoundError("no such directory: " + dir);
    std::vector<std::string> out;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string ext = e.path().extension().string();
        if (ext == ".tif" || ext == ".tiff") out.push_back(e.path().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline std::vector<Image> read_tiff_dir(const std::string& dir) {
    std::vector<Image> out;
    for (const auto& p : list_tiffs(dir)) out.push_back(read_tiff(p));
    if (out.empty()) throw FileNotFoundError("no TIFF images in " + dir);
    return out;
}

} // namespace hdn
