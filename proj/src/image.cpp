#include "sarfah/image.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sarfah {

namespace {

int next_pnm_token(std::istream& is, std::string& tok) {
    tok.clear();
    int c;
    while ((c = is.get()) != EOF) {
        if (c == '#') {
            while ((c = is.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (!std::isspace(c)) break;
    }
    if (c == EOF) return 0;
    do {
        tok.push_back(static_cast<char>(c));
        c = is.get();
    } while (c != EOF && !std::isspace(c));
    return 1;
}

}  // namespace

Image read_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("pgm: cannot open " + path);
    std::string tok;
    if (!next_pnm_token(is, tok)) throw std::runtime_error("pgm: empty file " + path);
    const bool binary = tok == "P5";
    if (!binary && tok != "P2") throw std::runtime_error("pgm: unsupported format " + tok);
    auto read_int = [&]() -> long {
        if (!next_pnm_token(is, tok)) throw std::runtime_error("pgm: truncated header in " + path);
        return std::stol(tok);
    };
    const long w = read_int();
    const long h = read_int();
    const long maxval = read_int();
    if (w <= 0 || h <= 0) throw std::runtime_error("pgm: bad dimensions in " + path);
    if (maxval != 255) throw std::runtime_error("pgm: only 8-bit (maxval 255) supported: " + path);
    Image img(h, w);
    if (binary) {
        std::vector<unsigned char> buf(static_cast<size_t>(w * h));
        is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!is) throw std::runtime_error("pgm: truncated pixel data in " + path);
        for (size_t i = 0; i < buf.size(); ++i) img.px[i] = static_cast<double>(buf[i]);
    } else {
        for (int64_t i = 0; i < img.size(); ++i) {
            if (!next_pnm_token(is, tok)) throw std::runtime_error("pgm: truncated pixels in " + path);
            img.px[i] = std::stod(tok);
        }
    }
    return img;
}

void write_pgm(const std::string& path, const Image& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("pgm: cannot open " + path + " for writing");
    os << "P5\n" << img.w << " " << img.h << "\n255\n";
    std::vector<unsigned char> buf(static_cast<size_t>(img.size()));
    for (int64_t i = 0; i < img.size(); ++i) {
        double v = std::round(img.px[i]);
        v = std::max(0.0, std::min(255.0, v));
        buf[i] = static_cast<unsigned char>(v);
    }
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!os) throw std::runtime_error("pgm: write failed for " + path);
}

namespace {

uint32_t be32(const unsigned char* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

Image read_png_gray8(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("png: cannot open " + path);
    unsigned char sig[8];
    is.read(reinterpret_cast<char*>(sig), 8);
    static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    if (!is || std::memcmp(sig, png_sig, 8) != 0)
        throw std::runtime_error("png: bad signature in " + path);

    uint32_t w = 0, h = 0;
    bool have_ihdr = false;
    std::vector<unsigned char> idat;
    for (;;) {
        unsigned char hdr[8];
        is.read(reinterpret_cast<char*>(hdr), 8);
        if (!is) throw std::runtime_error("png: truncated chunk in " + path);
        const uint32_t len = be32(hdr);
        const std::string type(reinterpret_cast<char*>(hdr) + 4, 4);
        std::vector<unsigned char> chunk(len);
        if (len) is.read(reinterpret_cast<char*>(chunk.data()), len);
        is.seekg(4, std::ios::cur);  // skip CRC
        if (!is) throw std::runtime_error("png: truncated chunk body in " + path);
        if (type == "IHDR") {
            if (len != 13) throw std::runtime_error("png: bad IHDR in " + path);
            w = be32(chunk.data());
            h = be32(chunk.data() + 4);
            const int bit_depth = chunk[8], color_type = chunk[9], interlace = chunk[12];
            if (bit_depth != 8 || color_type != 0 || interlace != 0)
                throw std::runtime_error("png: only 8-bit grayscale non-interlaced supported: " +
                                         path);
            have_ihdr = true;
        } else if (type == "IDAT") {
            idat.insert(idat.end(), chunk.begin(), chunk.end());
        } else if (type == "IEND") {
            break;
        }
    }
    if (!have_ihdr || idat.empty()) throw std::runtime_error("png: missing IHDR/IDAT in " + path);

    const size_t raw_len = static_cast<size_t>(h) * (static_cast<size_t>(w) + 1);
    std::vector<unsigned char> raw(raw_len);
    uLongf dest_len = raw_len;
    const int rc = uncompress(raw.data(), &dest_len, idat.data(), idat.size());
    if (rc != Z_OK || dest_len != raw_len)
        throw std::runtime_error("png: inflate failed for " + path);

    Image img(h, w);
    std::vector<unsigned char> prev(w, 0), cur(w, 0);
    for (uint32_t y = 0; y < h; ++y) {
        const unsigned char* row = raw.data() + static_cast<size_t>(y) * (w + 1);
        const int filter = row[0];
        for (uint32_t x = 0; x < w; ++x) {
            const int rv = row[1 + x];
            const int left = x > 0 ? cur[x - 1] : 0;
            const int up = prev[x];
            const int ul = x > 0 ? prev[x - 1] : 0;
            int v;
            switch (filter) {
                case 0: v = rv; break;
                case 1: v = rv + left; break;
                case 2: v = rv + up; break;
                case 3: v = rv + (left + up) / 2; break;
                case 4: v = rv + paeth(left, up, ul); break;
                default: throw std::runtime_error("png: unknown filter in " + path);
            }
            cur[x] = static_cast<unsigned char>(v & 0xff);
            img.at(y, x) = static_cast<double>(cur[x]);
        }
        std::swap(prev, cur);
    }
    return img;
}

Image load_image(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("image: cannot open " + path);
    unsigned char head[2] = {0, 0};
    is.read(reinterpret_cast<char*>(head), 2);
    is.close();
    if (head[0] == 'P' && (head[1] == '5' || head[1] == '2')) return read_pgm(path);
    if (head[0] == 0x89 && head[1] == 'P') return read_png_gray8(path);
    throw std::runtime_error("image: unsupported file type: " + path);
}

uint64_t image_checksum(const Image& img) {
    // FNV-1a over the raw pixel bytes
    uint64_t hash = 0xcbf29ce484222325ULL;
    auto mix = [&](const void* p, size_t n) {
        const unsigned char* b = static_cast<const unsigned char*>(p);
        for (size_t i = 0; i < n; ++i) {
            hash ^= b[i];
            hash *= 0x100000001b3ULL;
        }
    };
    mix(&img.h, sizeof(img.h));
    mix(&img.w, sizeof(img.w));
    mix(img.px.data(), img.px.size() * sizeof(double));
    return hash;
}

}  // namespace sarfah
