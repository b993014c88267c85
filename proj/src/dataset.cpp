#include "sarfah/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <stdexcept>

#include "sarfah/rng.hpp"

namespace sarfah {

namespace fs = std::filesystem;

Corpus ingest_corpus(const std::string& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("corpus: not a directory: " + dir);
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
        if (ext == ".pgm" || ext == ".png") files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());

    Corpus corpus;
    for (const auto& f : files) {
        try {
            Image img = load_image(f);
            const uint64_t sum = image_checksum(img);
            corpus.images.push_back({f, std::move(img), sum});
        } catch (const std::exception& e) {
            std::cerr << "warning: skipping " << f << ": " << e.what() << "\n";
        }
    }
    if (corpus.images.empty())
        throw std::runtime_error("corpus: no readable grayscale images in " + dir +
                                 " (count 0)");
    return corpus;
}

Image dihedral_apply(const Image& img, int k) {
    if (k < 0 || k > 7) throw std::invalid_argument("dihedral_apply: k must be in [0, 8)");
    Image cur = img;
    if (k & 4) {  // horizontal flip
        Image flipped(cur.h, cur.w);
        for (int64_t y = 0; y < cur.h; ++y)
            for (int64_t x = 0; x < cur.w; ++x) flipped.at(y, x) = cur.at(y, cur.w - 1 - x);
        cur = std::move(flipped);
    }
    const int rot = k & 3;
    for (int r = 0; r < rot; ++r) {
        if (cur.h != cur.w && (r == 0) && (rot % 2 == 1) && img.h != img.w)
            throw std::invalid_argument("dihedral_apply: odd rotations need a square image");
        Image rotated(cur.w, cur.h);  // 90 degrees counterclockwise
        for (int64_t y = 0; y < cur.h; ++y)
            for (int64_t x = 0; x < cur.w; ++x) rotated.at(cur.w - 1 - x, y) = cur.at(y, x);
        cur = std::move(rotated);
    }
    return cur;
}

std::vector<Patch> make_patches(const Corpus& corpus, int64_t patch_size, bool augment,
                                uint64_t seed) {
    if (patch_size < 1) throw std::invalid_argument("make_patches: patch size must be positive");
    std::vector<Patch> out;
    int64_t emitted = 0;
    for (size_t i = 0; i < corpus.images.size(); ++i) {
        const Image& img = corpus.images[i].image;
        if (img.h < patch_size || img.w < patch_size) {
            std::cerr << "warning: " << corpus.images[i].path << " smaller than patch size, skipped\n";
            continue;
        }
        const int64_t rows = img.h / patch_size;
        const int64_t cols = img.w / patch_size;
        for (int64_t gy = 0; gy < rows; ++gy)
            for (int64_t gx = 0; gx < cols; ++gx) {
                Image patch(patch_size, patch_size);
                for (int64_t y = 0; y < patch_size; ++y)
                    for (int64_t x = 0; x < patch_size; ++x)
                        patch.at(y, x) = img.at(gy * patch_size + y, gx * patch_size + x);
                if (augment) {
                    Rng rng(mix_seed(seed, static_cast<uint64_t>(emitted)));
                    patch = dihedral_apply(patch, static_cast<int>(rng.next_u64() % 8));
                }
                out.push_back({std::move(patch), static_cast<int64_t>(i), emitted});
                ++emitted;
            }
    }
    return out;
}

}  // namespace sarfah
