#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sarfah/image.hpp"

namespace sarfah {

struct CorpusImage {
    std::string path;
    Image image;
    uint64_t checksum;
};

struct Corpus {
    std::vector<CorpusImage> images;
};

// Reads every 8-bit grayscale PGM/PNG in the directory in lexicographic
// order. Unreadable or unsupported files are skipped with a warning on
// stderr; an empty corpus is fatal.
Corpus ingest_corpus(const std::string& dir);

// k in [0, 8): the dihedral group of the square (rotations by 90 degrees,
// optionally after a horizontal flip). Requires a square image for odd
// rotations.
Image dihedral_apply(const Image& img, int k);

struct Patch {
    Image clean;
    int64_t source_image;
    int64_t index;  // position in the emitted stream
};

// Non-overlapping grid patches in deterministic order (image order, then
// row-major grid). Augmentation samples one dihedral transform per patch from
// the seed; with augment=false the stream is seed-independent. Undersized
// images are skipped with a warning.
std::vector<Patch> make_patches(const Corpus& corpus, int64_t patch_size, bool augment,
                                uint64_t seed);

}  // namespace sarfah
