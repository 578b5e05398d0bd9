#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "desyre/image.hpp"
#include "desyre/radon.hpp"

namespace desyre {

/// Synthetic ellipse-phantom generator settings. Side must be a power of
/// two so L-level Haar pyramids apply.
struct PhantomSpec {
    int side = 64;
    int min_ellipses = 4;
    int max_ellipses = 10;
    double min_intensity = -0.5;
    double max_intensity = 1.0;
    std::uint64_t seed = 7;

    void validate() const;
};

/// Sum of rotated ellipse indicators with random centers, axes and
/// intensities, clipped at zero and rescaled to [0, 1]. A pure function of
/// (spec, index).
Image gen_ellipse_phantom(const PhantomSpec& spec, int index);

/// Classic 10-ellipse head phantom rescaled to [0, 1].
Image shepp_logan(int side);

struct NoiseSpec {
    double level = 0.0;  // relative, in [0, 1)
    std::uint64_t seed = 0;

    void validate() const;
};

/// Adds i.i.d. Gaussian noise with sigma = level * ||v||_2 / sqrt(N) and
/// returns the realized delta = ||z||_2.
std::pair<Sinogram, double> add_noise(const Sinogram& v, const NoiseSpec& noise);

/// Train/test bookkeeping for a generated dataset. Index sets are
/// disjoint by construction (a seeded permutation split).
struct DatasetMeta {
    PhantomSpec spec;
    int train_count = 200;
    int test_count = 40;
    std::uint64_t split_seed = 13;

    int total() const { return train_count + test_count; }
    std::vector<int> train_indices() const;
    std::vector<int> test_indices() const;
};

/// Writes img_%05d.dsr files plus manifest.txt into dir.
void save_dataset(const std::filesystem::path& dir, const DatasetMeta& meta,
                  bool export_pgm = false);
DatasetMeta load_dataset_meta(const std::filesystem::path& dir);
Image load_dataset_image(const std::filesystem::path& dir, int index);

}  // namespace desyre
