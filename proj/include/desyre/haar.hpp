#pragma once

#include <array>
#include <vector>

#include "desyre/image.hpp"
#include "desyre/tensor.hpp"

namespace desyre {

/// Multiscale coefficient layout. Detail bands live at levels 1..L with
/// spatial extent side/2^l; one approximation band sits at level L. For a
/// plain image transform every band has one channel; the learned nets use
/// wider bands.
struct PyramidShape {
    int levels = 0;
    int image_side = 0;
    std::vector<int> detail_channels;  // per level, size == levels
    int approx_channels = 1;

    int level_side(int level) const { return image_side >> level; }  // level in 1..levels
    std::int64_t coeff_count() const;
    bool operator==(const PyramidShape&) const = default;

    static PyramidShape plain(int image_side, int levels);
    void validate() const;
};

/// Coefficient stack xi. Bands are tensors [C, s, s]; band order within a
/// level is HL, LH, HH. Flattened order is level-major with the
/// approximation band last; that order is the file/solver contract.
struct CoeffPyramid {
    PyramidShape shape;
    std::vector<std::array<Tensor, 3>> detail;  // [level][HL, LH, HH]
    Tensor approx;

    static CoeffPyramid zeros(const PyramidShape& shape);
    std::vector<double> flatten() const;
    static CoeffPyramid unflatten(const PyramidShape& shape, const std::vector<double>& flat);
    void check_consistent() const;
};

double norm2(const CoeffPyramid& p);

/// Orthonormal separable 2-D Haar analysis, L levels. Requires the image
/// side to be divisible by 2^L. Energy preserving: ||coeffs|| = ||u||.
CoeffPyramid haar_analysis(const Image& u, int levels);

/// Exact inverse (= adjoint) of haar_analysis.
Image haar_synthesis(const CoeffPyramid& coeffs);

}  // namespace desyre
