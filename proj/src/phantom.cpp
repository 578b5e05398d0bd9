#include "desyre/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "desyre/io.hpp"
#include "desyre/rng.hpp"

namespace desyre {

namespace {

struct Ellipse {
    double cx, cy;      // center in [-1,1]^2
    double ax, ay;      // semi-axes
    double phi;         // rotation
    double intensity;
};

void render(Image& u, const Ellipse& e) {
    const int side = u.width;
    const double pw = 2.0 / side;
    const double cp = std::cos(e.phi), sp = std::sin(e.phi);
    for (int iy = 0; iy < side; ++iy) {
        const double y = -1.0 + (iy + 0.5) * pw;
        for (int ix = 0; ix < side; ++ix) {
            const double x = -1.0 + (ix + 0.5) * pw;
            const double dx = x - e.cx, dy = y - e.cy;
            const double rx = (cp * dx + sp * dy) / e.ax;
            const double ry = (-sp * dx + cp * dy) / e.ay;
            if (rx * rx + ry * ry <= 1.0) u.at(iy, ix) += e.intensity;
        }
    }
}

void clip_and_rescale(Image& u) {
    for (double& v : u.pixels) v = std::max(v, 0.0);
    const double mx = max_pixel(u);
    if (mx > 0.0)
        for (double& v : u.pixels) v /= mx;
}

}  // namespace

void PhantomSpec::validate() const {
    if (side < 2 || (side & (side - 1)) != 0)
        throw std::invalid_argument("PhantomSpec: side must be a power of two, got " +
                                    std::to_string(side));
    if (min_ellipses < 0 || max_ellipses < min_ellipses)
        throw std::invalid_argument("PhantomSpec: invalid ellipse count range");
    if (max_intensity < min_intensity)
        throw std::invalid_argument("PhantomSpec: invalid intensity range");
}

Image gen_ellipse_phantom(const PhantomSpec& spec, int index) {
    spec.validate();
    Rng rng(Rng::mix(spec.seed, static_cast<std::uint64_t>(index)));
    Image u(spec.side, spec.side);
    const int count =
        spec.min_ellipses +
        (spec.max_ellipses > spec.min_ellipses
             ? static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.max_ellipses - spec.min_ellipses + 1)))
             : 0);
    for (int k = 0; k < count; ++k) {
        Ellipse e;
        e.cx = rng.uniform(-0.55, 0.55);
        e.cy = rng.uniform(-0.55, 0.55);
        e.ax = rng.uniform(0.06, 0.38);
        e.ay = rng.uniform(0.06, 0.38);
        e.phi = rng.uniform(0.0, 3.14159265358979323846);
        e.intensity = rng.uniform(spec.min_intensity, spec.max_intensity);
        render(u, e);
    }
    clip_and_rescale(u);
    return u;
}

Image shepp_logan(int side) {
    if (side < 16) throw std::invalid_argument("shepp_logan: side must be >= 16");
    // Classic parameter table: intensity, semi-axes, center, rotation (deg).
    static const double tbl[10][6] = {
        {2.0, 0.69, 0.92, 0.0, 0.0, 0.0},
        {-0.98, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
        {-0.02, 0.1100, 0.3100, 0.22, 0.0, -18.0},
        {-0.02, 0.1600, 0.4100, -0.22, 0.0, 18.0},
        {0.01, 0.2100, 0.2500, 0.0, 0.35, 0.0},
        {0.01, 0.0460, 0.0460, 0.0, 0.1, 0.0},
        {0.01, 0.0460, 0.0460, 0.0, -0.1, 0.0},
        {0.01, 0.0460, 0.0230, -0.08, -0.605, 0.0},
        {0.01, 0.0230, 0.0230, 0.0, -0.606, 0.0},
        {0.01, 0.0230, 0.0460, 0.06, -0.605, 0.0},
    };
    Image u(side, side);
    for (const auto& row : tbl) {
        Ellipse e;
        e.intensity = row[0];
        e.ax = row[1];
        e.ay = row[2];
        e.cx = row[3];
        e.cy = row[4];
        e.phi = row[5] * 3.14159265358979323846 / 180.0;
        render(u, e);
    }
    clip_and_rescale(u);
    return u;
}

void NoiseSpec::validate() const {
    if (level < 0.0 || level >= 1.0)
        throw std::invalid_argument("NoiseSpec: level must lie in [0, 1)");
}

std::pair<Sinogram, double> add_noise(const Sinogram& v, const NoiseSpec& noise) {
    noise.validate();
    if (!all_finite(v.data)) throw std::invalid_argument("add_noise: sinogram must be finite");
    if (noise.level == 0.0) return {v, 0.0};
    const double n = static_cast<double>(v.data.size());
    const double sigma = noise.level * norm2(v.data) / std::sqrt(n);
    Rng rng(noise.seed);
    Sinogram out = v;
    double delta_sq = 0.0;
    for (double& x : out.data) {
        const double z = sigma * rng.gaussian();
        x += z;
        delta_sq += z * z;
    }
    return {out, std::sqrt(delta_sq)};
}

std::vector<int> DatasetMeta::train_indices() const {
    std::vector<int> idx(static_cast<std::size_t>(total()));
    for (int i = 0; i < total(); ++i) idx[static_cast<std::size_t>(i)] = i;
    Rng rng(split_seed);
    for (int i = total() - 1; i > 0; --i)
        std::swap(idx[static_cast<std::size_t>(i)],
                  idx[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(i + 1)))]);
    idx.resize(static_cast<std::size_t>(train_count));
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::vector<int> DatasetMeta::test_indices() const {
    const auto train = train_indices();
    std::vector<bool> in_train(static_cast<std::size_t>(total()), false);
    for (int i : train) in_train[static_cast<std::size_t>(i)] = true;
    std::vector<int> idx;
    idx.reserve(static_cast<std::size_t>(test_count));
    for (int i = 0; i < total(); ++i)
        if (!in_train[static_cast<std::size_t>(i)]) idx.push_back(i);
    return idx;
}

namespace {
std::string image_filename(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "img_%05d.dsr", index);
    return buf;
}
}  // namespace

void save_dataset(const std::filesystem::path& dir, const DatasetMeta& meta, bool export_pgm) {
    std::filesystem::create_directories(dir);
    for (int i = 0; i < meta.total(); ++i) {
        const Image u = gen_ellipse_phantom(meta.spec, i);
        io::write_image_dsr(dir / image_filename(i), u);
        if (export_pgm) io::write_pgm16(dir / (image_filename(i) + ".pgm"), u);
    }
    io::write_manifest(dir / "manifest.txt",
                       {{"side", std::to_string(meta.spec.side)},
                        {"count", std::to_string(meta.total())},
                        {"seed", std::to_string(meta.spec.seed)},
                        {"split", std::to_string(meta.train_count) + ":" +
                                      std::to_string(meta.test_count) + ":" +
                                      std::to_string(meta.split_seed)},
                        {"min_ellipses", std::to_string(meta.spec.min_ellipses)},
                        {"max_ellipses", std::to_string(meta.spec.max_ellipses)},
                        {"min_intensity", io::fmt(meta.spec.min_intensity)},
                        {"max_intensity", io::fmt(meta.spec.max_intensity)}});
}

DatasetMeta load_dataset_meta(const std::filesystem::path& dir) {
    const auto m = io::read_manifest(dir / "manifest.txt");
    DatasetMeta meta;
    meta.spec.side = std::stoi(m.at("side"));
    meta.spec.seed = std::stoull(m.at("seed"));
    if (auto it = m.find("min_ellipses"); it != m.end()) meta.spec.min_ellipses = std::stoi(it->second);
    if (auto it = m.find("max_ellipses"); it != m.end()) meta.spec.max_ellipses = std::stoi(it->second);
    if (auto it = m.find("min_intensity"); it != m.end()) meta.spec.min_intensity = std::stod(it->second);
    if (auto it = m.find("max_intensity"); it != m.end()) meta.spec.max_intensity = std::stod(it->second);
    const std::string split = m.at("split");
    const auto c1 = split.find(':');
    const auto c2 = split.find(':', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
        throw std::runtime_error("dataset manifest: malformed split entry '" + split + "'");
    meta.train_count = std::stoi(split.substr(0, c1));
    meta.test_count = std::stoi(split.substr(c1 + 1, c2 - c1 - 1));
    meta.split_seed = std::stoull(split.substr(c2 + 1));
    if (meta.total() != std::stoi(m.at("count")))
        throw std::runtime_error("dataset manifest: count does not match split");
    return meta;
}

Image load_dataset_image(const std::filesystem::path& dir, int index) {
    return io::read_image_dsr(dir / image_filename(index));
}

}  // namespace desyre
