#include "desyre/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace desyre::io {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("dsr: truncated file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& os, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw std::runtime_error("dsr: truncated tensor data");
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

}  // namespace

void write_dsr(const std::filesystem::path& path,
               const std::vector<std::pair<std::string, Tensor>>& tensors) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("dsr: cannot open for write: " + path.string());
    os.write("DSR1", 4);
    for (const auto& [name, t] : tensors) {
        put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(os, static_cast<std::uint32_t>(t.shape.size()));
        for (int e : t.shape) put_u32(os, static_cast<std::uint32_t>(e));
        for (double v : t.data) put_f64(os, v);
    }
    if (!os) throw std::runtime_error("dsr: write failed: " + path.string());
}

std::vector<std::pair<std::string, Tensor>> read_dsr(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("dsr: cannot open: " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "DSR1", 4) != 0)
        throw std::runtime_error("dsr: bad magic in " + path.string());
    std::vector<std::pair<std::string, Tensor>> out;
    while (true) {
        is.peek();
        if (is.eof()) break;
        const std::uint32_t name_len = get_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const std::uint32_t rank = get_u32(is);
        std::vector<int> shape(rank);
        for (auto& e : shape) e = static_cast<int>(get_u32(is));
        const std::int64_t n = Tensor::numel_of(shape);
        std::vector<double> data(static_cast<std::size_t>(n));
        for (auto& v : data) v = get_f64(is);
        out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    return out;
}

void write_image_dsr(const std::filesystem::path& path, const Image& u) {
    write_dsr(path, {{"image", Tensor({u.height, u.width}, u.pixels)}});
}

Image read_image_dsr(const std::filesystem::path& path) {
    auto tensors = read_dsr(path);
    for (const auto& [name, t] : tensors)
        if (name == "image") return Image::from_tensor(t);
    if (tensors.size() == 1) return Image::from_tensor(tensors.front().second);
    throw std::runtime_error("dsr: no image tensor in " + path.string());
}

namespace {
std::string band_name(int level, int band) {
    static const char* kBands[3] = {"hl", "lh", "hh"};
    return "l" + std::to_string(level) + "." + kBands[band];
}
}  // namespace

void write_pyramid_dsr(const std::filesystem::path& path, const CoeffPyramid& xi) {
    xi.check_consistent();
    std::vector<std::pair<std::string, Tensor>> tensors;
    std::string order;
    for (int l = 1; l <= xi.shape.levels; ++l)
        for (int b = 0; b < 3; ++b) {
            tensors.emplace_back(band_name(l, b),
                                 xi.detail[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(b)]);
            order += band_name(l, b) + "\n";
        }
    tensors.emplace_back("approx", xi.approx);
    order += "approx\n";
    write_dsr(path, tensors);
    write_text_file(path.string() + ".bands.txt", order);
}

CoeffPyramid read_pyramid_dsr(const std::filesystem::path& path) {
    const auto tensors = read_dsr(path);
    if (tensors.empty() || tensors.back().first != "approx")
        throw std::runtime_error("pyramid: approximation band must come last in " + path.string());
    const int levels = (static_cast<int>(tensors.size()) - 1) / 3;
    if (static_cast<int>(tensors.size()) != 3 * levels + 1)
        throw std::runtime_error("pyramid: band count is not level-major in " + path.string());
    CoeffPyramid xi;
    xi.shape.levels = levels;
    xi.detail.resize(static_cast<std::size_t>(levels));
    for (int l = 1; l <= levels; ++l)
        for (int b = 0; b < 3; ++b) {
            const auto& [name, t] = tensors[static_cast<std::size_t>(3 * (l - 1) + b)];
            if (name != band_name(l, b))
                throw std::runtime_error("pyramid: unexpected band order (" + name + ") in " +
                                         path.string());
            xi.detail[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(b)] = t;
        }
    xi.approx = tensors.back().second;
    for (int l = 1; l <= levels; ++l)
        xi.shape.detail_channels.push_back(xi.detail[static_cast<std::size_t>(l - 1)][0].dim(0));
    xi.shape.approx_channels = xi.approx.dim(0);
    xi.shape.image_side = xi.detail[0][0].dim(1) * 2;
    xi.check_consistent();
    return xi;
}

void write_sinogram_dsr(const std::filesystem::path& path, const Sinogram& s) {
    write_dsr(path, {{"sinogram", Tensor({s.geom.n_theta, s.geom.n_s}, s.data)},
                     {"geometry", Tensor({3}, {static_cast<double>(s.geom.n_theta),
                                               static_cast<double>(s.geom.n_s),
                                               static_cast<double>(s.geom.side)})}});
}

Sinogram read_sinogram_dsr(const std::filesystem::path& path) {
    Tensor data, geom_t;
    for (auto& [name, t] : read_dsr(path)) {
        if (name == "sinogram") data = std::move(t);
        if (name == "geometry") geom_t = std::move(t);
    }
    if (data.data.empty() || geom_t.numel() != 3)
        throw std::runtime_error("sinogram file is missing tensors: " + path.string());
    RadonGeometry g;
    g.n_theta = static_cast<int>(geom_t.data[0]);
    g.n_s = static_cast<int>(geom_t.data[1]);
    g.side = static_cast<int>(geom_t.data[2]);
    Sinogram s(g);
    s.data = std::move(data.data);
    return s;
}

void write_pgm16(const std::filesystem::path& path, const Image& u) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("pgm: cannot open for write: " + path.string());
    os << "P5\n" << u.width << " " << u.height << "\n65535\n";
    for (double p : u.pixels) {
        double c = std::clamp(p, 0.0, 1.0);
        const auto q = static_cast<std::uint16_t>(std::lround(c * 65535.0));
        unsigned char b[2] = {static_cast<unsigned char>(q >> 8), static_cast<unsigned char>(q)};
        os.write(reinterpret_cast<const char*>(b), 2);
    }
}

void write_manifest(const std::filesystem::path& path,
                    const std::vector<std::pair<std::string, std::string>>& entries) {
    std::ostringstream os;
    for (const auto& [k, v] : entries) os << k << " = " << v << "\n";
    write_text_file(path, os.str());
}

std::map<std::string, std::string> read_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("manifest: cannot open: " + path.string());
    std::map<std::string, std::string> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return out;
}

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

std::uint64_t file_hash(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("hash: cannot open: " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[4096];
    while (is) {
        is.read(buf, sizeof(buf));
        for (std::streamsize i = 0; i < is.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& contents) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path.string());
    os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
}

}  // namespace desyre::io
