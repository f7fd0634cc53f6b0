#include "ncm/dataset_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace ncm {

// The format is little-endian; this implementation targets little-endian
// hosts (asserted at compile time).
static_assert(std::endian::native == std::endian::little,
              "NCM1 I/O assumes a little-endian host");

namespace {

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void put_f64(std::ostream& os, double v) { os.write(reinterpret_cast<const char*>(&v), 8); }

std::uint32_t get_u32(std::istream& is) {
    std::uint32_t v;
    if (!is.read(reinterpret_cast<char*>(&v), 4)) throw FormatError("NCM1: truncated file");
    return v;
}
std::uint64_t get_u64(std::istream& is) {
    std::uint64_t v;
    if (!is.read(reinterpret_cast<char*>(&v), 8)) throw FormatError("NCM1: truncated file");
    return v;
}
double get_f64(std::istream& is) {
    double v;
    if (!is.read(reinterpret_cast<char*>(&v), 8)) throw FormatError("NCM1: truncated file");
    return v;
}

} // namespace

void write_ncm1(const std::string& path, const Dataset& ds) {
    ds.validate();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("NCM1: cannot open for writing: " + path);

    const Trajectory& first = ds.trajectories.front();
    os.write("NCM1", 4);
    put_u32(os, 1u);  // version
    put_u32(os, static_cast<std::uint32_t>(ds.equation));
    put_u32(os, static_cast<std::uint32_t>(first.grid.n_x));
    put_u32(os, static_cast<std::uint32_t>(ds.trajectories.size()));
    put_u32(os, static_cast<std::uint32_t>(first.n_snapshots));
    put_u32(os, first.derivatives ? 1u : 0u);
    put_f64(os, first.grid.length);
    put_f64(os, first.t0);
    put_f64(os, first.dt_snap);
    put_u64(os, ds.seed);
    for (Split s : ds.splits) {
        char b = static_cast<char>(s);
        os.write(&b, 1);
    }
    for (const Trajectory& tr : ds.trajectories)
        os.write(reinterpret_cast<const char*>(tr.states.data()),
                 static_cast<std::streamsize>(tr.states.size() * sizeof(double)));
    if (first.derivatives)
        for (const Trajectory& tr : ds.trajectories)
            os.write(reinterpret_cast<const char*>(tr.derivatives->data()),
                     static_cast<std::streamsize>(tr.derivatives->size() * sizeof(double)));
    if (!os) throw std::runtime_error("NCM1: write failed: " + path);
}

Dataset read_ncm1(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("NCM1: cannot open for reading: " + path);

    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "NCM1", 4) != 0)
        throw FormatError("NCM1: bad magic bytes");
    std::uint32_t version = get_u32(is);
    if (version != 1) throw FormatError("NCM1: unsupported version " + std::to_string(version));
    std::uint32_t eq_tag = get_u32(is);
    if (eq_tag != 1 && eq_tag != 2) throw FormatError("NCM1: unknown equation tag");
    std::uint32_t n_x = get_u32(is);
    std::uint32_t n_p = get_u32(is);
    std::uint32_t n_s = get_u32(is);
    std::uint32_t has_deriv = get_u32(is);
    double length = get_f64(is);
    double t0 = get_f64(is);
    double dt_snap = get_f64(is);
    std::uint64_t seed = get_u64(is);

    Dataset ds;
    ds.equation = static_cast<Equation>(eq_tag);
    ds.seed = seed;
    ds.splits.resize(n_p);
    for (std::uint32_t i = 0; i < n_p; ++i) {
        char b;
        if (!is.read(&b, 1)) throw FormatError("NCM1: truncated split table");
        if (b < 0 || b > 2) throw FormatError("NCM1: invalid split label");
        ds.splits[i] = static_cast<Split>(b);
    }

    PeriodicGrid grid(static_cast<int>(n_x), length);
    const std::size_t block = static_cast<std::size_t>(n_s) * n_x;
    ds.trajectories.resize(n_p);
    for (std::uint32_t j = 0; j < n_p; ++j) {
        Trajectory& tr = ds.trajectories[j];
        tr.grid = grid;
        tr.t0 = t0;
        tr.dt_snap = dt_snap;
        tr.n_snapshots = static_cast<int>(n_s);
        tr.states.resize(block);
        if (!is.read(reinterpret_cast<char*>(tr.states.data()),
                     static_cast<std::streamsize>(block * sizeof(double))))
            throw FormatError("NCM1: truncated state block");
    }
    if (has_deriv) {
        for (std::uint32_t j = 0; j < n_p; ++j) {
            Trajectory& tr = ds.trajectories[j];
            tr.derivatives.emplace(block);
            if (!is.read(reinterpret_cast<char*>(tr.derivatives->data()),
                         static_cast<std::streamsize>(block * sizeof(double))))
                throw FormatError("NCM1: truncated derivative block");
        }
    }
    ds.validate();
    return ds;
}

} // namespace ncm
