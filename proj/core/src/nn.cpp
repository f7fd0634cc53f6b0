#include "ncm/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "ncm/dataset_io.hpp"

namespace ncm {

CnnArchitecture CnnArchitecture::small() {
    return CnnArchitecture(1, {
                                  {9, 2, 2, Activation::tanh_fn},
                                  {9, 2, 1, Activation::identity},
                              });
}

CnnArchitecture CnnArchitecture::large() {
    return CnnArchitecture(2, {
                                  {5, 2, 4, Activation::tanh_fn},
                                  {5, 4, 6, Activation::tanh_fn},
                                  {5, 6, 6, Activation::tanh_fn},
                                  {5, 6, 4, Activation::tanh_fn},
                                  {5, 4, 2, Activation::tanh_fn},
                                  {5, 2, 1, Activation::identity},
                              });
}

CnnArchitecture CnnArchitecture::from_id(int id) {
    if (id == 1) return small();
    if (id == 2) return large();
    throw std::invalid_argument("CnnArchitecture: unknown id " + std::to_string(id));
}

int CnnArchitecture::param_count() const {
    int n = 0;
    for (const auto& l : layers_) n += l.param_count();
    return n;
}

int CnnArchitecture::max_kernel_width() const {
    int w = 0;
    for (const auto& l : layers_) w = std::max(w, l.width);
    return w;
}

namespace {

// channels stored as [channel][cell], contiguous per channel
void conv_apply(const ConvLayer& l, const double* weights, const double* biases,
                const std::vector<double>& in, std::vector<double>& out, int n) {
    const int radius = (l.width - 1) / 2;
    out.assign(static_cast<std::size_t>(l.out_channels) * n, 0.0);
    for (int co = 0; co < l.out_channels; ++co) {
        double* dst = out.data() + static_cast<std::size_t>(co) * n;
        for (int i = 0; i < n; ++i) dst[i] = biases[co];
        for (int ci = 0; ci < l.in_channels; ++ci) {
            const double* src = in.data() + static_cast<std::size_t>(ci) * n;
            const double* w = weights + (static_cast<std::size_t>(co) * l.in_channels + ci) * l.width;
            for (int d = 0; d < l.width; ++d) {
                const int off = d - radius;
                const double wv = w[d];
                for (int i = 0; i < n; ++i) {
                    int j = i + off;
                    if (j < 0) j += n;
                    else if (j >= n) j -= n;
                    dst[i] += wv * src[j];
                }
            }
        }
    }
}

void require_params(const CnnArchitecture& arch, const CnnParams& params) {
    if (static_cast<int>(params.theta.size()) != arch.param_count())
        throw std::invalid_argument("CnnParams: expected " + std::to_string(arch.param_count()) +
                                    " parameters, got " + std::to_string(params.theta.size()));
}

// Runs the forward pass keeping post-activation values of every layer.
// acts[0] is the augmented input, acts[k] the output of conv layer k-1
// (after activation, before the terminal projection).
void forward_stack(const CnnArchitecture& arch, const CnnParams& params, std::span<const double> u,
                   std::vector<std::vector<double>>& acts) {
    const int n = static_cast<int>(u.size());
    acts.clear();
    acts.emplace_back(2 * static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        acts[0][i] = u[i];
        acts[0][n + i] = u[i] * u[i];
    }
    const double* theta = params.theta.data();
    std::size_t offset = 0;
    for (const ConvLayer& l : arch.layers()) {
        const double* weights = theta + offset;
        const double* biases = weights + static_cast<std::size_t>(l.width) * l.in_channels * l.out_channels;
        std::vector<double> out;
        conv_apply(l, weights, biases, acts.back(), out, n);
        if (l.activation == Activation::tanh_fn)
            for (double& v : out) v = std::tanh(v);
        acts.push_back(std::move(out));
        offset += l.param_count();
    }
}

} // namespace

void nn_forward(const CnnArchitecture& arch, const CnnParams& params, std::span<const double> u,
                std::span<double> out) {
    require_params(arch, params);
    const int n = static_cast<int>(u.size());
    if (n < arch.max_kernel_width())
        throw std::invalid_argument("nn_forward: input shorter than the widest kernel");
    if (static_cast<int>(out.size()) != n)
        throw std::invalid_argument("nn_forward: output size mismatch");

    std::vector<std::vector<double>> acts;
    forward_stack(arch, params, u, acts);
    const std::vector<double>& v = acts.back();
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += v[i];
    mean /= n;
    for (int i = 0; i < n; ++i) out[i] = v[i] - mean;
}

void nn_backward(const CnnArchitecture& arch, const CnnParams& params, std::span<const double> u,
                 std::span<const double> w, std::span<double> grad_theta,
                 std::span<double> grad_u) {
    require_params(arch, params);
    const int n = static_cast<int>(u.size());
    if (static_cast<int>(w.size()) != n || static_cast<int>(grad_u.size()) != n)
        throw std::invalid_argument("nn_backward: cotangent/gradient size mismatch");
    if (static_cast<int>(grad_theta.size()) != arch.param_count())
        throw std::invalid_argument("nn_backward: grad_theta size mismatch");

    std::vector<std::vector<double>> acts;
    forward_stack(arch, params, u, acts);

    // Terminal projection is symmetric: its adjoint is itself.
    double wmean = 0.0;
    for (int i = 0; i < n; ++i) wmean += w[i];
    wmean /= n;
    std::vector<double> g(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) g[i] = w[i] - wmean;

    // Layer parameter offsets.
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const ConvLayer& l : arch.layers()) {
        offsets.push_back(off);
        off += l.param_count();
    }

    for (int li = static_cast<int>(arch.layers().size()) - 1; li >= 0; --li) {
        const ConvLayer& l = arch.layers()[li];
        const int radius = (l.width - 1) / 2;
        const std::vector<double>& in = acts[li];
        const std::vector<double>& post = acts[li + 1];

        if (l.activation == Activation::tanh_fn)
            for (int c = 0; c < l.out_channels; ++c)
                for (int i = 0; i < n; ++i) {
                    const double y = post[static_cast<std::size_t>(c) * n + i];
                    g[static_cast<std::size_t>(c) * n + i] *= 1.0 - y * y;
                }

        const double* theta = params.theta.data() + offsets[li];
        double* gw = grad_theta.data() + offsets[li];
        double* gb = gw + static_cast<std::size_t>(l.width) * l.in_channels * l.out_channels;

        std::vector<double> gin(static_cast<std::size_t>(l.in_channels) * n, 0.0);
        for (int co = 0; co < l.out_channels; ++co) {
            const double* gout = g.data() + static_cast<std::size_t>(co) * n;
            for (int i = 0; i < n; ++i) gb[co] += gout[i];
            for (int ci = 0; ci < l.in_channels; ++ci) {
                const double* src = in.data() + static_cast<std::size_t>(ci) * n;
                double* gsrc = gin.data() + static_cast<std::size_t>(ci) * n;
                const double* wrow =
                    theta + (static_cast<std::size_t>(co) * l.in_channels + ci) * l.width;
                double* gwrow = gw + (static_cast<std::size_t>(co) * l.in_channels + ci) * l.width;
                for (int d = 0; d < l.width; ++d) {
                    const int offd = d - radius;
                    double acc = 0.0;
                    const double wv = wrow[d];
                    for (int i = 0; i < n; ++i) {
                        int j = i + offd;
                        if (j < 0) j += n;
                        else if (j >= n) j -= n;
                        acc += gout[i] * src[j];
                        gsrc[j] += wv * gout[i];
                    }
                    gwrow[d] += acc;
                }
            }
        }
        if (li > 0) {
            g = std::move(gin);
        } else {
            // augmentation layer: u -> [u, u^2]
            for (int i = 0; i < n; ++i) grad_u[i] = gin[i] + 2.0 * u[i] * gin[n + i];
        }
    }
}

CnnParams init_params(const CnnArchitecture& arch, Rng& rng) {
    CnnParams p;
    p.theta.resize(arch.param_count());
    std::size_t off = 0;
    for (const ConvLayer& l : arch.layers()) {
        const int fan_in = l.width * l.in_channels;
        const int fan_out = l.width * l.out_channels;
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        const int nw = l.width * l.in_channels * l.out_channels;
        for (int i = 0; i < nw; ++i) p.theta[off + i] = rng.uniform(-limit, limit);
        for (int i = 0; i < l.out_channels; ++i) p.theta[off + nw + i] = 0.0;
        off += l.param_count();
    }
    return p;
}

static_assert(std::endian::native == std::endian::little,
              "NCP1 I/O assumes a little-endian host");

void save_checkpoint(const CnnParams& params, const CnnArchitecture& arch,
                     const std::string& path) {
    require_params(arch, params);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("NCP1: cannot open for writing: " + path);
    os.write("NCP1", 4);
    std::uint32_t version = 1, id = static_cast<std::uint32_t>(arch.id()),
                  count = static_cast<std::uint32_t>(params.theta.size());
    os.write(reinterpret_cast<const char*>(&version), 4);
    os.write(reinterpret_cast<const char*>(&id), 4);
    os.write(reinterpret_cast<const char*>(&count), 4);
    os.write(reinterpret_cast<const char*>(params.theta.data()),
             static_cast<std::streamsize>(params.theta.size() * sizeof(double)));
    if (!os) throw std::runtime_error("NCP1: write failed: " + path);
}

namespace {
std::uint32_t read_u32(std::istream& is, const char* what) {
    std::uint32_t v;
    if (!is.read(reinterpret_cast<char*>(&v), 4)) throw FormatError(std::string("NCP1: truncated ") + what);
    return v;
}
} // namespace

CnnParams load_checkpoint(const std::string& path, const CnnArchitecture& arch) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("NCP1: cannot open for reading: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "NCP1", 4) != 0)
        throw FormatError("NCP1: bad magic bytes");
    std::uint32_t version = read_u32(is, "version");
    if (version != 1) throw FormatError("NCP1: unsupported version");
    std::uint32_t id = read_u32(is, "architecture id");
    std::uint32_t count = read_u32(is, "parameter count");
    if (static_cast<int>(id) != arch.id() || static_cast<int>(count) != arch.param_count())
        throw FormatError("NCP1: architecture mismatch: expected id " + std::to_string(arch.id()) +
                          " with " + std::to_string(arch.param_count()) + " parameters, found id " +
                          std::to_string(id) + " with " + std::to_string(count));
    CnnParams p;
    p.theta.resize(count);
    if (!is.read(reinterpret_cast<char*>(p.theta.data()),
                 static_cast<std::streamsize>(count * sizeof(double))))
        throw FormatError("NCP1: truncated parameter block");
    return p;
}

int checkpoint_arch_id(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("NCP1: cannot open for reading: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "NCP1", 4) != 0)
        throw FormatError("NCP1: bad magic bytes");
    read_u32(is, "version");
    return static_cast<int>(read_u32(is, "architecture id"));
}

} // namespace ncm
