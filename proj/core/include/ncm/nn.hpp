#pragma once

#include <span>
#include <string>
#include <vector>

#include "ncm/rng.hpp"

namespace ncm {

enum class Activation { tanh_fn, identity };

struct ConvLayer {
    int width = 0;      // odd kernel width, circular padding
    int in_channels = 0;
    int out_channels = 0;
    Activation activation = Activation::identity;

    int param_count() const { return width * in_channels * out_channels + out_channels; }
};

/// A fixed closure-network architecture: an augmentation layer
/// u -> [u, u^2], a stack of circular convolutions, and a terminal
/// zero-sum projection v -> v - mean(v).
class CnnArchitecture {
  public:
    static CnnArchitecture small();  // 57 parameters
    static CnnArchitecture large();  // 533 parameters
    static CnnArchitecture from_id(int id);

    int id() const { return id_; }
    const std::vector<ConvLayer>& layers() const { return layers_; }
    int param_count() const;
    int max_kernel_width() const;

  private:
    CnnArchitecture(int id, std::vector<ConvLayer> layers)
        : id_(id), layers_(std::move(layers)) {}
    int id_;
    std::vector<ConvLayer> layers_;
};

/// Flat trainable parameter vector; per-layer weights then biases, in
/// architecture order. Weight index order is [out][in][tap].
struct CnnParams {
    std::vector<double> theta;
};

/// Evaluates the network on a periodic signal of any length >= the
/// largest kernel width.
void nn_forward(const CnnArchitecture& arch, const CnnParams& params, std::span<const double> u,
                std::span<double> out);

/// Exact gradients of <w, forward(u)> with respect to theta and u.
/// grad_theta is accumulated into (+=); grad_u is overwritten.
void nn_backward(const CnnArchitecture& arch, const CnnParams& params, std::span<const double> u,
                 std::span<const double> w, std::span<double> grad_theta,
                 std::span<double> grad_u);

/// Glorot-uniform weights, zero biases.
CnnParams init_params(const CnnArchitecture& arch, Rng& rng);

/// "NCP1" checkpoint format: magic, u32 version, u32 architecture id,
/// u32 parameter count, then binary64 little-endian parameters.
void save_checkpoint(const CnnParams& params, const CnnArchitecture& arch,
                     const std::string& path);
CnnParams load_checkpoint(const std::string& path, const CnnArchitecture& arch);

/// Reads only the architecture id of a checkpoint.
int checkpoint_arch_id(const std::string& path);

} // namespace ncm
