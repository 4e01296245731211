#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dwp/nn.hpp"
#include "dwp/rng.hpp"
#include "dwp/variational.hpp"

namespace dwp {

enum class NetMode { deterministic, variational };

/// Build description for the 3D U-Net. The paper configuration is
/// (in=1, out=2, widths 16/32/64); scaled-down presets keep the topology.
struct NetworkSpec {
    int in_channels = 1;
    int out_channels = 2;
    std::array<int, 3> base_widths{16, 32, 64};
    NetMode mode = NetMode::deterministic;

    static NetworkSpec paper() { return NetworkSpec{}; }
    static NetworkSpec toy(NetMode mode = NetMode::deterministic) {
        NetworkSpec s;
        s.base_widths = {4, 8, 16};
        s.mode = mode;
        return s;
    }
};

/// One convolution and its weight storage. In variational mode `w` holds the
/// most recent reparametrized sample and `noise` the noise it was drawn with.
struct ConvLayer {
    std::string id;
    int c_in = 0, c_out = 0, k = 3, stride = 1;
    bool has_norm = true;  // instance norm + ReLU before the convolution

    Tensor w;  // [c_out, c_in, k, k, k]
    Tensor grad_w;

    // variational storage (empty in deterministic mode)
    Tensor mu, log_sigma, noise;
    Tensor grad_mu, grad_log_sigma;

    bool trainable = true;

    int64_t weight_count() const { return int64_t(c_out) * c_in * k * k * k; }
    bool is_kernel3() const { return k == 3; }
    GaussianPosterior posterior_view() const { return GaussianPosterior(mu, log_sigma); }
};

/// Maps every 3x3x3 conv layer id to one of the 7 resolution groups.
struct LayerGroupMap {
    std::map<std::string, int> groups;

    int group_of(const std::string& layer_id) const;
    int group_count() const;
};

/// Group assignment by the spatial resolution of each layer's input feature
/// map: 1 full-res encoder, 2 half, 3 quarter, 4 eighth, 5 quarter decoder,
/// 6 half decoder, 7 full-res decoder.
LayerGroupMap resolution_group_map();

/// Per-block spatial sizes computed analytically from the block list (used as
/// an independent oracle against the real forward pass).
struct ShapeTrace {
    std::array<int64_t, 3> input;
    std::array<int64_t, 3> bottleneck;
    std::array<int64_t, 3> output;
};
ShapeTrace trace_shapes(int64_t d, int64_t h, int64_t w);

/// Surface the variational training machinery needs from a segmentation
/// network: conv layers with weight storage, reparametrized sampling, and a
/// differentiable forward pass producing 2-channel logits.
class SegNet {
public:
    virtual ~SegNet() = default;
    virtual NetMode mode() const = 0;
    virtual std::vector<ConvLayer>& layers() = 0;
    virtual void sample_all_weights(Rng& rng) = 0;
    virtual void set_weights_to_mean() = 0;
    virtual void zero_grad() = 0;
    virtual Tensor forward(const Tensor& x, bool grad_enabled) = 0;
    virtual void backward(const Tensor& grad_logits) = 0;

    const std::vector<ConvLayer>& layers() const { return const_cast<SegNet*>(this)->layers(); }
};

class UNet : public SegNet {
public:
    explicit UNet(const NetworkSpec& spec);

    const NetworkSpec& spec() const { return spec_; }
    NetMode mode() const override { return spec_.mode; }

    std::vector<ConvLayer>& layers() override { return layers_; }
    using SegNet::layers;
    ConvLayer& layer(const std::string& id);
    const ConvLayer& layer(const std::string& id) const;

    /// Count of weight scalars in a deterministic build (mu-only count in
    /// variational mode; the optimizable scalar count is twice that).
    int64_t param_count() const;
    int64_t trainable_param_count() const;
    /// (layer id, weight shape) pairs, identical across modes.
    std::vector<std::pair<std::string, std::vector<int64_t>>> param_shape_inventory() const;

    /// Variational mode: w = mu + exp(log_sigma) * noise for every layer.
    void sample_all_weights(Rng& rng) override;
    /// Variational mode: w = mu (noise = 0), used for evaluation.
    void set_weights_to_mean() override;

    void zero_grad() override;
    /// Variational mode: fold accumulated grad_w into grad_mu/grad_log_sigma
    /// using the cached sampling noise.
    void fold_weight_grads();

    /// Forward pass on [N, C, D, H, W]; records shapes for trace checks.
    /// grad_enabled=false skips all caches (inference only).
    Tensor forward(const Tensor& x, bool grad_enabled = false) override;
    /// Backward from grad wrt logits; accumulates layer weight grads.
    void backward(const Tensor& grad_logits) override;

    const ShapeTrace& last_trace() const { return last_trace_; }

private:
    struct BlockCtx {
        InstanceNormCtx norm;  // valid if layer.has_norm
        Tensor conv_in;        // input to conv when has_norm == false
    };

    Tensor conv_block_forward(ConvLayer& L, const Tensor& x, bool grad);
    Tensor conv_block_backward(ConvLayer& L, BlockCtx& ctx, const Tensor& grad_y);

    NetworkSpec spec_;
    std::vector<ConvLayer> layers_;
    std::map<std::string, size_t> by_id_;

    // forward caches (single-threaded per instance)
    std::vector<BlockCtx> ctxs_;
    std::array<std::vector<int64_t>, 3> up_in_dims_;     // pre-upsample dims per up block
    std::array<std::vector<int64_t>, 3> pre_crop_dims_;  // post-upsample dims per up block
    ShapeTrace last_trace_{};
    bool have_cache_ = false;
};

UNet build_unet(const NetworkSpec& spec);

/// Marks everything non-trainable except the first block (init_conv + down1)
/// and the last block (up3 + out). Deterministic networks only.
void freeze_middle(UNet& net);
void unfreeze_all(UNet& net);

/// He initialization: weights ~ N(0, 2/fan_in); variational log_sigma set to
/// a small constant (-5).
void he_init(UNet& net, Rng& rng);

constexpr real kInitLogSigma = -5.0;
constexpr real kInstanceNormEps = 1e-5;

}  // namespace dwp
