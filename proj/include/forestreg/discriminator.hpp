#pragma once

#include <string>
#include <vector>

#include "forestreg/layers.hpp"

namespace forestreg {

enum class DiscVariant { PixelGAN, PatchGAN16, PatchGAN34 };

inline const char* disc_variant_name(DiscVariant v) {
    switch (v) {
        case DiscVariant::PixelGAN: return "pixelgan";
        case DiscVariant::PatchGAN16: return "patchgan16";
        default: return "patchgan34";
    }
}

inline DiscVariant disc_variant_from(const std::string& s) {
    if (s == "pixelgan") return DiscVariant::PixelGAN;
    if (s == "patchgan16") return DiscVariant::PatchGAN16;
    if (s == "patchgan34") return DiscVariant::PatchGAN34;
    throw ValidationError("unknown discriminator variant: " + s);
}

struct DiscriminatorConfig {
    int in_channels = 10;  // SAR features + one target plane, concatenated
    DiscVariant variant = DiscVariant::PixelGAN;
    int width = 16;
    NormKind norm = NormKind::None;
};

// Convolutional discriminator emitting a 1-channel response map whose units
// have the variant's receptive field. Raw (unsquashed) responses; the VGAN
// objective applies its own sigmoid. Convention from the pix2pix family:
// leaky ReLU 0.2 between layers, no norm after the first or last conv.
template <typename T>
class DiscriminatorNet {
public:
    DiscriminatorNet() = default;

    explicit DiscriminatorNet(const DiscriminatorConfig& cfg) : cfg_(cfg) {
        if (cfg.width < 2) throw ValidationError("discriminator width too small");
        const int w0 = cfg.width;
        auto add = [&](int in_c, int out_c, int k, int stride, bool normed) {
            const std::string name = "disc.c" + std::to_string(convs_.size());
            convs_.emplace_back(name, in_c, out_c, k, stride, k > 1 ? 1 : 0);
            norms_.emplace_back(name + ".norm", normed ? cfg.norm : NormKind::None, out_c);
        };
        switch (cfg.variant) {
            case DiscVariant::PixelGAN:
                add(cfg.in_channels, w0, 1, 1, false);
                add(w0, 2 * w0, 1, 1, true);
                add(2 * w0, 1, 1, 1, false);
                break;
            case DiscVariant::PatchGAN16:
                add(cfg.in_channels, w0, 4, 2, false);
                add(w0, 2 * w0, 4, 1, true);
                add(2 * w0, 1, 4, 1, false);
                break;
            case DiscVariant::PatchGAN34:
                add(cfg.in_channels, w0, 4, 2, false);
                add(w0, 2 * w0, 4, 2, true);
                add(2 * w0, 4 * w0, 4, 1, true);
                add(4 * w0, 1, 4, 1, false);
                break;
        }
        acts_.resize(convs_.size() - 1, Activation<T>(static_cast<T>(0.2)));
    }

    const DiscriminatorConfig& config() const { return cfg_; }

    // Receptive field of one response unit, from the conv stack structure.
    int receptive_field() const {
        int rf = 1, jump = 1;
        for (const auto& c : convs_) {
            rf += (c.k - 1) * jump;
            jump *= c.stride;
        }
        return rf;
    }

    void init(std::uint64_t seed) {
        Rng rng(mix_seed(seed, 0xd15c));
        for (auto& c : convs_) c.init(rng);
    }

    void set_train(bool on) {
        for (auto& n : norms_) n.train_mode = on;
    }

    // Input: channel-concatenated (x, y) pair. Output: N x 1 x h' x w'.
    Tensor<T> forward(const Tensor<T>& xy) {
        Tensor<T> h = xy;
        for (std::size_t i = 0; i < convs_.size(); ++i) {
            h = norms_[i].forward(convs_[i].forward(h));
            if (i + 1 < convs_.size()) h = acts_[i].forward(h);
        }
        return h;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> d = dy;
        for (std::size_t i = convs_.size(); i-- > 0;) {
            if (i + 1 < convs_.size()) d = acts_[i].backward(d);
            d = convs_[i].backward(norms_[i].backward(d));
        }
        return d;
    }

    ParamList<T> params() {
        ParamList<T> out;
        for (std::size_t i = 0; i < convs_.size(); ++i) {
            convs_[i].collect(out);
            norms_[i].collect(out);
        }
        return out;
    }

    void zero_grad() {
        for (auto* p : params()) p->g.zero();
    }

private:
    DiscriminatorConfig cfg_;
    std::vector<Conv2d<T>> convs_;
    std::vector<Norm<T>> norms_;
    std::vector<Activation<T>> acts_;
};

template <typename T>
T mean_response(const Tensor<T>& response) {
    double acc = 0.0;
    for (T v : response.v) acc += v;
    return static_cast<T>(acc / static_cast<double>(response.numel()));
}

}  // namespace forestreg
