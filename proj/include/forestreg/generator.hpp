#pragma once

#include <memory>
#include <string>
#include <vector>

#include "forestreg/layers.hpp"

namespace forestreg {

// Residual basic block: conv3x3(s) -> norm -> relu -> conv3x3 -> norm, plus
// an identity or projected (1x1, stride s) shortcut, then relu.
template <typename T>
struct BasicBlock {
    Conv2d<T> conv1, conv2;
    Norm<T> n1, n2;
    Activation<T> act1, act2;
    bool project = false;
    Conv2d<T> proj;
    Norm<T> proj_norm;

    BasicBlock() = default;
    BasicBlock(const std::string& name, int in_c, int out_c, int stride, NormKind norm)
        : conv1(name + ".conv1", in_c, out_c, 3, stride, 1),
          conv2(name + ".conv2", out_c, out_c, 3, 1, 1),
          n1(name + ".n1", norm, out_c),
          n2(name + ".n2", norm, out_c),
          project(stride != 1 || in_c != out_c),
          proj(name + ".proj", in_c, out_c, 1, stride, 0),
          proj_norm(name + ".proj_norm", norm, out_c) {}

    Tensor<T> forward(const Tensor<T>& x) {
        Tensor<T> idn = project ? proj_norm.forward(proj.forward(x)) : x;
        Tensor<T> h = act1.forward(n1.forward(conv1.forward(x)));
        h = n2.forward(conv2.forward(h));
        add_inplace(h, idn);
        return act2.forward(h);
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        const Tensor<T> d = act2.backward(dy);
        Tensor<T> dx = conv1.backward(n1.backward(act1.backward(conv2.backward(n2.backward(d)))));
        if (project) {
            add_inplace(dx, proj.backward(proj_norm.backward(d)));
        } else {
            add_inplace(dx, d);
        }
        return dx;
    }

    void init(Rng& rng) {
        conv1.init(rng);
        conv2.init(rng);
        if (project) proj.init(rng);
    }

    void set_train(bool on) {
        n1.train_mode = on;
        n2.train_mode = on;
        proj_norm.train_mode = on;
    }

    void collect(ParamList<T>& out) {
        conv1.collect(out);
        n1.collect(out);
        conv2.collect(out);
        n2.collect(out);
        if (project) {
            proj.collect(out);
            proj_norm.collect(out);
        }
    }
};

// Decoder level: nearest-neighbour x2 upsample, skip concatenation, then two
// (conv3x3, norm, relu) transforms halving the feature count.
template <typename T>
struct DecoderLevel {
    NearestUp2<T> up;
    bool has_skip = false;
    int skip_c = 0;
    Conv2d<T> conv_a, conv_b;
    Norm<T> na, nb;
    Activation<T> act_a, act_b;

    DecoderLevel() = default;
    DecoderLevel(const std::string& name, int in_c, int skip_channels, int out_c, NormKind norm)
        : has_skip(skip_channels > 0),
          skip_c(skip_channels),
          conv_a(name + ".conv_a", in_c + skip_channels, out_c, 3, 1, 1),
          conv_b(name + ".conv_b", out_c, out_c, 3, 1, 1),
          na(name + ".na", norm, out_c),
          nb(name + ".nb", norm, out_c) {}

    Tensor<T> forward(const Tensor<T>& x, const Tensor<T>* skip) {
        Tensor<T> u = up.forward(x);
        up_c_ = u.c;
        Tensor<T> cat = has_skip ? concat_c(u, *skip) : std::move(u);
        Tensor<T> h = act_a.forward(na.forward(conv_a.forward(cat)));
        return act_b.forward(nb.forward(conv_b.forward(h)));
    }

    // Returns the gradient for the level input; d_skip receives the skip
    // branch gradient when the level has one.
    Tensor<T> backward(const Tensor<T>& dy, Tensor<T>* d_skip) {
        Tensor<T> d = conv_b.backward(nb.backward(act_b.backward(dy)));
        Tensor<T> dcat = conv_a.backward(na.backward(act_a.backward(d)));
        if (has_skip) {
            Tensor<T> du;
            split_c(dcat, up_c_, du, *d_skip);
            return up.backward(du);
        }
        return up.backward(dcat);
    }

    void init(Rng& rng) {
        conv_a.init(rng);
        conv_b.init(rng);
    }

    void set_train(bool on) {
        na.train_mode = on;
        nb.train_mode = on;
    }

    void collect(ParamList<T>& out) {
        conv_a.collect(out);
        na.collect(out);
        conv_b.collect(out);
        nb.collect(out);
    }

private:
    int up_c_ = 0;
};

struct GeneratorConfig {
    int in_channels = 9;
    int depth = 4;  // encoder stages; total downsampling is 2^(depth+1)
    int stem_width = 16;
    int blocks_per_stage = 1;
    NormKind norm = NormKind::None;
};

// Regression U-Net: 7x7/2 stem + max-pool + residual stages down,
// nearest-up + skip-concat levels back up, 1x1 conv + ReLU head (the ReLU
// enforces non-negative predictions).
template <typename T>
class GeneratorNet {
public:
    GeneratorNet() = default;

    explicit GeneratorNet(const GeneratorConfig& cfg) : cfg_(cfg) {
        if (cfg.depth != 4 && cfg.depth != 5) throw ValidationError("generator depth must be 4 or 5");
        if (cfg.stem_width < 4) throw ValidationError("stem width too small");
        if (cfg.blocks_per_stage < 1) throw ValidationError("blocks_per_stage must be >= 1");
        const int w0 = cfg.stem_width;
        stem_ = Conv2d<T>("stem.conv", cfg.in_channels, w0, 7, 2, 3);
        stem_norm_ = Norm<T>("stem.norm", cfg.norm, w0);

        int ch = w0;
        stage_out_.clear();
        for (int s = 1; s <= cfg.depth; ++s) {
            const int out_c = s == 1 ? w0 : ch * 2;
            const int stride = s == 1 ? 1 : 2;
            for (int bi = 0; bi < cfg.blocks_per_stage; ++bi) {
                const std::string name =
                    "enc.s" + std::to_string(s) + ".b" + std::to_string(bi);
                blocks_.emplace_back(name, bi == 0 ? ch : out_c, out_c, bi == 0 ? stride : 1,
                                     cfg.norm);
            }
            ch = out_c;
            stage_out_.push_back(ch);
        }

        int cur = ch;
        for (int j = 0; j < cfg.depth + 1; ++j) {
            // Skips pair with stage outputs depth-1 .. 1, then the stem.
            int skip_c = 0;
            if (j < cfg.depth - 1)
                skip_c = stage_out_[static_cast<std::size_t>(cfg.depth - 2 - j)];
            else if (j == cfg.depth - 1)
                skip_c = w0;  // stem output
            const int out_c = std::max(cur / 2, 4);
            decoder_.emplace_back("dec.l" + std::to_string(j), cur, skip_c, out_c, cfg.norm);
            cur = out_c;
        }
        head_ = Conv2d<T>("head.conv", cur, 1, 1, 1, 0);
    }

    const GeneratorConfig& config() const { return cfg_; }

    int downsample_factor() const { return 1 << (cfg_.depth + 1); }

    void init(std::uint64_t seed) {
        Rng rng(mix_seed(seed, 0x9e0));
        stem_.init(rng);
        for (auto& b : blocks_) b.init(rng);
        for (auto& d : decoder_) d.init(rng);
        head_.init(rng);
    }

    void set_train(bool on) {
        stem_norm_.train_mode = on;
        for (auto& b : blocks_) b.set_train(on);
        for (auto& d : decoder_) d.set_train(on);
    }

    Tensor<T> forward(const Tensor<T>& x) {
        if (x.c != cfg_.in_channels) throw ValidationError("generator: channel mismatch");
        const int f = downsample_factor();
        if (x.h % f != 0 || x.w % f != 0 || x.h < f || x.w < f)
            throw ValidationError("generator: input dims not divisible by " + std::to_string(f));
        Tensor<T> e0 = stem_act_.forward(stem_norm_.forward(stem_.forward(x)));
        Tensor<T> h = pool_.forward(e0);
        skips_.clear();
        skips_.reserve(static_cast<std::size_t>(cfg_.depth));
        std::size_t bi = 0;
        for (int s = 1; s <= cfg_.depth; ++s) {
            for (int k = 0; k < cfg_.blocks_per_stage; ++k) h = blocks_[bi++].forward(h);
            if (s < cfg_.depth) skips_.push_back(h);
        }
        skips_.push_back(std::move(e0));  // last skip = stem output
        for (std::size_t j = 0; j < decoder_.size(); ++j) {
            // skips_ holds [stage1..stage(depth-1), stem]; decoder level j
            // wants stage(depth-1-j) and finally the stem.
            const Tensor<T>* skip = nullptr;
            if (decoder_[j].has_skip)
                skip = j < static_cast<std::size_t>(cfg_.depth) - 1
                           ? &skips_[static_cast<std::size_t>(cfg_.depth) - 2 - j]
                           : &skips_.back();
            h = decoder_[j].forward(h, skip);
        }
        return head_act_.forward(head_.forward(h));
    }

    // Accumulates parameter gradients; returns the input gradient.
    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> d = head_.backward(head_act_.backward(dy));
        std::vector<Tensor<T>> d_skips(skips_.size());
        for (std::size_t j = decoder_.size(); j-- > 0;) {
            Tensor<T>* ds = nullptr;
            if (decoder_[j].has_skip)
                ds = j < static_cast<std::size_t>(cfg_.depth) - 1
                         ? &d_skips[static_cast<std::size_t>(cfg_.depth) - 2 - j]
                         : &d_skips.back();
            d = decoder_[j].backward(d, ds);
        }
        std::size_t bi = blocks_.size();
        for (int s = cfg_.depth; s >= 1; --s) {
            if (s < cfg_.depth && d_skips[static_cast<std::size_t>(s) - 1].numel() > 0)
                add_inplace(d, d_skips[static_cast<std::size_t>(s) - 1]);
            for (int k = 0; k < cfg_.blocks_per_stage; ++k) d = blocks_[--bi].backward(d);
        }
        Tensor<T> de0 = pool_.backward(d);
        if (d_skips.back().numel() > 0) add_inplace(de0, d_skips.back());
        return stem_.backward(stem_norm_.backward(stem_act_.backward(de0)));
    }

    ParamList<T> params() {
        ParamList<T> out;
        stem_.collect(out);
        stem_norm_.collect(out);
        for (auto& b : blocks_) b.collect(out);
        for (auto& d : decoder_) d.collect(out);
        head_.collect(out);
        return out;
    }

    void zero_grad() {
        for (auto* p : params()) p->g.zero();
    }

private:
    GeneratorConfig cfg_;
    Conv2d<T> stem_;
    Norm<T> stem_norm_;
    Activation<T> stem_act_;
    MaxPool2<T> pool_;
    std::vector<BasicBlock<T>> blocks_;
    std::vector<int> stage_out_;
    std::vector<DecoderLevel<T>> decoder_;
    Conv2d<T> head_;
    Activation<T> head_act_;
    std::vector<Tensor<T>> skips_;
};

}  // namespace forestreg
