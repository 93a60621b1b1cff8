#include "voxadv/backbone.hpp"

#include <cmath>

#include "voxadv/rng.hpp"

namespace voxadv {

namespace {

enum class Op { conv3, down, up };

struct BlockSpec {
    const char* name;
    Op op;
    int in_mult;   // channels as multiples of base_channels (0 means the single input channel)
    int out_mult;
    bool residual;
};

constexpr std::array<BlockSpec, 13> kBlocks = {{
    {"enc1", Op::conv3, 0, 1, false},
    {"down1", Op::down, 1, 2, false},
    {"enc2", Op::conv3, 2, 2, true},
    {"down2", Op::down, 2, 4, false},
    {"enc3", Op::conv3, 4, 4, true},
    {"down3", Op::down, 4, 8, false},
    {"enc4", Op::conv3, 8, 8, true},
    {"up3", Op::up, 8, 4, false},
    {"dec3", Op::conv3, 4, 4, true},
    {"up2", Op::up, 4, 2, false},
    {"dec2", Op::conv3, 2, 2, true},
    {"up1", Op::up, 2, 1, false},
    {"dec1", Op::conv3, 1, 1, true},
}};

constexpr std::array<std::size_t, 4> kTapBlocks = {0, 2, 4, 6};
// Decoder block index -> encoder block whose output is added to its input.
constexpr std::array<std::pair<std::size_t, std::size_t>, 3> kSkips = {{{8, 4}, {10, 2}, {12, 0}}};

constexpr std::size_t kHeadW = 3 * kBlocks.size();
constexpr std::size_t kHeadB = kHeadW + 1;

int taps(Op op) { return op == Op::conv3 ? 27 : 8; }
int channels(int mult, int base) { return mult == 0 ? 1 : mult * base; }

std::size_t conv_idx(std::size_t b) { return 3 * b; }
std::size_t gamma_idx(std::size_t b) { return 3 * b + 1; }
std::size_t beta_idx(std::size_t b) { return 3 * b + 2; }

template <typename T>
void apply_op(Op op, const Tensor<T>& in, const T* w, int out_ch, Tensor<T>& out) {
    switch (op) {
        case Op::conv3: nn::conv3_forward(in, w, out_ch, out); break;
        case Op::down: nn::down_forward(in, w, out_ch, out); break;
        case Op::up: nn::up_forward(in, w, out_ch, out); break;
    }
}

template <typename T>
void apply_op_backward(Op op, const Tensor<T>& in, const T* w, const Tensor<T>& dout, T* dw, Tensor<T>* din) {
    switch (op) {
        case Op::conv3: nn::conv3_backward(in, w, dout, dw, din); break;
        case Op::down: nn::down_backward(in, w, dout, dw, din); break;
        case Op::up: nn::up_backward(in, w, dout, dw, din); break;
    }
}

}  // namespace

std::size_t backbone_param_count(int c, int k) {
    const auto cc = static_cast<std::size_t>(c);
    return 3507 * cc * cc + 113 * cc + static_cast<std::size_t>(k) * (cc + 1);
}

void check_backbone_extent(const Extent3& e) {
    for (auto [name, v] : {std::pair{"H", e.h}, {"W", e.w}, {"D", e.d}}) {
        if (v < 8 || v % 8 != 0) {
            throw ShapeError(std::string("backbone input axis ") + name + " has size " + std::to_string(v) +
                             ", which is not a positive multiple of 8");
        }
    }
}

template <typename T>
BackboneParams<T> init_backbone(std::uint64_t seed, int base, int k) {
    if (base < 1) throw DomainError("base_channels must be >= 1");
    if (k < 2) throw DomainError("num_classes must be >= 2");
    BackboneParams<T> p{base, k, {}};
    Rng rng(seed);
    for (const BlockSpec& b : kBlocks) {
        const int in = channels(b.in_mult, base), out = channels(b.out_mult, base);
        const std::size_t conv = p.weights.add(std::string(b.name) + ".conv",
                                               {static_cast<std::size_t>(out), static_cast<std::size_t>(in),
                                                static_cast<std::size_t>(taps(b.op))});
        const double std_dev = std::sqrt(2.0 / static_cast<double>(in * taps(b.op)));
        for (T& v : p.weights[conv].values) v = static_cast<T>(rng.normal() * std_dev);
        p.weights.add(std::string(b.name) + ".gamma", {static_cast<std::size_t>(out)}, T(1));
        p.weights.add(std::string(b.name) + ".beta", {static_cast<std::size_t>(out)}, T(0));
    }
    const std::size_t hw = p.weights.add("head.w", {static_cast<std::size_t>(k), static_cast<std::size_t>(base)});
    const double std_dev = std::sqrt(2.0 / static_cast<double>(base));
    for (T& v : p.weights[hw].values) v = static_cast<T>(rng.normal() * std_dev);
    p.weights.add("head.b", {static_cast<std::size_t>(k)}, T(0));
    return p;
}

template <typename T>
BackboneOutput<T> backbone_forward(const BackboneParams<T>& params, const Tensor<T>& x, BackboneTape<T>* tape) {
    if (x.channels() != 1) throw ShapeError("backbone input must have one channel");
    check_backbone_extent(x.extent());
    const int base = params.base_channels;
    const ParamSet<T>& w = params.weights;

    std::array<Tensor<T>, kBlocks.size()> outs;
    Tensor<T> scratch_in;
    for (std::size_t b = 0; b < kBlocks.size(); ++b) {
        const BlockSpec& spec = kBlocks[b];
        Tensor<T> in = b == 0 ? x : outs[b - 1];
        for (auto [dec, enc] : kSkips) {
            if (dec == b) nn::add_inplace(in, outs[enc]);
        }
        Tensor<T> conv_out;
        apply_op(spec.op, in, w.data(conv_idx(b)), channels(spec.out_mult, base), conv_out);
        Tensor<T> y;
        nn::instance_norm_forward(conv_out, w.data(gamma_idx(b)), w.data(beta_idx(b)), y,
                                  tape != nullptr ? &tape->blocks[b].norm : nullptr);
        if (spec.residual) nn::add_inplace(y, in);
        nn::relu_inplace(y);
        outs[b] = std::move(y);
        if (tape != nullptr) {
            tape->blocks[b].input = std::move(in);
            tape->blocks[b].output = outs[b];
        }
    }

    Tensor<T> logits;
    nn::pointwise_forward(outs.back(), w.data(kHeadW), w.data(kHeadB), params.num_classes, logits);
    BackboneOutput<T> result;
    nn::softmax_channels(logits, result.prediction.probs);
    if (tape != nullptr) {
        tape->head_input = outs.back();
        tape->probs = result.prediction.probs;
    }
    for (std::size_t j = 0; j < kTapBlocks.size(); ++j) result.pyramid.levels[j] = std::move(outs[kTapBlocks[j]]);
    return result;
}

template <typename T>
void backbone_backward(const BackboneParams<T>& params, const BackboneTape<T>& tape, const Tensor<T>* dprobs,
                       const std::array<const Tensor<T>*, 4>& dpyramid, ParamSet<T>& grads) {
    const ParamSet<T>& w = params.weights;
    params.weights.require_layout(grads, "backbone_backward");

    // Gradient flowing into each block's output.
    std::array<Tensor<T>, kBlocks.size()> dout;
    for (std::size_t b = 0; b < kBlocks.size(); ++b) dout[b] = Tensor<T>(tape.blocks[b].output.channels(), tape.blocks[b].output.extent());
    for (std::size_t j = 0; j < kTapBlocks.size(); ++j) {
        if (dpyramid[j] != nullptr) nn::add_inplace(dout[kTapBlocks[j]], *dpyramid[j]);
    }
    if (dprobs != nullptr) {
        Tensor<T> dlogits;
        nn::softmax_backward(tape.probs, *dprobs, dlogits);
        Tensor<T> dhead(tape.head_input.channels(), tape.head_input.extent());
        nn::pointwise_backward(tape.head_input, w.data(kHeadW), dlogits, grads.data(kHeadW), grads.data(kHeadB), &dhead);
        nn::add_inplace(dout.back(), dhead);
    }

    for (std::size_t bi = kBlocks.size(); bi-- > 0;) {
        const BlockSpec& spec = kBlocks[bi];
        const auto& blk = tape.blocks[bi];
        Tensor<T> g = std::move(dout[bi]);
        nn::relu_backward_inplace(blk.output, g);
        Tensor<T> dconv;
        nn::instance_norm_backward(blk.norm, w.data(gamma_idx(bi)), g, grads.data(gamma_idx(bi)), grads.data(beta_idx(bi)), dconv);
        if (bi == 0) {
            apply_op_backward<T>(spec.op, blk.input, w.data(conv_idx(bi)), dconv, grads.data(conv_idx(bi)), nullptr);
            break;
        }
        Tensor<T> din(blk.input.channels(), blk.input.extent());
        if (spec.residual) din = g;
        apply_op_backward<T>(spec.op, blk.input, w.data(conv_idx(bi)), dconv, grads.data(conv_idx(bi)), &din);
        // The block input is the previous block's output, plus a skip tap for decoder levels.
        nn::add_inplace(dout[bi - 1], din);
        for (auto [dec, enc] : kSkips) {
            if (dec == bi) nn::add_inplace(dout[enc], din);
        }
    }
}

template BackboneParams<float> init_backbone<float>(std::uint64_t, int, int);
template BackboneParams<double> init_backbone<double>(std::uint64_t, int, int);
template BackboneOutput<float> backbone_forward(const BackboneParams<float>&, const Tensor<float>&, BackboneTape<float>*);
template BackboneOutput<double> backbone_forward(const BackboneParams<double>&, const Tensor<double>&, BackboneTape<double>*);
template void backbone_backward(const BackboneParams<float>&, const BackboneTape<float>&, const Tensor<float>*,
                                const std::array<const Tensor<float>*, 4>&, ParamSet<float>&);
template void backbone_backward(const BackboneParams<double>&, const BackboneTape<double>&, const Tensor<double>*,
                                const std::array<const Tensor<double>*, 4>&, ParamSet<double>&);

}  // namespace voxadv
