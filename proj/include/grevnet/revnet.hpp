#pragma once

#include <array>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "grevnet/layers.hpp"

namespace grevnet {

/// conv(C_in -> C) -> ReLU -> conv(C -> C_in): the F/G function of a block.
template <typename T>
class ResidualFn {
public:
    struct Cache {
        Tensor<T> pre;  // first conv output, before the ReLU
    };

    ResidualFn() = default;
    ResidualFn(std::size_t channels, std::size_t width, std::size_t kernel, Rng& rng, const std::string& name)
        : conv1_(channels, width, kernel, rng, name + ".conv1"), conv2_(width, channels, kernel, rng, name + ".conv2") {}

    Tensor<T> forward(const Tensor<T>& x, Cache* cache = nullptr) const {
        Tensor<T> pre = conv1_.forward(x);
        Tensor<T> y = conv2_.forward(relu_forward(pre));
        if (cache) cache->pre = std::move(pre);
        return y;
    }

    Tensor<T> backward(const Tensor<T>& x, const Cache& cache, const Tensor<T>& dy) {
        Tensor<T> dr = conv2_.backward(relu_forward(cache.pre), dy);
        return conv1_.backward(x, relu_backward(cache.pre, dr));
    }

    std::size_t width() const { return conv1_.out_channels(); }

    ParamRefs<T> params() {
        ParamRefs<T> p = conv1_.params();
        for (auto* q : conv2_.params()) p.push_back(q);
        return p;
    }

private:
    Conv2d<T> conv1_;
    Conv2d<T> conv2_;
};

/// Reversible block on a channel-split input:
///   y1 = x1 + F(x2),  y2 = x2 + G(y1)
///   x2 = y2 - G(y1),  x1 = y1 - F(x2)
template <typename T>
class RevBlock {
public:
    struct Tape {
        Tensor<T> x2, y1;
        typename ResidualFn<T>::Cache f, g;
    };

    RevBlock() = default;
    RevBlock(std::size_t channels, std::size_t width, std::size_t kernel, Rng& rng, const std::string& name)
        : channels_(channels), f_(channels / 2, width, kernel, rng, name + ".F"),
          g_(channels / 2, width, kernel, rng, name + ".G") {
        if (channels < 2 || channels % 2 != 0)
            throw ShapeError("revblock: channel count must be even, got " + std::to_string(channels));
    }

    std::size_t channels() const { return channels_; }
    std::size_t width() const { return f_.width(); }

    std::pair<Tensor<T>, Tensor<T>> forward_pair(const Tensor<T>& x1, const Tensor<T>& x2) const {
        check_halves(x1, x2);
        Tensor<T> y1 = add(x1, f_.forward(x2));
        Tensor<T> y2 = add(x2, g_.forward(y1));
        return {std::move(y1), std::move(y2)};
    }
    std::pair<Tensor<T>, Tensor<T>> inverse_pair(const Tensor<T>& y1, const Tensor<T>& y2) const {
        check_halves(y1, y2);
        Tensor<T> x2 = sub(y2, g_.forward(y1));
        Tensor<T> x1 = sub(y1, f_.forward(x2));
        return {std::move(x1), std::move(x2)};
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        auto [x1, x2] = halves(x);
        auto [y1, y2] = forward_pair(x1, x2);
        return concat(y1, y2, 1);
    }
    Tensor<T> inverse(const Tensor<T>& y) const {
        auto [y1, y2] = halves(y);
        auto [x1, x2] = inverse_pair(y1, y2);
        return concat(x1, x2, 1);
    }

    // --- cached route (activations retained by the caller) ---------------

    Tensor<T> forward_cached(const Tensor<T>& x, Tape& tape) const {
        auto [x1, x2] = halves(x);
        Tensor<T> y1 = add(x1, f_.forward(x2, &tape.f));
        Tensor<T> y2 = add(x2, g_.forward(y1, &tape.g));
        Tensor<T> y = concat(y1, y2, 1);
        tape.x2 = std::move(x2);
        tape.y1 = std::move(y1);
        return y;
    }
    Tensor<T> backward_cached(Tape& tape, const Tensor<T>& dy) { return grad_forward_map(tape, dy); }

    /// Inverse direction, retaining what its backward needs.
    Tensor<T> inverse_cached(const Tensor<T>& y, Tape& tape) const {
        auto [y1, y2] = halves(y);
        Tensor<T> x2 = sub(y2, g_.forward(y1, &tape.g));
        Tensor<T> x1 = sub(y1, f_.forward(x2, &tape.f));
        Tensor<T> x = concat(x1, x2, 1);
        tape.x2 = std::move(x2);
        tape.y1 = std::move(y1);
        return x;
    }
    Tensor<T> inverse_backward_cached(Tape& tape, const Tensor<T>& dx) { return grad_inverse_map(tape, dx); }

    // --- recompute route (reconstruct the input from the output) ----------

    /// Given the block output y and dL/dy, rebuilds the input and returns (x, dL/dx).
    std::pair<Tensor<T>, Tensor<T>> backward_recompute(const Tensor<T>& y, const Tensor<T>& dy) {
        Tape tape;
        Tensor<T> x = inverse_cached(y, tape);
        Tensor<T> dx = grad_forward_map(tape, dy);
        return {std::move(x), std::move(dx)};
    }

    /// Given the output x of the inverse map and dL/dx, rebuilds y and returns (y, dL/dy).
    std::pair<Tensor<T>, Tensor<T>> inverse_backward_recompute(const Tensor<T>& x, const Tensor<T>& dx) {
        Tape tape;
        Tensor<T> y = forward_cached(x, tape);
        Tensor<T> dy = grad_inverse_map(tape, dx);
        return {std::move(y), std::move(dy)};
    }

    ParamRefs<T> params() {
        ParamRefs<T> p = f_.params();
        for (auto* q : g_.params()) p.push_back(q);
        return p;
    }

private:
    std::pair<Tensor<T>, Tensor<T>> halves(const Tensor<T>& x) const {
        if (x.rank() != 4 || x.dim(1) != channels_)
            throw ShapeError("revblock: expected " + std::to_string(channels_) + " channels, got " +
                             shape_string(x.shape()));
        auto parts = split(x, 1, {channels_ / 2, channels_ / 2});
        return {std::move(parts[0]), std::move(parts[1])};
    }
    void check_halves(const Tensor<T>& a, const Tensor<T>& b) const {
        if (a.shape() != b.shape() || a.rank() != 4 || a.dim(1) != channels_ / 2)
            throw ShapeError("revblock: halves " + shape_string(a.shape()) + " / " + shape_string(b.shape()));
    }

    Tensor<T> grad_forward_map(Tape& tape, const Tensor<T>& dy) {
        auto [dy1, dy2] = halves(dy);
        add_inplace(dy1, g_.backward(tape.y1, tape.g, dy2));
        Tensor<T> dx2 = add(dy2, f_.backward(tape.x2, tape.f, dy1));
        return concat(dy1, dx2, 1);
    }

    Tensor<T> grad_inverse_map(Tape& tape, const Tensor<T>& dx) {
        auto [dx1, dx2] = halves(dx);
        add_inplace(dx2, f_.backward(tape.x2, tape.f, scale(dx1, T(-1))));
        add_inplace(dx1, g_.backward(tape.y1, tape.g, scale(dx2, T(-1))));
        return concat(dx1, dx2, 1);
    }

    std::size_t channels_ = 0;
    ResidualFn<T> f_;
    ResidualFn<T> g_;
};

/// Invertible 2x2 subsampling: moves the four spatial phases into channels.
///
/// With an odd channel count the first output stream gets the diagonal phases
/// (0,0),(1,1) of every channel and the second stream the off-diagonal ones,
/// so each stream is a checkerboard. With an even count every stream keeps its
/// own channels (all four phases), which preserves the checkerboards produced
/// by earlier stages.
class Subsample {
public:
    /// Output channel of input channel c at phase p = 2*di + dj.
    static std::size_t out_channel(std::size_t channels, std::size_t c, std::size_t phase) {
        if (channels % 2 == 0) {
            const std::size_t half = channels / 2;
            return (c / half) * (2 * channels) + (c % half) * 4 + phase;
        }
        static constexpr std::array<std::size_t, 4> slot{0, 0, 1, 1};
        const bool diagonal = phase == 0 || phase == 3;
        return (diagonal ? 0 : 2 * channels) + 2 * c + slot[phase];
    }

    template <typename T>
    static Tensor<T> forward(const Tensor<T>& x) {
        check(x.shape());
        const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
        Tensor<T> y({n, 4 * c, h / 2, w / 2});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t p = 0; p < 4; ++p) {
                    const std::size_t oc = out_channel(c, ch, p), di = p / 2, dj = p % 2;
                    for (std::size_t r = 0; r < h / 2; ++r)
                        for (std::size_t s = 0; s < w / 2; ++s) y(i, oc, r, s) = x(i, ch, 2 * r + di, 2 * s + dj);
                }
        return y;
    }

    template <typename T>
    static Tensor<T> inverse(const Tensor<T>& y) {
        if (y.rank() != 4 || y.dim(1) % 4 != 0) throw ShapeError("subsample inverse: channels must divide by 4");
        const std::size_t n = y.dim(0), c = y.dim(1) / 4, h = 2 * y.dim(2), w = 2 * y.dim(3);
        Tensor<T> x({n, c, h, w});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t p = 0; p < 4; ++p) {
                    const std::size_t oc = out_channel(c, ch, p), di = p / 2, dj = p % 2;
                    for (std::size_t r = 0; r < h / 2; ++r)
                        for (std::size_t s = 0; s < w / 2; ++s) x(i, ch, 2 * r + di, 2 * s + dj) = y(i, oc, r, s);
                }
        return x;
    }

    static Shape output_shape(const Shape& chw) {
        check({1, chw[0], chw[1], chw[2]});
        return {4 * chw[0], chw[1] / 2, chw[2] / 2};
    }

private:
    static void check(const Shape& s) {
        if (s.size() != 4) throw ShapeError("subsample: rank-4 input required");
        if (s[2] % 2 != 0 || s[3] % 2 != 0)
            throw ShapeError("subsample: odd spatial extent " + shape_string(s));
    }
};

// ---------------------------------------------------------------------------
// Architecture description

struct StageSpec {
    enum class Kind { subsample, block } kind;
    std::size_t width = 0;  // intermediate channels of F/G (blocks only)

    bool operator==(const StageSpec&) const = default;
};

struct ArchSpec {
    Shape input;  // C, H, W
    std::vector<StageSpec> stages;
    std::size_t kernel = 3;

    /// "S,B64,B64,S,..." where S is a subsampling step and B<n> a block of width n.
    static std::vector<StageSpec> parse_stages(const std::string& text) {
        std::vector<StageSpec> out;
        std::stringstream ss(text);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            tok.erase(0, tok.find_first_not_of(" \t"));
            tok.erase(tok.find_last_not_of(" \t") + 1);
            if (tok.empty()) continue;
            if (tok == "S") {
                out.push_back({StageSpec::Kind::subsample, 0});
            } else if (tok[0] == 'B' && tok.size() > 1 && tok.find_first_not_of("0123456789", 1) == std::string::npos) {
                out.push_back({StageSpec::Kind::block, std::stoul(tok.substr(1))});
            } else {
                throw ConfigError("architecture: bad stage token '" + tok + "'");
            }
        }
        return out;
    }

    std::string stages_string() const {
        std::string s;
        for (const auto& st : stages) {
            if (!s.empty()) s += ',';
            s += st.kind == StageSpec::Kind::subsample ? std::string("S") : "B" + std::to_string(st.width);
        }
        return s;
    }

    /// Shape after every stage; throws ConfigError on inconsistent channel arithmetic.
    std::vector<Shape> stage_shapes() const {
        if (input.size() != 3) throw ConfigError("architecture: input must be C,H,W");
        std::vector<Shape> shapes{input};
        Shape cur = input;
        for (const auto& st : stages) {
            if (st.kind == StageSpec::Kind::subsample) {
                if (cur[1] % 2 || cur[2] % 2)
                    throw ConfigError("architecture: subsampling odd extent " + shape_string(cur));
                cur = {cur[0] * 4, cur[1] / 2, cur[2] / 2};
            } else {
                if (cur[0] % 2 || st.width == 0)
                    throw ConfigError("architecture: block needs an even channel count and width > 0, got " +
                                      shape_string(cur));
            }
            shapes.push_back(cur);
        }
        return shapes;
    }

    std::size_t latent_size() const { return shape_size(stage_shapes().back()); }

    std::size_t block_count() const {
        std::size_t n = 0;
        for (const auto& s : stages) n += s.kind == StageSpec::Kind::block;
        return n;
    }
    std::size_t subsample_count() const { return stages.size() - block_count(); }

    /// Sum over convs of O*C*k^2 + O.
    std::size_t parameter_count() const {
        const auto shapes = stage_shapes();
        std::size_t total = 0;
        for (std::size_t i = 0; i < stages.size(); ++i) {
            if (stages[i].kind != StageSpec::Kind::block) continue;
            const std::size_t h = shapes[i][0] / 2, w = stages[i].width, k2 = kernel * kernel;
            const std::size_t fn = (w * h * k2 + w) + (h * w * k2 + h);
            total += 2 * fn;
        }
        return total;
    }
};

inline std::vector<std::string> preset_names() { return {"mnist-small", "celeba", "tiny"}; }

/// Named architectures. "celeba" is buildable but not trained here.
inline ArchSpec preset(const std::string& name) {
    if (name == "mnist-small")
        return {{1, 32, 32}, ArchSpec::parse_stages("S,B64,B64,S,B64,B64,S,B64,B64,S,B64,S,B64")};
    if (name == "celeba")
        return {{3, 64, 64},
                ArchSpec::parse_stages("S,B64,B64,S,B128,B128,S,B256,B256,S,B512,B512,S,B256,B256,S,B64")};
    if (name == "tiny") return {{1, 8, 8}, ArchSpec::parse_stages("S,B8,B8,S,B8,B8")};
    throw ConfigError("architecture: unknown preset '" + name + "'");
}

// ---------------------------------------------------------------------------
// Network

/// Ordered invertible stages. forward() is the encoder, inverse() the decoder.
template <typename T>
class InvertibleNet {
public:
    using Stage = std::variant<RevBlock<T>, Subsample>;

    /// Activations retained by the cached route: one entry per stage.
    struct Tape {
        std::vector<typename RevBlock<T>::Tape> blocks;
    };

    InvertibleNet() = default;
    InvertibleNet(const ArchSpec& spec, Rng& rng) : spec_(spec) {
        const auto shapes = spec.stage_shapes();
        for (std::size_t i = 0; i < spec.stages.size(); ++i) {
            if (spec.stages[i].kind == StageSpec::Kind::subsample)
                stages_.emplace_back(Subsample{});
            else
                stages_.emplace_back(RevBlock<T>(shapes[i][0], spec.stages[i].width, spec.kernel, rng,
                                                 "stage" + std::to_string(i)));
        }
    }

    const ArchSpec& spec() const { return spec_; }
    const Shape& input_shape() const { return spec_.input; }
    std::size_t latent_size() const { return shape_size(spec_.input); }
    std::size_t stage_count() const { return stages_.size(); }

    Tensor<T> forward(const Tensor<T>& x) const {
        Tensor<T> h = to_image(x);
        for (const auto& st : stages_)
            h = std::visit([&](const auto& s) { return apply_forward(s, h); }, st);
        return flatten(std::move(h));
    }

    Tensor<T> inverse(const Tensor<T>& z) const {
        Tensor<T> h = from_latent(z);
        for (auto it = stages_.rbegin(); it != stages_.rend(); ++it)
            h = std::visit([&](const auto& s) { return apply_inverse(s, h); }, *it);
        return h;
    }

    /// Backprop through forward() given only its output z: every stage input is
    /// reconstructed by inversion, so retained activations do not grow with depth.
    /// Returns dL/dx; parameter gradients are accumulated.
    Tensor<T> backward(const Tensor<T>& z, const Tensor<T>& dz) {
        Tensor<T> h = from_latent(z);
        Tensor<T> dh = from_latent(dz);
        for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) {
            if (auto* b = std::get_if<RevBlock<T>>(&*it)) {
                auto [x, dx] = b->backward_recompute(h, dh);
                h = std::move(x);
                dh = std::move(dx);
            } else {
                h = Subsample::inverse(h);
                dh = Subsample::inverse(dh);
            }
        }
        return dh;
    }

    /// Backprop through inverse() given only its output x. Returns dL/dz.
    Tensor<T> inverse_backward(const Tensor<T>& x, const Tensor<T>& dx) {
        Tensor<T> h = to_image(x);
        Tensor<T> dh = to_image(dx);
        for (auto& st : stages_) {
            if (auto* b = std::get_if<RevBlock<T>>(&st)) {
                auto [y, dy] = b->inverse_backward_recompute(h, dh);
                h = std::move(y);
                dh = std::move(dy);
            } else {
                h = Subsample::forward(h);
                dh = Subsample::forward(dh);
            }
        }
        return flatten(std::move(dh));
    }

    // --- reference route with all activations stored -----------------------

    Tensor<T> forward_cached(const Tensor<T>& x, Tape& tape) const {
        tape.blocks.assign(stages_.size(), {});
        Tensor<T> h = to_image(x);
        for (std::size_t i = 0; i < stages_.size(); ++i) {
            if (auto* b = std::get_if<RevBlock<T>>(&stages_[i])) h = b->forward_cached(h, tape.blocks[i]);
            else h = Subsample::forward(h);
        }
        return flatten(std::move(h));
    }
    Tensor<T> backward_cached(Tape& tape, const Tensor<T>& dz) {
        Tensor<T> dh = from_latent(dz);
        for (std::size_t i = stages_.size(); i-- > 0;) {
            if (auto* b = std::get_if<RevBlock<T>>(&stages_[i])) dh = b->backward_cached(tape.blocks[i], dh);
            else dh = Subsample::inverse(dh);
        }
        return dh;
    }
    Tensor<T> inverse_cached(const Tensor<T>& z, Tape& tape) const {
        tape.blocks.assign(stages_.size(), {});
        Tensor<T> h = from_latent(z);
        for (std::size_t i = stages_.size(); i-- > 0;) {
            if (auto* b = std::get_if<RevBlock<T>>(&stages_[i])) h = b->inverse_cached(h, tape.blocks[i]);
            else h = Subsample::inverse(h);
        }
        return h;
    }
    Tensor<T> inverse_backward_cached(Tape& tape, const Tensor<T>& dx) {
        Tensor<T> dh = to_image(dx);
        for (std::size_t i = 0; i < stages_.size(); ++i) {
            if (auto* b = std::get_if<RevBlock<T>>(&stages_[i])) dh = b->inverse_backward_cached(tape.blocks[i], dh);
            else dh = Subsample::forward(dh);
        }
        return flatten(std::move(dh));
    }

    ParamRefs<T> params() {
        ParamRefs<T> p;
        for (auto& st : stages_)
            if (auto* b = std::get_if<RevBlock<T>>(&st))
                for (auto* q : b->params()) p.push_back(q);
        return p;
    }

    std::vector<Stage>& stages() { return stages_; }

private:
    static Tensor<T> apply_forward(const RevBlock<T>& b, const Tensor<T>& h) { return b.forward(h); }
    static Tensor<T> apply_forward(const Subsample&, const Tensor<T>& h) { return Subsample::forward(h); }
    static Tensor<T> apply_inverse(const RevBlock<T>& b, const Tensor<T>& h) { return b.inverse(h); }
    static Tensor<T> apply_inverse(const Subsample&, const Tensor<T>& h) { return Subsample::inverse(h); }

    Tensor<T> to_image(const Tensor<T>& x) const {
        const std::size_t per = shape_size(spec_.input);
        if (x.rank() == 0 || x.size() % per != 0 || x.size() / x.dim(0) != per)
            throw ShapeError("net: input " + shape_string(x.shape()) + " does not match " +
                             shape_string(spec_.input));
        return x.reshaped({x.dim(0), spec_.input[0], spec_.input[1], spec_.input[2]});
    }
    Tensor<T> from_latent(const Tensor<T>& z) const {
        const std::size_t d = latent_size();
        if (z.rank() == 0 || z.size() / z.dim(0) != d || z.size() % d != 0)
            throw ShapeError("net: latent " + shape_string(z.shape()) + " does not have " + std::to_string(d) +
                             " dimensions per example");
        const Shape& out = latent_image_shape();
        return z.reshaped({z.dim(0), out[0], out[1], out[2]});
    }
    static Tensor<T> flatten(Tensor<T> h) {
        const std::size_t n = h.dim(0);
        return std::move(h).reshaped({n, h.size() / n});
    }
    const Shape& latent_image_shape() const {
        if (latent_shape_.empty()) latent_shape_ = spec_.stage_shapes().back();
        return latent_shape_;
    }

    ArchSpec spec_;
    std::vector<Stage> stages_;
    mutable Shape latent_shape_;
};

} // namespace grevnet
