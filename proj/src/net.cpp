#include "net.hpp"

#include "common.hpp"
#include "rng.hpp"
#include "text_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace dag {

std::vector<LayerSpec> parse_trunk(const std::string& text) {
    std::vector<LayerSpec> out;
    for (auto tok : split_csv(text)) {
        while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
        while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
        if (tok.empty()) continue;
        if (tok == "res") {
            out.push_back({LayerSpec::Kind::Residual, 0, 1});
            continue;
        }
        const auto s_pos = tok.find('s');
        if (tok.rfind("conv", 0) != 0 || s_pos == std::string_view::npos || s_pos <= 4)
            throw Error(ErrorCode::Config, "bad trunk layer '" + std::string(tok) + "' (want convNsM or res)");
        try {
            const int filters = static_cast<int>(parse_int(tok.substr(4, s_pos - 4)));
            const int stride = static_cast<int>(parse_int(tok.substr(s_pos + 1)));
            out.push_back({LayerSpec::Kind::Conv, filters, stride});
        } catch (const Error&) {
            throw Error(ErrorCode::Config, "bad trunk layer '" + std::string(tok) + "'");
        }
    }
    return out;
}

std::string format_trunk(const std::vector<LayerSpec>& trunk) {
    std::string s;
    for (const auto& l : trunk) {
        if (!s.empty()) s += ",";
        s += l.kind == LayerSpec::Kind::Residual
                 ? std::string("res")
                 : "conv" + std::to_string(l.filters) + "s" + std::to_string(l.stride);
    }
    return s;
}

void NetConfig::validate() const {
    if (width <= 0 || height <= 0 || (channels != 1 && channels != 3))
        throw Error(ErrorCode::Config, "net input must be positive-sized with 1 or 3 channels");
    if (trunk.empty()) throw Error(ErrorCode::Config, "net trunk needs at least one layer");
    if (trunk.front().kind != LayerSpec::Kind::Conv)
        throw Error(ErrorCode::Config, "net trunk must start with a conv layer");
    int c = channels;
    for (const auto& l : trunk) {
        if (l.kind == LayerSpec::Kind::Conv) {
            if (l.filters <= 0 || l.stride <= 0) throw Error(ErrorCode::Config, "conv filters and stride must be > 0");
            c = l.filters;
        }
    }
    if (c % 2 != 0) throw Error(ErrorCode::Config, "trunk output channel count must be even");
    if (d <= 0 || d_prime <= 0) throw Error(ErrorCode::Config, "embedding sizes must be > 0");
    if (n_classes < 2) throw Error(ErrorCode::Config, "need at least 2 classes");
}

std::string NetConfig::canonical() const {
    return "in=" + std::to_string(width) + "x" + std::to_string(height) + "x" + std::to_string(channels) +
           ";trunk=" + format_trunk(trunk) + ";d=" + std::to_string(d) + ";d_prime=" + std::to_string(d_prime) +
           ";classes=" + std::to_string(n_classes);
}

std::uint64_t NetConfig::hash() const { return fnv1a64(canonical()); }

NetLayout::NetLayout(const NetConfig& c) : cfg(c) {
    cfg.validate();
    int ch = cfg.channels, h = cfg.height, w = cfg.width;
    std::size_t off = 0;
    auto add_conv = [&](int out_c, int stride) {
        ConvUnit u{};
        u.in_c = ch;
        u.out_c = out_c;
        u.stride = stride;
        u.in_h = h;
        u.in_w = w;
        u.out_h = (h - 1) / stride + 1;
        u.out_w = (w - 1) / stride + 1;
        u.weight = off;
        off += static_cast<std::size_t>(out_c) * ch * 9;
        u.bias = off;
        off += static_cast<std::size_t>(out_c);
        u.slope = off;
        off += 1;
        convs.push_back(u);
        ch = out_c;
        h = u.out_h;
        w = u.out_w;
        return static_cast<int>(convs.size() - 1);
    };
    for (const auto& l : cfg.trunk) {
        if (l.kind == LayerSpec::Kind::Conv) {
            steps.push_back({false, add_conv(l.filters, l.stride), -1});
        } else {
            const int a = add_conv(ch, 1);
            const int b = add_conv(ch, 1);
            steps.push_back({true, a, b});
        }
    }
    final_c = ch;
    final_h = h;
    final_w = w;
    chunk_features = static_cast<std::size_t>(ch / 2) * h * w;
    const auto d = static_cast<std::size_t>(cfg.d);
    const auto dp = static_cast<std::size_t>(cfg.d_prime);
    app_weight = off;
    off += d * chunk_features;
    app_bias = off;
    off += d;
    geo_weight = off;
    off += d * chunk_features;
    geo_bias = off;
    off += d;
    comb_weight = off;
    off += dp * 2 * d;
    comb_bias = off;
    off += dp;
    classifier = off;
    off += static_cast<std::size_t>(cfg.n_classes) * dp;
    total = off;
}

NetParams::NetParams(const NetConfig& cfg) : layout_(cfg), values_(layout_.total, 0.0) {}

Eigen::MatrixXd NetParams::classifier() const {
    const auto& l = layout_;
    Eigen::MatrixXd w(l.cfg.n_classes, l.cfg.d_prime);
    for (int j = 0; j < l.cfg.n_classes; ++j)
        for (int k = 0; k < l.cfg.d_prime; ++k)
            w(j, k) = values_[l.classifier + static_cast<std::size_t>(j) * l.cfg.d_prime + k];
    return w;
}

NetParams init_params(const NetConfig& cfg, std::uint64_t seed) {
    NetParams p(cfg);
    const NetLayout& l = p.layout();
    auto v = p.mutable_values();
    std::uint64_t tensor = 0;
    auto fill = [&](std::size_t offset, std::size_t count, std::size_t fan_in) {
        CounterRng rng{seed, tensor++, 0x1417ull};
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t i = 0; i < count; ++i) v[offset + i] = rng.uniform(-bound, bound);
    };
    for (const auto& u : l.convs) {
        fill(u.weight, static_cast<std::size_t>(u.out_c) * u.in_c * 9, static_cast<std::size_t>(u.in_c) * 9);
        v[u.slope] = 0.25;
    }
    const auto d = static_cast<std::size_t>(cfg.d);
    const auto dp = static_cast<std::size_t>(cfg.d_prime);
    fill(l.app_weight, d * l.chunk_features, l.chunk_features);
    fill(l.geo_weight, d * l.chunk_features, l.chunk_features);
    fill(l.comb_weight, dp * 2 * d, 2 * d);
    fill(l.classifier, static_cast<std::size_t>(cfg.n_classes) * dp, dp);
    return p;
}

namespace {

template <typename S>
using ConstMapR = Eigen::Map<const MatX<S>>;
template <typename S>
using MapR = Eigen::Map<MatX<S>>;

template <typename S>
void im2col(const MatX<S>& x, const ConvUnit& u, MatX<S>& cols) {
    const int out_px = u.out_h * u.out_w;
    cols.setZero(u.in_c * 9, out_px);
    for (int c = 0; c < u.in_c; ++c) {
        const S* src = x.data() + static_cast<std::ptrdiff_t>(c) * u.in_h * u.in_w;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                S* dst = cols.data() + static_cast<std::ptrdiff_t>(c * 9 + ky * 3 + kx) * out_px;
                for (int oy = 0; oy < u.out_h; ++oy) {
                    const int iy = oy * u.stride + ky - 1;
                    if (iy < 0 || iy >= u.in_h) continue;
                    for (int ox = 0; ox < u.out_w; ++ox) {
                        const int ix = ox * u.stride + kx - 1;
                        if (ix < 0 || ix >= u.in_w) continue;
                        dst[oy * u.out_w + ox] = src[iy * u.in_w + ix];
                    }
                }
            }
        }
    }
}

template <typename S>
void col2im_add(const MatX<S>& cols, const ConvUnit& u, MatX<S>& dx) {
    const int out_px = u.out_h * u.out_w;
    for (int c = 0; c < u.in_c; ++c) {
        S* dst = dx.data() + static_cast<std::ptrdiff_t>(c) * u.in_h * u.in_w;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const S* src = cols.data() + static_cast<std::ptrdiff_t>(c * 9 + ky * 3 + kx) * out_px;
                for (int oy = 0; oy < u.out_h; ++oy) {
                    const int iy = oy * u.stride + ky - 1;
                    if (iy < 0 || iy >= u.in_h) continue;
                    for (int ox = 0; ox < u.out_w; ++ox) {
                        const int ix = ox * u.stride + kx - 1;
                        if (ix < 0 || ix >= u.in_w) continue;
                        dst[iy * u.in_w + ix] += src[oy * u.out_w + ox];
                    }
                }
            }
        }
    }
}

template <typename S>
MatX<S> prelu(const MatX<S>& pre, S slope) {
    return pre.unaryExpr([slope](S v) { return v > S(0) ? v : slope * v; });
}

template <typename S>
MatX<S> conv_forward(const ConvUnit& u, std::span<const S> values, const MatX<S>& x, ForwardCache<S>& cache,
                     int index) {
    MatX<S> cols;
    im2col(x, u, cols);
    const ConstMapR<S> w(values.data() + u.weight, u.out_c, u.in_c * 9);
    const Eigen::Map<const VecX<S>> b(values.data() + u.bias, u.out_c);
    MatX<S> pre = w * cols;
    pre.colwise() += b;
    cache.conv_inputs[static_cast<std::size_t>(index)] = x;
    MatX<S> out = prelu(pre, values[u.slope]);
    cache.conv_pre[static_cast<std::size_t>(index)] = std::move(pre);
    return out;
}

// d_out is the gradient w.r.t. the PReLU output; returns the gradient w.r.t. the conv input.
template <typename S>
MatX<S> conv_backward(const ConvUnit& u, std::span<const S> values, const ForwardCache<S>& cache, int index,
                      const MatX<S>& d_out, std::span<S> d_params) {
    const MatX<S>& pre = cache.conv_pre[static_cast<std::size_t>(index)];
    const S slope = values[u.slope];
    MatX<S> d_pre(pre.rows(), pre.cols());
    S d_slope = 0;
    for (Eigen::Index i = 0; i < pre.size(); ++i) {
        const S p = pre.data()[i];
        const S g = d_out.data()[i];
        if (p > S(0)) {
            d_pre.data()[i] = g;
        } else {
            d_pre.data()[i] = slope * g;
            d_slope += g * p;
        }
    }
    d_params[u.slope] += d_slope;
    MatX<S> cols;
    im2col(cache.conv_inputs[static_cast<std::size_t>(index)], u, cols);
    MapR<S> dw(d_params.data() + u.weight, u.out_c, u.in_c * 9);
    dw.noalias() += d_pre * cols.transpose();
    Eigen::Map<VecX<S>> db(d_params.data() + u.bias, u.out_c);
    db += d_pre.rowwise().sum();
    const ConstMapR<S> w(values.data() + u.weight, u.out_c, u.in_c * 9);
    const MatX<S> d_cols = w.transpose() * d_pre;
    MatX<S> dx = MatX<S>::Zero(u.in_c, u.in_h * u.in_w);
    col2im_add(d_cols, u, dx);
    return dx;
}

}  // namespace

template <typename S>
std::uint64_t ForwardCache<S>::sign_pattern() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& pre : conv_pre) {
        for (Eigen::Index i = 0; i < pre.size(); ++i) {
            h ^= pre.data()[i] > S(0) ? 1u : 0u;
            h *= 0x100000001b3ull;
        }
    }
    return h;
}

template <typename S>
ForwardCache<S> forward_typed(const NetLayout& layout, std::span<const S> values, const ImageBuffer& image) {
    const NetConfig& cfg = layout.cfg;
    if (image.width() != cfg.width || image.height() != cfg.height || image.channels() != cfg.channels)
        throw Error(ErrorCode::Config, "image shape does not match the network input");
    if (values.size() != layout.total) throw Error(ErrorCode::Config, "parameter vector has the wrong size");
    ForwardCache<S> cache;
    cache.config_hash = cfg.hash();
    cache.conv_inputs.resize(layout.convs.size());
    cache.conv_pre.resize(layout.convs.size());

    MatX<S> x(cfg.channels, cfg.width * cfg.height);
    for (int r = 0; r < cfg.height; ++r)
        for (int c = 0; c < cfg.width; ++c)
            for (int k = 0; k < cfg.channels; ++k) x(k, r * cfg.width + c) = static_cast<S>(image.at(c, r, k));

    for (const auto& step : layout.steps) {
        const ConvUnit& a = layout.convs[static_cast<std::size_t>(step.first)];
        if (!step.residual) {
            x = conv_forward(a, values, x, cache, step.first);
        } else {
            const ConvUnit& b = layout.convs[static_cast<std::size_t>(step.second)];
            MatX<S> inner = conv_forward(a, values, x, cache, step.first);
            inner = conv_forward(b, values, inner, cache, step.second);
            x += inner;
        }
    }

    const auto f = static_cast<Eigen::Index>(layout.chunk_features);
    const Eigen::Index d = cfg.d;
    cache.features = Eigen::Map<const VecX<S>>(x.data(), x.size());
    const ConstMapR<S> wa(values.data() + layout.app_weight, d, f);
    const ConstMapR<S> wg(values.data() + layout.geo_weight, d, f);
    cache.appearance = wa * cache.features.head(f) + Eigen::Map<const VecX<S>>(values.data() + layout.app_bias, d);
    cache.geometry = wg * cache.features.tail(f) + Eigen::Map<const VecX<S>>(values.data() + layout.geo_bias, d);
    cache.concat.resize(2 * d);
    cache.concat << cache.appearance, cache.geometry;
    const ConstMapR<S> wf(values.data() + layout.comb_weight, cfg.d_prime, 2 * d);
    cache.combined = wf * cache.concat + Eigen::Map<const VecX<S>>(values.data() + layout.comb_bias, cfg.d_prime);
    return cache;
}

template <typename S>
void backward_typed(const NetLayout& layout, std::span<const S> values, const ForwardCache<S>& cache,
                    const VecX<S>& d_appearance, const VecX<S>& d_geometry, const VecX<S>& d_combined,
                    std::span<S> d_params, std::vector<S>* d_input) {
    const NetConfig& cfg = layout.cfg;
    if (cache.config_hash != cfg.hash() || cache.conv_pre.size() != layout.convs.size())
        throw Error(ErrorCode::Cache, "forward cache belongs to a different network configuration");
    if (d_params.size() != layout.total) throw Error(ErrorCode::InvalidArgument, "gradient buffer has the wrong size");
    const Eigen::Index d = cfg.d;
    const Eigen::Index dp = cfg.d_prime;
    const auto f = static_cast<Eigen::Index>(layout.chunk_features);

    // Combiner f.
    MapR<S>(d_params.data() + layout.comb_weight, dp, 2 * d).noalias() += d_combined * cache.concat.transpose();
    Eigen::Map<VecX<S>>(d_params.data() + layout.comb_bias, dp) += d_combined;
    const ConstMapR<S> wf(values.data() + layout.comb_weight, dp, 2 * d);
    const VecX<S> d_concat = wf.transpose() * d_combined;
    const VecX<S> d_app = d_appearance + d_concat.head(d);
    const VecX<S> d_geo = d_geometry + d_concat.tail(d);

    // Branch heads.
    MapR<S>(d_params.data() + layout.app_weight, d, f).noalias() += d_app * cache.features.head(f).transpose();
    Eigen::Map<VecX<S>>(d_params.data() + layout.app_bias, d) += d_app;
    MapR<S>(d_params.data() + layout.geo_weight, d, f).noalias() += d_geo * cache.features.tail(f).transpose();
    Eigen::Map<VecX<S>>(d_params.data() + layout.geo_bias, d) += d_geo;
    const ConstMapR<S> wa(values.data() + layout.app_weight, d, f);
    const ConstMapR<S> wg(values.data() + layout.geo_weight, d, f);
    MatX<S> dx(layout.final_c, layout.final_h * layout.final_w);
    Eigen::Map<VecX<S>> dx_flat(dx.data(), dx.size());
    dx_flat.head(f) = wa.transpose() * d_app;
    dx_flat.tail(f) = wg.transpose() * d_geo;

    for (auto it = layout.steps.rbegin(); it != layout.steps.rend(); ++it) {
        const ConvUnit& a = layout.convs[static_cast<std::size_t>(it->first)];
        if (!it->residual) {
            dx = conv_backward(a, values, cache, it->first, dx, d_params);
        } else {
            const ConvUnit& b = layout.convs[static_cast<std::size_t>(it->second)];
            MatX<S> d_inner = conv_backward(b, values, cache, it->second, dx, d_params);
            d_inner = conv_backward(a, values, cache, it->first, d_inner, d_params);
            dx += d_inner;
        }
    }

    if (d_input) {
        d_input->assign(static_cast<std::size_t>(cfg.width) * cfg.height * cfg.channels, S(0));
        for (int r = 0; r < cfg.height; ++r)
            for (int c = 0; c < cfg.width; ++c)
                for (int k = 0; k < cfg.channels; ++k)
                    (*d_input)[(static_cast<std::size_t>(r) * cfg.width + c) * cfg.channels + k] =
                        dx(k, r * cfg.width + c);
    }
}

template struct ForwardCache<float>;
template struct ForwardCache<double>;
template ForwardCache<float> forward_typed<float>(const NetLayout&, std::span<const float>, const ImageBuffer&);
template ForwardCache<double> forward_typed<double>(const NetLayout&, std::span<const double>, const ImageBuffer&);
template void backward_typed<float>(const NetLayout&, std::span<const float>, const ForwardCache<float>&,
                                    const VecX<float>&, const VecX<float>&, const VecX<float>&, std::span<float>,
                                    std::vector<float>*);
template void backward_typed<double>(const NetLayout&, std::span<const double>, const ForwardCache<double>&,
                                     const VecX<double>&, const VecX<double>&, const VecX<double>&,
                                     std::span<double>, std::vector<double>*);

ForwardResult forward(const NetParams& params, const ImageBuffer& image) {
    ForwardResult r;
    r.cache = forward_typed<double>(params.layout(), params.values(), image);
    r.cache.params_version = params.version();
    r.embeddings = {r.cache.appearance, r.cache.geometry, r.cache.combined};
    return r;
}

ParamGradients backward(const NetParams& params, const ForwardCache<double>& cache,
                        const Eigen::VectorXd& d_appearance, const Eigen::VectorXd& d_geometry,
                        const Eigen::VectorXd& d_combined) {
    if (cache.params_version != params.version())
        throw Error(ErrorCode::Cache, "forward cache is stale: parameters changed after the forward pass");
    const auto& cfg = params.config();
    if (d_appearance.size() != cfg.d || d_geometry.size() != cfg.d || d_combined.size() != cfg.d_prime)
        throw Error(ErrorCode::InvalidArgument, "output gradient sizes do not match the network");
    ParamGradients g;
    g.params.assign(params.layout().total, 0.0);
    backward_typed<double>(params.layout(), params.values(), cache, d_appearance, d_geometry, d_combined,
                           g.params, &g.input);
    return g;
}

namespace {

constexpr char kMagic[8] = {'D', 'A', 'G', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put_le(std::string& out, T v) {
    static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
    T v{};
    char buf[sizeof(T)];
    in.read(buf, sizeof(T));
    if (!in) throw Error(ErrorCode::InvalidArgument, "checkpoint is truncated");
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const NetParams& params) {
    std::string bytes(kMagic, sizeof(kMagic));
    put_le<std::uint32_t>(bytes, kCheckpointVersion);
    put_le<std::uint32_t>(bytes, 0);
    put_le<std::uint64_t>(bytes, params.config().hash());
    put_le<std::uint64_t>(bytes, params.values().size());
    for (double v : params.values()) put_le<double>(bytes, v);
    write_text(path, bytes);
}

NetParams load_checkpoint(const std::filesystem::path& path, const NetConfig& cfg) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::MissingInput, "cannot open checkpoint " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw Error(ErrorCode::InvalidArgument, path.string() + " is not a checkpoint");
    if (get_le<std::uint32_t>(in) != kCheckpointVersion)
        throw Error(ErrorCode::InvalidArgument, path.string() + ": unsupported checkpoint version");
    (void)get_le<std::uint32_t>(in);
    if (get_le<std::uint64_t>(in) != cfg.hash())
        throw Error(ErrorCode::Config, path.string() + ": checkpoint was written for a different network config");
    NetParams p(cfg);
    if (get_le<std::uint64_t>(in) != p.values().size())
        throw Error(ErrorCode::InvalidArgument, path.string() + ": parameter count mismatch");
    auto v = p.mutable_values();
    for (auto& x : v) x = get_le<double>(in);
    return p;
}

}  // namespace dag
