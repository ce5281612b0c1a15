#include "prunekit/presets.hpp"

#include <cmath>

#include <json.hpp>

#include "prunekit/rng.hpp"

namespace prunekit {

using nlohmann::json;

Node conv_node(const std::string& name, i64 n_out, i64 c_in, i64 k, i64 stride, i64 pad,
               u64 seed, bool bias, double init_scale) {
    Node n;
    n.kind = NodeKind::Conv;
    n.name = name;
    n.weights = Tensor4(n_out, c_in, k, k);
    n.sh = n.sw = stride;
    n.ph = n.pw = pad;
    auto rng = make_rng(seed, name_tag(name));
    const double std = init_scale * std::sqrt(2.0 / static_cast<double>(c_in * k * k));
    std::normal_distribution<double> dist(0.0, std);
    for (float& w : n.weights.data) w = static_cast<float>(dist(rng));
    if (bias) {
        n.has_bias = true;
        std::normal_distribution<double> bdist(0.0, 0.05);
        n.bias.resize(static_cast<size_t>(n_out));
        for (float& b : n.bias) b = static_cast<float>(bdist(rng));
    }
    return n;
}

Node relu_node(const std::string& name) {
    Node n;
    n.kind = NodeKind::Relu;
    n.name = name;
    return n;
}

static Node pool_node(NodeKind kind, const std::string& name, i64 k, i64 stride) {
    Node n;
    n.kind = kind;
    n.name = name;
    n.kh = n.kw = k;
    n.sh = n.sw = stride;
    return n;
}

Node maxpool_node(const std::string& name, i64 k, i64 stride) {
    return pool_node(NodeKind::MaxPool, name, k, stride);
}

Node avgpool_node(const std::string& name, i64 k, i64 stride) {
    return pool_node(NodeKind::AvgPool, name, k, stride);
}

Node batchnorm_node(const std::string& name, i64 channels, u64 seed) {
    Node n;
    n.kind = NodeKind::BatchNorm;
    n.name = name;
    auto rng = make_rng(seed, name_tag(name));
    std::uniform_real_distribution<double> g(0.5, 1.5), b(-0.2, 0.2), m(-0.2, 0.2),
        v(0.5, 1.5);
    n.gamma.resize(static_cast<size_t>(channels));
    n.beta.resize(static_cast<size_t>(channels));
    n.mean.resize(static_cast<size_t>(channels));
    n.var.resize(static_cast<size_t>(channels));
    for (i64 i = 0; i < channels; ++i) {
        n.gamma[static_cast<size_t>(i)] = static_cast<float>(g(rng));
        n.beta[static_cast<size_t>(i)] = static_cast<float>(b(rng));
        n.mean[static_cast<size_t>(i)] = static_cast<float>(m(rng));
        n.var[static_cast<size_t>(i)] = static_cast<float>(v(rng));
    }
    return n;
}

Node residual_begin_node(const std::string& name) {
    Node n;
    n.kind = NodeKind::ResidualBegin;
    n.name = name;
    return n;
}

Node residual_add_node(const std::string& name, const std::string& begin) {
    Node n;
    n.kind = NodeKind::ResidualAdd;
    n.name = name;
    n.begin_name = begin;
    return n;
}

ModelGraph make_toy_vgg(u64 seed) {
    ModelGraph g;
    g.input_shape = {3, 32, 32};
    const i64 widths[6] = {16, 16, 32, 32, 64, 64};
    i64 c_in = 3;
    int pool_id = 1;
    for (int i = 0; i < 6; ++i) {
        const std::string id = std::to_string(i + 1);
        g.nodes.push_back(conv_node("conv" + id, widths[i], c_in, 3, 1, 1, seed + i));
        g.nodes.push_back(relu_node("relu" + id));
        if (i % 2 == 1) {
            g.nodes.push_back(maxpool_node("pool" + std::to_string(pool_id++), 2, 2));
        }
        c_in = widths[i];
    }
    g.validate();
    return g;
}

ModelGraph make_toy_resnet(u64 seed) {
    ModelGraph g;
    g.input_shape = {3, 16, 16};
    const i64 width = 16, mid = 8;
    g.nodes.push_back(conv_node("stem", width, 3, 3, 1, 1, seed));
    g.nodes.push_back(relu_node("stem_relu"));
    for (int b = 1; b <= 3; ++b) {
        const std::string id = "block" + std::to_string(b);
        const u64 s = seed + 100 * static_cast<u64>(b);
        g.nodes.push_back(residual_begin_node(id));
        g.nodes.push_back(conv_node(id + "_a", mid, width, 1, 1, 0, s + 1));
        g.nodes.push_back(relu_node(id + "_a_relu"));
        g.nodes.push_back(conv_node(id + "_b", mid, mid, 3, 1, 1, s + 2));
        g.nodes.push_back(relu_node(id + "_b_relu"));
        g.nodes.push_back(conv_node(id + "_c", width, mid, 1, 1, 0, s + 3));
        g.nodes.push_back(residual_add_node(id + "_add", id));
        g.nodes.push_back(relu_node(id + "_out_relu"));
    }
    g.validate();
    return g;
}

Tensor4 random_batch(i64 n, const ShapeCHW& shape, u64 seed) {
    Tensor4 t(n, shape.c, shape.h, shape.w);
    auto rng = make_rng(seed, 0x64617461ULL); // "data"
    std::normal_distribution<double> dist(0.0, 1.0);
    for (float& v : t.data) v = static_cast<float>(dist(rng));
    return t;
}

ModelGraph model_from_genspec(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("generator spec: ") + e.what());
    }
    try {
        const u64 seed = doc.value("seed", 42ULL);
        if (doc.contains("preset")) {
            const std::string p = doc.at("preset").get<std::string>();
            if (p == "toy-vgg") return make_toy_vgg(seed);
            if (p == "toy-resnet") return make_toy_resnet(seed);
            throw ParseError("unknown preset: " + p);
        }
        ModelGraph g;
        const auto& in = doc.at("input");
        g.input_shape = {in.at(0).get<i64>(), in.at(1).get<i64>(), in.at(2).get<i64>()};
        const double init_scale = doc.value("init_scale", 1.0);
        const bool bias = doc.value("bias", true);
        i64 c_in = g.input_shape.c;
        int auto_id = 0;
        u64 node_seed = seed;
        for (const auto& jn : doc.at("nodes")) {
            const std::string type = jn.at("type").get<std::string>();
            const std::string name =
                jn.value("name", type + std::to_string(++auto_id));
            if (type == "conv") {
                const i64 filters = jn.at("filters").get<i64>();
                const i64 k = jn.value("kernel", static_cast<i64>(3));
                const i64 stride = jn.value("stride", static_cast<i64>(1));
                const i64 pad = jn.value("pad", (k - 1) / 2);
                g.nodes.push_back(conv_node(name, filters, c_in, k, stride, pad,
                                            node_seed++, bias, init_scale));
                if (jn.value("batchnorm", false)) {
                    g.nodes.push_back(batchnorm_node(name + "_bn", filters, node_seed++));
                }
                c_in = filters;
            } else if (type == "relu") {
                g.nodes.push_back(relu_node(name));
            } else if (type == "maxpool" || type == "avgpool") {
                const i64 k = jn.value("kernel", static_cast<i64>(2));
                const i64 stride = jn.value("stride", k);
                g.nodes.push_back(type == "maxpool" ? maxpool_node(name, k, stride)
                                                    : avgpool_node(name, k, stride));
            } else if (type == "block") {
                const auto widths = jn.at("widths").get<std::vector<i64>>();
                std::vector<i64> kernels = jn.value("kernels", std::vector<i64>{});
                if (kernels.empty()) {
                    kernels.assign(widths.size(), 3);
                    if (widths.size() == 3) kernels = {1, 3, 1};
                }
                if (kernels.size() != widths.size()) {
                    throw ParseError("block " + name + ": widths/kernels length mismatch");
                }
                if (widths.empty() || widths.back() != c_in) {
                    throw ParseError("block " + name +
                                     ": last width must equal the block input channels");
                }
                g.nodes.push_back(residual_begin_node(name));
                i64 cc = c_in;
                for (size_t i = 0; i < widths.size(); ++i) {
                    const std::string cname = name + "_" + std::string(1, char('a' + i));
                    const i64 k = kernels[i];
                    g.nodes.push_back(conv_node(cname, widths[i], cc, k, 1, (k - 1) / 2,
                                                node_seed++, bias, init_scale));
                    if (i + 1 < widths.size()) {
                        g.nodes.push_back(relu_node(cname + "_relu"));
                    }
                    cc = widths[i];
                }
                g.nodes.push_back(residual_add_node(name + "_add", name));
                g.nodes.push_back(relu_node(name + "_out_relu"));
            } else {
                throw ParseError("generator spec: unknown node type " + type);
            }
        }
        g.validate();
        return g;
    } catch (const json::exception& e) {
        throw ParseError(std::string("generator spec: ") + e.what());
    }
}

} // namespace prunekit
