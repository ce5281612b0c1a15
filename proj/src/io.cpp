#include "prunekit/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace prunekit {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "PKT1 I/O assumes a little-endian host");

static constexpr char kMagic[4] = {'P', 'K', 'T', '1'};

void save_blob(const fs::path& path, const Blob& b) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path.string());
    f.write(kMagic, 4);
    const std::uint32_t rank = static_cast<std::uint32_t>(b.dims.size());
    f.write(reinterpret_cast<const char*>(&rank), sizeof(rank));
    i64 count = 1;
    for (i64 d : b.dims) {
        const std::uint64_t u = static_cast<std::uint64_t>(d);
        f.write(reinterpret_cast<const char*>(&u), sizeof(u));
        count *= d;
    }
    if (count != static_cast<i64>(b.data.size())) {
        throw ShapeError("save_blob: data length does not match dims");
    }
    f.write(reinterpret_cast<const char*>(b.data.data()),
            static_cast<std::streamsize>(b.data.size() * sizeof(float)));
    if (!f) throw IoError("write failed: " + path.string());
}

Blob load_blob(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path.string());
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0) {
        throw ParseError("not a PKT1 blob: " + path.string());
    }
    std::uint32_t rank = 0;
    f.read(reinterpret_cast<char*>(&rank), sizeof(rank));
    if (!f || rank > 8) throw ParseError("bad blob rank in " + path.string());
    Blob b;
    i64 count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        std::uint64_t d = 0;
        f.read(reinterpret_cast<char*>(&d), sizeof(d));
        if (!f || d > (1ull << 40)) throw ParseError("bad blob dim in " + path.string());
        b.dims.push_back(static_cast<i64>(d));
        count *= static_cast<i64>(d);
    }
    b.data.resize(static_cast<size_t>(count));
    f.read(reinterpret_cast<char*>(b.data.data()),
           static_cast<std::streamsize>(b.data.size() * sizeof(float)));
    if (!f) throw ParseError("truncated blob: " + path.string());
    return b;
}

void save_tensor(const fs::path& path, const Tensor4& t) {
    save_blob(path, {{t.dims[0], t.dims[1], t.dims[2], t.dims[3]}, t.data});
}

Tensor4 load_tensor(const fs::path& path) {
    Blob b = load_blob(path);
    if (b.dims.size() != 4) throw ParseError("expected rank-4 blob: " + path.string());
    Tensor4 t(b.dims[0], b.dims[1], b.dims[2], b.dims[3]);
    t.data = std::move(b.data);
    return t;
}

void save_vector(const fs::path& path, const std::vector<float>& v) {
    save_blob(path, {{static_cast<i64>(v.size())}, v});
}

std::vector<float> load_vector(const fs::path& path) {
    Blob b = load_blob(path);
    if (b.dims.size() != 1) throw ParseError("expected rank-1 blob: " + path.string());
    return std::move(b.data);
}

void save_matrix(const fs::path& path, const MatF& m) {
    save_blob(path, {{m.rows, m.cols}, m.v});
}

MatF load_matrix(const fs::path& path) {
    Blob b = load_blob(path);
    if (b.dims.size() != 2) throw ParseError("expected rank-2 blob: " + path.string());
    MatF m(b.dims[0], b.dims[1]);
    m.v = std::move(b.data);
    return m;
}

void save_model(const ModelGraph& g, const fs::path& dir, const std::string& stem) {
    fs::create_directories(dir);
    json doc;
    doc["format"] = "prunekit-model";
    doc["version"] = 1;
    doc["input_shape"] = {g.input_shape.c, g.input_shape.h, g.input_shape.w};
    json nodes = json::array();
    for (const Node& n : g.nodes) {
        json jn;
        jn["type"] = node_kind_name(n.kind);
        jn["name"] = n.name;
        switch (n.kind) {
            case NodeKind::Conv: {
                jn["stride"] = {n.sh, n.sw};
                jn["pad"] = {n.ph, n.pw};
                const std::string wfile = n.name + "_w.pkt";
                save_tensor(dir / wfile, n.weights);
                jn["weights"] = wfile;
                if (n.has_bias) {
                    const std::string bfile = n.name + "_b.pkt";
                    save_vector(dir / bfile, n.bias);
                    jn["bias"] = bfile;
                }
                break;
            }
            case NodeKind::MaxPool:
            case NodeKind::AvgPool:
                jn["kernel"] = {n.kh, n.kw};
                jn["stride"] = {n.sh, n.sw};
                jn["pad"] = {n.ph, n.pw};
                break;
            case NodeKind::BatchNorm: {
                const char* suffix[4] = {"_gamma.pkt", "_beta.pkt", "_mean.pkt", "_var.pkt"};
                const std::vector<float>* parts[4] = {&n.gamma, &n.beta, &n.mean, &n.var};
                const char* keys[4] = {"gamma", "beta", "mean", "var"};
                for (int i = 0; i < 4; ++i) {
                    const std::string file = n.name + suffix[i];
                    save_vector(dir / file, *parts[i]);
                    jn[keys[i]] = file;
                }
                jn["eps"] = n.eps;
                break;
            }
            case NodeKind::ChannelSampler:
                jn["indices"] = n.indices;
                break;
            case NodeKind::ResidualAdd:
                jn["begin"] = n.begin_name;
                break;
            default:
                break;
        }
        nodes.push_back(std::move(jn));
    }
    doc["nodes"] = std::move(nodes);
    std::ofstream f(dir / (stem + ".json"));
    if (!f) throw IoError("cannot open for writing: " + (dir / (stem + ".json")).string());
    f << doc.dump(2) << "\n";
}

ModelGraph load_model(const fs::path& json_path) {
    std::ifstream f(json_path);
    if (!f) throw IoError("cannot open: " + json_path.string());
    json doc;
    try {
        doc = json::parse(f);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("model json: ") + e.what());
    }
    const fs::path dir = json_path.parent_path();
    ModelGraph g;
    try {
        if (doc.at("format").get<std::string>() != "prunekit-model") {
            throw ParseError("not a prunekit model file: " + json_path.string());
        }
        const auto& shape = doc.at("input_shape");
        g.input_shape = {shape.at(0).get<i64>(), shape.at(1).get<i64>(),
                         shape.at(2).get<i64>()};
        for (const auto& jn : doc.at("nodes")) {
            Node n;
            n.kind = node_kind_from_name(jn.at("type").get<std::string>());
            n.name = jn.value("name", "");
            switch (n.kind) {
                case NodeKind::Conv:
                    n.sh = jn.at("stride").at(0).get<i64>();
                    n.sw = jn.at("stride").at(1).get<i64>();
                    n.ph = jn.at("pad").at(0).get<i64>();
                    n.pw = jn.at("pad").at(1).get<i64>();
                    n.weights = load_tensor(dir / jn.at("weights").get<std::string>());
                    if (jn.contains("bias")) {
                        n.bias = load_vector(dir / jn.at("bias").get<std::string>());
                        n.has_bias = true;
                    }
                    break;
                case NodeKind::MaxPool:
                case NodeKind::AvgPool:
                    n.kh = jn.at("kernel").at(0).get<i64>();
                    n.kw = jn.at("kernel").at(1).get<i64>();
                    n.sh = jn.at("stride").at(0).get<i64>();
                    n.sw = jn.at("stride").at(1).get<i64>();
                    n.ph = jn.value("pad", json::array({0, 0})).at(0).get<i64>();
                    n.pw = jn.value("pad", json::array({0, 0})).at(1).get<i64>();
                    break;
                case NodeKind::BatchNorm:
                    n.gamma = load_vector(dir / jn.at("gamma").get<std::string>());
                    n.beta = load_vector(dir / jn.at("beta").get<std::string>());
                    n.mean = load_vector(dir / jn.at("mean").get<std::string>());
                    n.var = load_vector(dir / jn.at("var").get<std::string>());
                    n.eps = jn.value("eps", 1e-5f);
                    break;
                case NodeKind::ChannelSampler:
                    n.indices = jn.at("indices").get<std::vector<i64>>();
                    break;
                case NodeKind::ResidualAdd:
                    n.begin_name = jn.value("begin", "");
                    break;
                default:
                    break;
            }
            g.nodes.push_back(std::move(n));
        }
    } catch (const json::exception& e) {
        throw ParseError("model json " + json_path.string() + ": " + e.what());
    }
    g.validate();
    return g;
}

} // namespace prunekit
