#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "prunekit/forward.hpp"
#include "prunekit/io.hpp"
#include "testutil.hpp"

using namespace prunekit;
using namespace testutil;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("prunekit_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::vector<char> read_bytes(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

} // namespace

TEST_CASE("blob header layout is PKT1 / rank / dims / payload") {
    const fs::path dir = temp_dir("blob");
    save_blob(dir / "t.pkt", {{2, 3}, {1, 2, 3, 4, 5, 6}});
    const auto bytes = read_bytes(dir / "t.pkt");
    REQUIRE(bytes.size() == 4 + 4 + 2 * 8 + 6 * 4);
    CHECK(bytes[0] == 'P');
    CHECK(bytes[1] == 'K');
    CHECK(bytes[2] == 'T');
    CHECK(bytes[3] == '1');
    CHECK(bytes[4] == 2); // rank, little-endian u32
    CHECK(bytes[8] == 2); // first dim, little-endian u64
    CHECK(bytes[16] == 3);
}

TEST_CASE("tensor round-trips exactly") {
    const fs::path dir = temp_dir("tensor");
    const Tensor4 t = random_tensor(2, 3, 4, 5, 77);
    save_tensor(dir / "t.pkt", t);
    const Tensor4 u = load_tensor(dir / "t.pkt");
    CHECK(u.dims == t.dims);
    CHECK(u.data == t.data);
}

TEST_CASE("loading garbage fails cleanly") {
    const fs::path dir = temp_dir("garbage");
    std::ofstream(dir / "x.pkt") << "not a blob at all";
    CHECK_THROWS_AS(load_tensor(dir / "x.pkt"), ParseError);
    CHECK_THROWS_AS(load_tensor(dir / "missing.pkt"), IoError);
}

TEST_CASE("model save/load preserves structure and forward outputs") {
    const fs::path dir = temp_dir("model");
    const ModelGraph g = make_toy_resnet(42);
    save_model(g, dir);
    const ModelGraph h = load_model(dir / "model.json");
    REQUIRE(h.nodes.size() == g.nodes.size());
    const Tensor4 in = random_batch(2, g.input_shape, 3);
    const Tensor4 a = forward(g, in);
    const Tensor4 b = forward(h, in);
    CHECK(a.data == b.data);
}

TEST_CASE("model with sampler and batchnorm round-trips") {
    const fs::path dir = temp_dir("model2");
    ModelGraph g;
    g.input_shape = {4, 6, 6};
    Node s;
    s.kind = NodeKind::ChannelSampler;
    s.name = "pick";
    s.indices = {0, 2, 3};
    g.nodes.push_back(s);
    g.nodes.push_back(conv_node("c", 5, 3, 3, 1, 1, 11));
    g.nodes.push_back(batchnorm_node("c_bn", 5, 12));
    g.nodes.push_back(maxpool_node("p", 2, 2));
    g.validate();
    save_model(g, dir);
    const ModelGraph h = load_model(dir / "model.json");
    CHECK(h.nodes[0].indices == std::vector<i64>{0, 2, 3});
    const Tensor4 in = random_batch(1, g.input_shape, 4);
    CHECK(forward(g, in).data == forward(h, in).data);
}

TEST_CASE("regenerated model files are byte-identical under one seed") {
    const fs::path d1 = temp_dir("det1"), d2 = temp_dir("det2");
    save_model(make_toy_vgg(42), d1);
    save_model(make_toy_vgg(42), d2);
    for (const auto& e : fs::directory_iterator(d1)) {
        const auto other = d2 / e.path().filename();
        REQUIRE(fs::exists(other));
        CHECK(read_bytes(e.path()) == read_bytes(other));
    }
}
