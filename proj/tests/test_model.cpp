#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "reid/checkpoint.hpp"
#include "reid/model.hpp"

using namespace reid;
namespace fs = std::filesystem;

namespace {

Tensor<float> random_images(Rng& rng, std::size_t b, std::size_t h, std::size_t w) {
    std::vector<float> v(b * 3 * h * w);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-0.5, 0.5));
    return Tensor<float>::from_vector({b, 3, h, w}, std::move(v), false);
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("reid_test_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

}  // namespace

TEST_CASE("build is deterministic: same config and seed, same checksums") {
    auto cfg = ModelConfig::desk_preset(12);
    auto m1 = build(cfg, 99);
    auto m2 = build(cfg, 99);
    CHECK(model_checksum(m1) == model_checksum(m2));
    auto m3 = build(cfg, 100);
    CHECK(model_checksum(m1) != model_checksum(m3));
}

TEST_CASE("paper preset parameter inventory") {
    auto cfg = ModelConfig::paper_preset(100);
    cfg.validate();
    auto m = build(cfg, 1);
    int convs = 0, fcs = 0, frws = 0, heads = 0;
    for (const auto& t : named_tensors(m)) {
        if (t.name.rfind("conv", 0) == 0 && t.name.find(".weight") != std::string::npos) ++convs;
        if (t.name == "fc.weight") ++fcs;
        if (t.name == "frw.weight") ++frws;
        if (t.name == "head.weight") ++heads;
    }
    CHECK(convs == 9);
    CHECK(fcs == 1);
    CHECK(frws == 1);
    CHECK(heads == 1);
    CHECK(m.cfg.embedding_dim == 512);
    CHECK(m.cfg.pool_after.size() == 4);
    CHECK(m.cfg.input_h == 128);
    CHECK(m.cfg.input_w == 48);
}

TEST_CASE("paper preset invariants are enforced") {
    auto cfg = ModelConfig::paper_preset(10);
    cfg.conv_channels.pop_back();
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = ModelConfig::paper_preset(10);
    cfg.embedding_dim = 256;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = ModelConfig::paper_preset(10);
    cfg.pool_after = {2, 4, 6};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("inconsistent config is rejected") {
    auto cfg = ModelConfig::desk_preset(5);
    cfg.pool_after = {2, 9};  // beyond conv count
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = ModelConfig::desk_preset(5);
    cfg.pool_after = {3, 2};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = ModelConfig::desk_preset(5);
    cfg.lrelu_slope = 1.2;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("embed returns B x D and is deterministic in eval mode") {
    auto cfg = ModelConfig::desk_preset(8);
    auto m = build(cfg, 3);
    m.set_mode(Mode::eval);
    Rng rng(5);
    auto images = random_images(rng, 6, cfg.input_h, cfg.input_w);
    auto e1 = embed(m, images);
    auto e2 = embed(m, images);
    CHECK(e1.shape() == Shape{6, cfg.embedding_dim});
    CHECK(e1.values() == e2.values());
}

TEST_CASE("embed demands eval mode and the preset input size") {
    auto cfg = ModelConfig::desk_preset(8);
    auto m = build(cfg, 3);
    Rng rng(5);
    auto images = random_images(rng, 2, cfg.input_h, cfg.input_w);
    CHECK_THROWS_AS(embed(m, images), ContractError);  // still in train mode
    m.set_mode(Mode::eval);
    auto wrong = random_images(rng, 2, cfg.input_h + 2, cfg.input_w);
    CHECK_THROWS_AS(embed(m, wrong), DimensionError);
}

TEST_CASE("reweighting-enabled output is the disabled output times the weights") {
    auto cfg_on = ModelConfig::desk_preset(8);
    auto cfg_off = cfg_on;
    cfg_off.frw_enabled = false;
    auto m_on = build(cfg_on, 42);
    auto m_off = build(cfg_off, 42);
    m_on.set_mode(Mode::eval);
    m_off.set_mode(Mode::eval);
    Rng rng(9);
    auto images = random_images(rng, 3, cfg_on.input_h, cfg_on.input_w);
    auto e_on = embed(m_on, images);
    auto e_off = embed(m_off, images);
    REQUIRE(m_on.frw.has_value());
    const auto& w = m_on.frw->w.values();
    const std::size_t d = cfg_on.embedding_dim;
    for (std::size_t i = 0; i < e_on.numel(); ++i)
        CHECK(e_on.values()[i] == doctest::Approx(e_off.values()[i] * w[i % d]).epsilon(1e-6));
}

TEST_CASE("replace_head changes exactly the head and centers") {
    auto cfg = ModelConfig::desk_preset(10);
    auto m = build(cfg, 7);
    // give centers some content so the reset is observable
    m.centers.centers.values_mut()[0] = 1.5f;
    const auto backbone_before = backbone_checksum(m);
    const auto full_before = model_checksum(m);
    replace_head(m, 17, 123);
    CHECK(backbone_checksum(m) == backbone_before);
    CHECK(model_checksum(m) != full_before);
    CHECK(m.head.num_classes() == 17);
    CHECK(m.centers.num_classes() == 17);
    CHECK(m.cfg.num_classes == 17);
    for (float c : m.centers.centers.values()) CHECK(c == 0.0f);
    CHECK_THROWS_AS(replace_head(m, 1, 5), ContractError);
}

TEST_CASE("checkpoint round-trip is bitwise exact") {
    TempDir tmp;
    auto cfg = ModelConfig::desk_preset(6);
    auto m = build(cfg, 21);
    // dirty the state a little
    m.input_mean.values_mut() = {0.25f, 0.5f, 0.125f};
    m.centers.centers.values_mut()[3] = -0.75f;
    const auto path = (tmp.path / "model.ckpt").string();
    save_checkpoint(m, path);
    auto loaded = load_checkpoint(path);
    CHECK(model_checksum(loaded) == model_checksum(m));
    CHECK(loaded.cfg == m.cfg);
    // and through the expected-config overload
    auto loaded2 = load_checkpoint(path, cfg);
    CHECK(model_checksum(loaded2) == model_checksum(m));
}

TEST_CASE("checkpoint only loads under the matching config") {
    TempDir tmp;
    auto m = build(ModelConfig::desk_preset(6), 2);
    const auto path = (tmp.path / "desk.ckpt").string();
    save_checkpoint(m, path);
    CHECK_THROWS_AS(load_checkpoint(path, ModelConfig::paper_preset(6)), ConfigError);
}

TEST_CASE("checkpoint with mismatched embedding dim names the offending tensor") {
    TempDir tmp;
    auto m = build(ModelConfig::desk_preset(6), 2);
    const auto path = (tmp.path / "desk.ckpt").string();
    save_checkpoint(m, path);
    // flip embedding_dim 32 -> 64 inside the embedded config (same byte length)
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    in.close();
    const auto pos = bytes.find("embedding_dim=32");
    REQUIRE(pos != std::string::npos);
    bytes.replace(pos, 16, "embedding_dim=64");
    const auto patched = (tmp.path / "patched.ckpt").string();
    std::ofstream out(patched, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    try {
        load_checkpoint(patched);
        FAIL("expected a dimension error");
    } catch (const DimensionError& e) {
        CHECK(std::string(e.what()).find("fc.weight") != std::string::npos);
    }
}

TEST_CASE("checkpoint errors are distinct") {
    TempDir tmp;
    auto m = build(ModelConfig::desk_preset(6), 2);
    const auto path = (tmp.path / "a.ckpt").string();
    save_checkpoint(m, path);

    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    in.close();

    // truncated
    const auto trunc = (tmp.path / "trunc.ckpt").string();
    {
        std::ofstream out(trunc, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(trunc), doctest::Contains("truncated"), IoError);

    // bad magic
    const auto magic = (tmp.path / "magic.ckpt").string();
    {
        std::string b2 = bytes;
        b2[0] = 'X';
        std::ofstream out(magic, std::ios::binary);
        out.write(b2.data(), static_cast<std::streamsize>(b2.size()));
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(magic), doctest::Contains("magic"), IoError);

    // wrong version
    const auto ver = (tmp.path / "ver.ckpt").string();
    {
        std::string b2 = bytes;
        b2[8] = 9;  // version field follows the 8-byte magic
        std::ofstream out(ver, std::ios::binary);
        out.write(b2.data(), static_cast<std::streamsize>(b2.size()));
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(ver), doctest::Contains("version"), IoError);
}

TEST_CASE("clone produces an independent equal model") {
    auto m = build(ModelConfig::desk_preset(4), 11);
    auto c = clone(m);
    CHECK(model_checksum(c) == model_checksum(m));
    c.head.weights.values_mut()[0] += 1.0f;
    CHECK(model_checksum(c) != model_checksum(m));
}

TEST_CASE("paper preset forwards a batch end to end") {
    auto cfg = ModelConfig::paper_preset(16);
    auto m = build(cfg, 5);
    m.set_mode(Mode::eval);
    Rng rng(3);
    auto images = random_images(rng, 2, cfg.input_h, cfg.input_w);
    auto emb = embed(m, images);
    CHECK(emb.shape() == Shape{2, 512});
    for (float v : emb.values()) CHECK(std::isfinite(v));
}

TEST_CASE("forward in train mode updates batchnorm running stats, eval does not") {
    auto m = build(ModelConfig::desk_preset(4), 1);
    Rng rng(2);
    auto images = random_images(rng, 4, m.cfg.input_h, m.cfg.input_w);
    const auto before = m.blocks[0].bn.running_mean.values();
    forward_embedding(m, images);
    CHECK(m.blocks[0].bn.running_mean.values() != before);
    m.set_mode(Mode::eval);
    const auto frozen = m.blocks[0].bn.running_mean.values();
    forward_embedding(m, images);
    CHECK(m.blocks[0].bn.running_mean.values() == frozen);
}
