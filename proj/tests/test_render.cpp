#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "render.hpp"
#include "volume.hpp"

using namespace cloudnn;

namespace {

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

Scene sphere_scene(const Medium* m, int res = 24) {
    Scene s;
    s.medium = m;
    s.camera.position = {0, 0, -3};
    s.camera.look_at = {0, 0, 0};
    s.camera.width = res;
    s.camera.height = res;
    s.lights.push_back({normalize(Vec3{0.3, 1, -0.4}), {1, 1, 1}});
    return s;
}

double image_sum(const Image& img) {
    double s = 0;
    for (const Vec3& p : img.pixels) s += p.x + p.y + p.z;
    return s;
}

}  // namespace

TEST_CASE("pfm round trip is lossless for f32 data") {
    Image img(3, 2);
    img.at(0, 0) = {0.25, 0.5, 1.0};
    img.at(2, 1) = {3.5, 0.0, 100.0};
    img.at(1, 0) = {1e-4, 7.0, 0.125};
    std::string path = tmp_path("rt.pfm");
    write_pfm(img, path);
    Image r = read_pfm(path);
    REQUIRE(r.width == 3);
    REQUIRE(r.height == 2);
    // storage is f32, so compare against the float-rounded source
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 3; ++x) {
            CHECK(r.at(x, y).x == static_cast<double>(static_cast<float>(img.at(x, y).x)));
            CHECK(r.at(x, y).y == static_cast<double>(static_cast<float>(img.at(x, y).y)));
            CHECK(r.at(x, y).z == static_cast<double>(static_cast<float>(img.at(x, y).z)));
        }
    std::remove(path.c_str());
}

TEST_CASE("pfm files use the little-endian header and bottom-up rows") {
    Image img(1, 2);
    img.at(0, 0) = {1, 2, 3};  // top row
    img.at(0, 1) = {4, 5, 6};  // bottom row
    std::string path = tmp_path("hdr.pfm");
    write_pfm(img, path);
    std::ifstream f(path, std::ios::binary);
    std::string type, dims1, dims2, scale;
    f >> type >> dims1 >> dims2 >> scale;
    CHECK(type == "PF");
    CHECK(dims1 == "1");
    CHECK(dims2 == "2");
    CHECK(std::stod(scale) < 0);  // negative scale = little endian
    f.get();                      // single whitespace after the scale
    float v[6];
    f.read(reinterpret_cast<char*>(v), sizeof(v));
    // bottom row first
    CHECK(v[0] == 4.0f);
    CHECK(v[3] == 1.0f);
    std::remove(path.c_str());
}

TEST_CASE("pfm reader handles the big-endian variant") {
    std::string path = tmp_path("be.pfm");
    {
        std::ofstream f(path, std::ios::binary);
        f << "PF\n1 1\n1.0\n";
        unsigned char one_be[12] = {0x3f, 0x80, 0, 0, 0x40, 0, 0, 0, 0x40, 0x40, 0, 0};
        f.write(reinterpret_cast<const char*>(one_be), 12);  // 1, 2, 3
    }
    Image r = read_pfm(path);
    CHECK(r.at(0, 0).x == 1.0);
    CHECK(r.at(0, 0).y == 2.0);
    CHECK(r.at(0, 0).z == 3.0);
    std::remove(path.c_str());
}

TEST_CASE("pfm writer rejects nan and empty images") {
    Image img(2, 1);
    img.at(0, 0).x = std::nan("");
    CHECK_THROWS(write_pfm(img, tmp_path("nan.pfm")));
    CHECK_THROWS(write_pfm(Image(), tmp_path("empty.pfm")));
    CHECK_THROWS(read_pfm(tmp_path("missing.pfm")));
}

TEST_CASE("image metrics fixtures") {
    Image a(2, 2), b(2, 2);
    for (auto& p : b.pixels) p = {1, 1, 1};
    // a = checkerboard of 0 and 1 against constant 1: rmse = sqrt(0.5)
    a.at(0, 0) = {1, 1, 1};
    a.at(1, 1) = {1, 1, 1};
    ImageMetrics m = metrics(a, b);
    CHECK(m.rmse == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
    CHECK(m.relative_rmse == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));

    ImageMetrics same = metrics(b, b);
    CHECK(same.rmse == 0.0);
    CHECK(same.relative_rmse == 0.0);

    Image c(1, 1);
    CHECK_THROWS(metrics(a, c));  // size mismatch
}

TEST_CASE("ttuv and speedup arithmetic") {
    RenderStats ref;
    ref.seconds = 10;
    ref.mean_variance = 0.04;
    RenderStats fast;
    fast.seconds = 0.5;
    fast.mean_variance = 0.02;
    CHECK(ttuv(ref) == doctest::Approx(0.4));
    CHECK(ttuv(fast) == doctest::Approx(0.01));
    CHECK(speedup(ref, fast) == doctest::Approx(40.0));
}

TEST_CASE("camera rays hit the image plane as expected") {
    Camera cam;
    cam.position = {0, 0, -2};
    cam.look_at = {0, 0, 0};
    cam.width = cam.height = 64;
    cam.vfov_deg = 45;
    Vec3 center = cam.ray_dir(31, 31, 1.0, 1.0);  // exact image center
    CHECK(center.x == doctest::Approx(0.0).scale(1));
    CHECK(center.y == doctest::Approx(0.0).scale(1));
    CHECK(center.z == doctest::Approx(1.0));
    // +y pixel direction points down in world (top-left origin)
    Vec3 below = cam.ray_dir(31, 40, 1.0, 1.0);
    CHECK(below.y < 0);
    // right-handed frame: for a camera at -z looking toward +z with up=+y,
    // increasing pixel x maps to world -x
    Vec3 right = cam.ray_dir(40, 31, 1.0, 1.0);
    CHECK(right.x < 0);

    Camera bad = cam;
    bad.width = 0;
    CHECK_THROWS(bad.validate());
    bad = cam;
    bad.vfov_deg = 180;
    CHECK_THROWS(bad.validate());
}

TEST_CASE("an empty medium renders to black") {
    Medium m = Medium::homogeneous_sphere({0, 0, 0}, 1.0, 0.0, 1.0, PhaseFunction::isotropic());
    Scene s = sphere_scene(&m, 8);
    RenderConfig cfg;
    cfg.spp = 4;
    RenderResult r = render(s, cfg);
    CHECK(image_sum(r.image) == 0.0);
    CHECK(r.stats.spp == 4);
    CHECK(r.stats.seconds > 0);
}

TEST_CASE("path tracing with one bounce is identical to single-scatter mode") {
    Medium m = Medium::homogeneous_sphere({0, 0, 0}, 1.0, 1.5, 0.9,
                                          PhaseFunction::henyey_greenstein(0.5));
    Scene s = sphere_scene(&m, 16);
    RenderConfig pt;
    pt.mode = RenderMode::PathTrace;
    pt.max_bounces = 1;
    pt.spp = 8;
    pt.seed = 5;
    RenderConfig ss = pt;
    ss.mode = RenderMode::SingleScatter;
    Image a = render(s, pt).image;
    Image b = render(s, ss).image;
    REQUIRE(a.pixels.size() == b.pixels.size());
    for (size_t i = 0; i < a.pixels.size(); ++i) {
        CHECK(a.pixels[i].x == b.pixels[i].x);
        CHECK(a.pixels[i].y == b.pixels[i].y);
        CHECK(a.pixels[i].z == b.pixels[i].z);
    }
    CHECK(image_sum(a) > 0);
}

TEST_CASE("renders are deterministic for a fixed seed and differ across seeds") {
    Medium m = Medium::homogeneous_sphere({0, 0, 0}, 1.0, 1.0, 0.95,
                                          PhaseFunction::isotropic());
    Scene s = sphere_scene(&m, 12);
    RenderConfig cfg;
    cfg.spp = 4;
    cfg.seed = 3;
    Image a = render(s, cfg).image;
    Image b = render(s, cfg).image;
    for (size_t i = 0; i < a.pixels.size(); ++i) CHECK(a.pixels[i] == b.pixels[i]);
    cfg.seed = 4;
    Image c = render(s, cfg).image;
    CHECK(image_sum(c) != image_sum(a));
}

TEST_CASE("radiance scales linearly with light irradiance") {
    Medium m = Medium::homogeneous_sphere({0, 0, 0}, 1.0, 1.2, 0.9,
                                          PhaseFunction::isotropic());
    Scene s1 = sphere_scene(&m, 12);
    Scene s2 = s1;
    s2.lights[0].irradiance = {2, 2, 2};
    RenderConfig cfg;
    cfg.spp = 4;
    cfg.seed = 9;
    Image a = render(s1, cfg).image;
    Image b = render(s2, cfg).image;
    for (size_t i = 0; i < a.pixels.size(); ++i)
        CHECK(b.pixels[i].x == doctest::Approx(2 * a.pixels[i].x).epsilon(1e-12));
}

TEST_CASE("pixel values are non-negative and finite") {
    NormalizedVolume vol = normalize(gen_procedural_cloud(61, 32), 50.0, 0);
    PhaseFunction hg = PhaseFunction::henyey_greenstein(0.7);
    Medium m = Medium::from_volume(&vol, 0.95, hg, hg);
    Scene s;
    s.medium = &m;
    s.camera.position = {0.5, 0.5, -1.5};
    s.camera.look_at = {0.5, 0.5, 0.5};
    s.camera.width = s.camera.height = 16;
    s.lights.push_back({normalize(Vec3{0, 1, 0.2}), {1, 0.9, 0.8}});
    RenderConfig cfg;
    cfg.spp = 8;
    RenderResult r = render(s, cfg);
    for (const Vec3& p : r.image.pixels) {
        CHECK(p.x >= 0);
        CHECK(std::isfinite(p.x));
        CHECK(std::isfinite(p.y + p.z));
    }
    CHECK(image_sum(r.image) > 0);
}

TEST_CASE("variance estimate shrinks roughly linearly with spp") {
    Medium m = Medium::homogeneous_sphere({0, 0, 0}, 1.0, 1.0, 0.9,
                                          PhaseFunction::isotropic());
    Scene s = sphere_scene(&m, 12);
    RenderConfig lo;
    lo.spp = 8;
    lo.seed = 1;
    RenderConfig hi = lo;
    hi.spp = 64;
    double v_lo = render(s, lo).stats.mean_variance;
    double v_hi = render(s, hi).stats.mean_variance;
    CHECK(v_lo > 0);
    CHECK(v_hi > 0);
    double ratio = v_lo / v_hi;  // expect ~8
    CHECK(ratio > 3.0);
    CHECK(ratio < 20.0);
}

TEST_CASE("environment map sampling is consistent with its stored radiance") {
    Image env(8, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 8; ++x) env.at(x, y) = {0.1, 0.1, 0.1};
    env.at(2, 1) = {50, 40, 30};  // one bright texel
    EnvMap em(env, 16);

    // radiance lookup round trip
    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
        auto smp = em.sample(rng.uniform(), rng.uniform());
        CHECK(smp.pdf > 0);
        Vec3 lr = em.radiance(smp.dir);
        CHECK(lr.x == doctest::Approx(smp.radiance.x));
        CHECK(em.pdf(smp.dir) == doctest::Approx(smp.pdf).epsilon(1e-9));
    }

    // monte carlo integral of L/pdf approximates total env power per sr
    double sum = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        auto smp = em.sample(rng.uniform(), rng.uniform());
        sum += smp.radiance.x / smp.pdf;
    }
    // compare against direct texel-sum integral
    double direct = 0;
    for (int y = 0; y < 4; ++y) {
        double theta0 = M_PI * y / 4, theta1 = M_PI * (y + 1) / 4;
        double solid = (std::cos(theta0) - std::cos(theta1)) * (2 * M_PI / 8);
        for (int x = 0; x < 8; ++x) direct += env.at(x, y).x * solid;
    }
    CHECK(sum / n == doctest::Approx(direct).epsilon(0.05));

    // expansion conserves the same integral
    std::vector<DirectionalLight> lights = em.expand();
    CHECK(lights.size() == 16);
    Vec3 tot{0, 0, 0};
    for (const auto& l : lights) tot = tot + l.irradiance;
    CHECK(tot.x == doctest::Approx(direct).epsilon(0.05));
}

TEST_CASE("a trained model drives the fast render mode") {
    // constant-output model: zero weights, positive final bias
    Architecture arch;
    arch.levels = 3;
    arch.width = 8;
    arch.n_final = 2;
    arch.points_per_level = 225;
    Params p;
    p.arch = arch;
    for (auto [r, c] : arch.tensor_shapes()) p.tensors.push_back(Eigen::MatrixXd::Zero(r, c));
    p.tensors.back()(0, 0) = 0.25;  // final bias

    NormalizedVolume vol = normalize(gen_procedural_cloud(62, 32), 50.0, 0);
    PhaseFunction hg = PhaseFunction::henyey_greenstein(0.5);
    Medium m = Medium::from_volume(&vol, 0.9, hg, hg);
    Scene s;
    s.medium = &m;
    s.camera.position = {0.5, 0.5, -1.5};
    s.camera.look_at = {0.5, 0.5, 0.5};
    s.camera.width = s.camera.height = 12;
    s.lights.push_back({{0, 0, -1}, {2, 2, 2}});

    RenderConfig cfg;
    cfg.mode = RenderMode::Rpnn;
    cfg.spp = 4;
    cfg.stencil.levels = arch.levels;
    RenderResult r = render(s, cfg, &p);
    CHECK(image_sum(r.image) > 0);
    for (const Vec3& px : r.image.pixels) CHECK(px.x >= 0);

    // rpnn mode without a model is an error
    CHECK_THROWS(render(s, cfg, nullptr));
}
