#include <omp.h>

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "dataset.hpp"
#include "net.hpp"
#include "render.hpp"

using namespace cloudnn;

namespace {

// "iso" | "hg:G" | "table:PATH[:chopdeg]"
struct PhaseSetup {
    PhaseFunction first = PhaseFunction::isotropic();
    PhaseFunction rest = PhaseFunction::isotropic();
    double peak_fraction = 0;  // w of the chopped peak, 0 when not chopping
};

PhaseSetup parse_phase(const std::string& spec) {
    PhaseSetup out;
    if (spec == "iso") return out;
    if (spec.rfind("hg:", 0) == 0) {
        double g = std::stod(spec.substr(3));
        out.first = out.rest = PhaseFunction::henyey_greenstein(g);
        return out;
    }
    if (spec.rfind("table:", 0) == 0) {
        std::string rest = spec.substr(6);
        double chop_deg = 5.0;
        size_t colon = rest.rfind(':');
        if (colon != std::string::npos && colon > 1 &&
            rest.find_first_not_of("0123456789.", colon + 1) == std::string::npos) {
            chop_deg = std::stod(rest.substr(colon + 1));
            rest = rest.substr(0, colon);
        }
        PhaseFunction full = load_table(rest);
        ChoppedPhase cp = chop(full, chop_deg * M_PI / 180.0);
        out.first = full;
        out.rest = cp.chopped;
        out.peak_fraction = cp.w;
        return out;
    }
    throw CLI::ValidationError("--phase", "expected iso | hg:G | table:PATH[:chopdeg]");
}

// Applies the similarity reduction that pairs with a chopped phase.
void apply_reduction(double& sigma_t, double& albedo, double w) {
    if (w <= 0) return;
    ReducedCoefficients rc = reduced_coefficients(sigma_t, albedo, w);
    sigma_t = rc.mu_t;
    albedo = rc.mu_t > 0 ? rc.mu_s / rc.mu_t : 0.0;
}

Vec3 parse_vec3(const std::string& s, const std::string& flag) {
    Vec3 v;
    char c1, c2;
    std::istringstream ss(s);
    if (!(ss >> v.x >> c1 >> v.y >> c2 >> v.z) || c1 != ',' || c2 != ',')
        throw CLI::ValidationError(flag, "expected X,Y,Z");
    return v;
}

DirectionalLight parse_light(const std::string& s) {
    if (s.rfind("dir:", 0) != 0)
        throw CLI::ValidationError("--light", "expected dir:X,Y,Z:R,G,B");
    std::string rest = s.substr(4);
    size_t colon = rest.find(':', 0);
    size_t second = rest.find(':', colon == std::string::npos ? 0 : colon + 1);
    // the direction and irradiance triplets are separated by the second ':'
    size_t split = std::string::npos;
    int commas = 0;
    for (size_t i = 0; i < rest.size(); ++i) {
        if (rest[i] == ',') ++commas;
        if (rest[i] == ':' && commas == 2) {
            split = i;
            break;
        }
    }
    (void)colon;
    (void)second;
    if (split == std::string::npos)
        throw CLI::ValidationError("--light", "expected dir:X,Y,Z:R,G,B");
    DirectionalLight l;
    l.dir_to_light = normalize(parse_vec3(rest.substr(0, split), "--light"));
    l.irradiance = parse_vec3(rest.substr(split + 1), "--light");
    return l;
}

void write_stats(const std::string& path, const RenderStats& s) {
    std::ofstream out(path);
    out << "time_s=" << s.seconds << "\n"
        << "spp=" << s.spp << "\n"
        << "mean_variance=" << s.mean_variance << "\n"
        << "ttuv=" << s.ttuv << "\n";
}

RenderStats read_stats(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open stats file: " + path);
    RenderStats s;
    std::string line;
    while (std::getline(in, line)) {
        size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq);
        double val = std::stod(line.substr(eq + 1));
        if (key == "time_s") s.seconds = val;
        else if (key == "spp") s.spp = static_cast<int>(val);
        else if (key == "mean_variance") s.mean_variance = val;
        else if (key == "ttuv") s.ttuv = val;
    }
    return s;
}

std::vector<std::string> list_cloud_files(const std::string& spec) {
    namespace fs = std::filesystem;
    std::vector<std::string> files;
    if (fs::is_directory(spec)) {
        for (const auto& e : fs::directory_iterator(spec))
            if (e.path().extension() == ".vox") files.push_back(e.path().string());
        std::sort(files.begin(), files.end());
    } else {
        std::stringstream ss(spec);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty()) files.push_back(item);
    }
    if (files.empty()) throw std::runtime_error("no cloud files found in: " + spec);
    return files;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neural radiance prediction for cloud rendering"};
    app.require_subcommand(1);
    app.set_config("--config");

    int threads = 0;
    uint64_t seed = 0;
    app.add_option("--threads", threads, "worker threads (0 = machine parallelism)");

    // gen-cloud
    auto* gen_cloud = app.add_subcommand("gen-cloud", "generate a procedural cloud grid");
    int gc_res = 64;
    std::string gc_out;
    CloudParams gc_params;
    gen_cloud->add_option("--seed", seed, "generation seed")->capture_default_str();
    gen_cloud->add_option("--res", gc_res, "grid resolution per axis")->capture_default_str();
    gen_cloud->add_option("--out", gc_out, "output VOXG path")->required();
    gen_cloud->add_option("--ellipsoids", gc_params.ellipsoids)->capture_default_str();
    gen_cloud->add_option("--noise-freq", gc_params.noise_freq)->capture_default_str();
    gen_cloud->add_option("--noise-amp", gc_params.noise_amp)->capture_default_str();
    gen_cloud->add_option("--threshold", gc_params.threshold)->capture_default_str();

    // gen-data
    auto* gen_data = app.add_subcommand("gen-data", "generate a training dataset");
    std::string gd_clouds, gd_phase = "iso", gd_out;
    double gd_albedo = 0.98, gd_sigma_t = 60.0;
    size_t gd_records = 1000;
    StopRule gd_stop;
    bool gd_debug = false;
    gen_data->add_option("--clouds", gd_clouds, "cloud dir or comma list of .vox files")
        ->required();
    gen_data->add_option("--phase", gd_phase, "iso | hg:G | table:PATH[:chopdeg]")
        ->capture_default_str();
    gen_data->add_option("--albedo", gd_albedo)->capture_default_str();
    gen_data->add_option("--sigma-t", gd_sigma_t)->capture_default_str();
    gen_data->add_option("--records", gd_records)->capture_default_str();
    gen_data->add_option("--out", gd_out, "output RPND path")->required();
    gen_data->add_option("--seed", seed)->capture_default_str();
    gen_data->add_option("--rel-tol", gd_stop.rel_tol)->capture_default_str();
    gen_data->add_option("--max-samples", gd_stop.max_samples)->capture_default_str();
    gen_data->add_flag("--debug-records", gd_debug, "store per-record (x, omega, omega_l)");

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model on a dataset");
    std::string tr_data, tr_arch = "rpnn", tr_out, tr_curves;
    TrainConfig tr_cfg;
    tr_cfg.batch_size = 1000;
    double tr_val_frac = 0.25;
    int tr_width = 200, tr_levels = 10;
    train_cmd->add_option("--data", tr_data, "RPND dataset")->required();
    train_cmd->add_option("--arch", tr_arch, "rpnn | mlp-deep | mlp-wide")
        ->capture_default_str();
    train_cmd->add_option("--steps", tr_cfg.steps)->capture_default_str();
    train_cmd->add_option("--batch", tr_cfg.batch_size)->capture_default_str();
    train_cmd->add_option("--val-frac", tr_val_frac)->capture_default_str();
    train_cmd->add_option("--val-every", tr_cfg.val_every)->capture_default_str();
    train_cmd->add_option("--lr", tr_cfg.lr)->capture_default_str();
    train_cmd->add_option("--seed", seed)->capture_default_str();
    train_cmd->add_option("--width", tr_width)->capture_default_str();
    train_cmd->add_option("--levels", tr_levels)->capture_default_str();
    train_cmd->add_option("--out", tr_out, "output RPNW model")->required();
    train_cmd->add_option("--curves-out", tr_curves, "loss curves CSV");

    // render
    auto* render_cmd = app.add_subcommand("render", "render a cloud");
    std::string rd_cloud, rd_mode = "pt", rd_model, rd_phase = "iso", rd_out, rd_stats,
                rd_envmap;
    std::vector<std::string> rd_lights;
    double rd_albedo = 0.98, rd_sigma_t = 60.0, rd_fov = 45.0;
    int rd_spp = 16, rd_max_bounces = kBounceCap, rd_w = 128, rd_h = 128, rd_env_dirs = 16;
    std::string rd_cam_pos = "0.5,0.5,-1.5", rd_cam_target = "0.5,0.5,0.5",
                rd_cam_up = "0,1,0";
    render_cmd->add_option("--cloud", rd_cloud, "VOXG cloud file")->required();
    render_cmd->add_option("--mode", rd_mode, "pt | rpnn | ss")->capture_default_str();
    render_cmd->add_option("--model", rd_model, "RPNW model (rpnn mode)");
    render_cmd->add_option("--light", rd_lights, "dir:X,Y,Z:R,G,B (repeatable)");
    render_cmd->add_option("--envmap", rd_envmap, "lat-long PFM environment");
    render_cmd->add_option("--env-dirs", rd_env_dirs)->capture_default_str();
    render_cmd->add_option("--spp", rd_spp)->capture_default_str();
    render_cmd->add_option("--max-bounces", rd_max_bounces)->capture_default_str();
    render_cmd->add_option("--albedo", rd_albedo)->capture_default_str();
    render_cmd->add_option("--sigma-t", rd_sigma_t)->capture_default_str();
    render_cmd->add_option("--phase", rd_phase)->capture_default_str();
    render_cmd->add_option("--cam-pos", rd_cam_pos)->capture_default_str();
    render_cmd->add_option("--cam-target", rd_cam_target)->capture_default_str();
    render_cmd->add_option("--cam-up", rd_cam_up)->capture_default_str();
    render_cmd->add_option("--fov", rd_fov)->capture_default_str();
    render_cmd->add_option("--width", rd_w)->capture_default_str();
    render_cmd->add_option("--height", rd_h)->capture_default_str();
    render_cmd->add_option("--seed", seed)->capture_default_str();
    render_cmd->add_option("--out", rd_out, "output PFM image")->required();
    render_cmd->add_option("--stats-out", rd_stats, "render stats key=value file");

    // compare
    auto* compare_cmd = app.add_subcommand("compare", "image metrics and TTUV speedup");
    std::string cp_a, cp_b;
    std::vector<std::string> cp_stats;
    compare_cmd->add_option("a", cp_a, "test image (PFM)")->required();
    compare_cmd->add_option("b", cp_b, "reference image (PFM)")->required();
    compare_cmd->add_option("--stats", cp_stats, "stats files: ours reference")
        ->expected(2);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "mean loss of a model over a dataset");
    std::string ev_model, ev_data;
    eval_cmd->add_option("--model", ev_model)->required();
    eval_cmd->add_option("--data", ev_data)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (threads > 0) omp_set_num_threads(threads);

    // reproducibility record
    std::ostringstream cfgline;
    cfgline << "config:";
    for (int i = 1; i < argc; ++i) cfgline << " " << argv[i];
    cfgline << " [seed=" << seed << " threads=" << (threads > 0 ? threads : omp_get_max_threads())
            << "]";
    std::cerr << cfgline.str() << "\n";

    try {
        if (gen_cloud->parsed()) {
            DensityGrid grid = gen_procedural_cloud(seed, gc_res, gc_params);
            save_grid(grid, gc_out);
            std::cerr << "wrote " << gc_out << " (" << gc_res << "^3)\n";
        } else if (gen_data->parsed()) {
            PhaseSetup ph = parse_phase(gd_phase);
            apply_reduction(gd_sigma_t, gd_albedo, ph.peak_fraction);
            std::vector<NormalizedVolume> volumes;
            for (const auto& f : list_cloud_files(gd_clouds))
                volumes.push_back(normalize(load_grid(f), gd_sigma_t));
            std::vector<Medium> media;
            for (const auto& v : volumes)
                media.push_back(Medium::from_volume(&v, gd_albedo, ph.first, ph.rest));
            GenOptions opt;
            opt.stop = gd_stop;
            opt.seed = seed;
            opt.with_debug = gd_debug;
            Dataset ds = generate_records(media, gd_records, opt);
            save_dataset(ds, gd_out);
            std::cerr << "wrote " << gd_out << " (" << ds.size() << " records)\n";
        } else if (train_cmd->parsed()) {
            Architecture arch;
            if (tr_arch == "rpnn") arch.kind = ArchKind::Rpnn;
            else if (tr_arch == "mlp-deep") arch.kind = ArchKind::DeepNarrowMlp;
            else if (tr_arch == "mlp-wide") arch.kind = ArchKind::ShallowWideMlp;
            else {
                std::cerr << "unknown --arch: " << tr_arch << "\n";
                return 2;
            }
            Dataset ds = load_dataset(tr_data);
            arch.width = tr_width;
            arch.levels = tr_levels;
            if (arch.input_size() != static_cast<int>(ds.feature_len))
                throw std::runtime_error("dataset feature length " +
                                         std::to_string(ds.feature_len) +
                                         " does not match architecture input " +
                                         std::to_string(arch.input_size()));
            auto [train_set, val_set] = split(ds, 1.0 - tr_val_frac, seed);
            tr_cfg.seed = seed;
            TrainResult res =
                train(train_set.features_matrix(), train_set.targets_vector(),
                      val_set.features_matrix(), val_set.targets_vector(), arch, tr_cfg);
            save_model(res.params, tr_out, &res.final_adam);
            if (!tr_curves.empty()) {
                std::ofstream out(tr_curves);
                out << "step,train_loss,val_loss\n";
                for (const auto& c : res.curves)
                    out << c.step << "," << c.train_loss << "," << c.val_loss << "\n";
            }
            std::cerr << "wrote " << tr_out << " (best val loss " << res.best_val_loss << ")\n";
        } else if (render_cmd->parsed()) {
            if (rd_mode == "rpnn" && rd_model.empty()) {
                std::cerr << "rpnn mode requires --model\n";
                return 2;
            }
            PhaseSetup ph = parse_phase(rd_phase);
            apply_reduction(rd_sigma_t, rd_albedo, ph.peak_fraction);
            NormalizedVolume volume = normalize(load_grid(rd_cloud), rd_sigma_t);
            Medium medium = Medium::from_volume(&volume, rd_albedo, ph.first, ph.rest);

            Scene scene;
            scene.medium = &medium;
            scene.camera.position = parse_vec3(rd_cam_pos, "--cam-pos");
            scene.camera.look_at = parse_vec3(rd_cam_target, "--cam-target");
            scene.camera.up = parse_vec3(rd_cam_up, "--cam-up");
            scene.camera.vfov_deg = rd_fov;
            scene.camera.width = rd_w;
            scene.camera.height = rd_h;
            for (const auto& l : rd_lights) scene.lights.push_back(parse_light(l));

            std::optional<EnvMap> env;
            if (!rd_envmap.empty()) {
                env.emplace(read_pfm(rd_envmap), rd_env_dirs);
                scene.envmap = &*env;
            }

            RenderConfig cfg;
            cfg.spp = rd_spp;
            cfg.max_bounces = rd_max_bounces;
            cfg.seed = seed;
            if (rd_mode == "pt") cfg.mode = RenderMode::PathTrace;
            else if (rd_mode == "ss") cfg.mode = RenderMode::SingleScatter;
            else if (rd_mode == "rpnn") cfg.mode = RenderMode::Rpnn;
            else throw std::runtime_error("unknown --mode: " + rd_mode);

            std::optional<Params> model;
            if (cfg.mode == RenderMode::Rpnn) {
                if (rd_model.empty()) {
                    std::cerr << "rpnn mode requires --model\n";
                    return 2;
                }
                model = load_model(rd_model).params;
            }

            RenderResult res = render(scene, cfg, model ? &*model : nullptr);
            write_pfm(res.image, rd_out);
            if (!rd_stats.empty()) write_stats(rd_stats, res.stats);
            std::cerr << "wrote " << rd_out << " (" << res.stats.seconds << " s, variance "
                      << res.stats.mean_variance << ")\n";
        } else if (compare_cmd->parsed()) {
            Image a = read_pfm(cp_a), b = read_pfm(cp_b);
            ImageMetrics m = metrics(a, b);
            std::cout << "rmse=" << m.rmse << " rel_rmse=" << m.relative_rmse;
            if (cp_stats.size() == 2) {
                RenderStats ours = read_stats(cp_stats[0]);
                RenderStats ref = read_stats(cp_stats[1]);
                std::cout << " speedup=" << speedup(ref, ours);
            }
            std::cout << "\n";
        } else if (eval_cmd->parsed()) {
            LoadedModel lm = load_model(ev_model);
            Dataset ds = load_dataset(ev_data);
            if (ds.size() == 0) throw std::runtime_error("empty dataset");
            if (lm.params.arch.input_size() != static_cast<int>(ds.feature_len))
                throw std::runtime_error("dataset feature length does not match the model");
            double l = mean_loss(lm.params, ds.features_matrix(), ds.targets_vector());
            std::cout << "mean_loss=" << l << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
