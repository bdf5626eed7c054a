#include "ifes/cli.hpp"

#include "ifes/checkpoint.hpp"
#include "ifes/error.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>

namespace ifes::cli {

namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) noexcept {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const UsageError*>(&e) ||
        dynamic_cast<const ParameterError*>(&e)) {
        return kExitUsage;
    }
    if (dynamic_cast<const IntegrityError*>(&e)) return kExitIntegrity;
    if (dynamic_cast<const TrainingError*>(&e)) return kExitTraining;
    if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
        dynamic_cast<const RegistrationError*>(&e) || dynamic_cast<const DimensionError*>(&e) ||
        dynamic_cast<const MetricError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) {
        return kExitData;
    }
    return 1;
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

template <class T>
T parse_number(std::string_view key, std::string_view value) {
    T out{};
    const char* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end) {
        throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + std::string(value) + "'");
    }
    return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    throw ConfigError("config key '" + std::string(key) + "': expected a boolean, got '" + std::string(value) + "'");
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

using Setter = void (*)(RunConfig&, std::string_view, std::string_view);
using Getter = std::string (*)(const RunConfig&);

struct KeySpec {
    const char* name;
    Setter set;
    Getter get;
};

#define IFES_NUMBER_KEY(key, member, type)                                                                   \
    KeySpec {                                                                                                \
        key, [](RunConfig& c, std::string_view k, std::string_view v) { c.member = parse_number<type>(k, v); }, \
            [](const RunConfig& c) { return std::to_string(c.member); }                                      \
    }
#define IFES_DOUBLE_KEY(key, member)                                                                          \
    KeySpec {                                                                                                 \
        key, [](RunConfig& c, std::string_view k, std::string_view v) { c.member = parse_number<double>(k, v); }, \
            [](const RunConfig& c) { return format_double(c.member); }                                        \
    }
#define IFES_STRING_KEY(key, member)                                                                  \
    KeySpec {                                                                                         \
        key, [](RunConfig& c, std::string_view, std::string_view v) { c.member = std::string(v); }, \
            [](const RunConfig& c) { return c.member; }                                               \
    }

const std::vector<KeySpec>& key_specs() {
    static const std::vector<KeySpec> specs = {
        IFES_NUMBER_KEY("stages", stages, int),
        IFES_NUMBER_KEY("scale", scale, std::size_t),
        IFES_NUMBER_KEY("seed", seed, std::uint64_t),
        IFES_DOUBLE_KEY("lr", adam.lr),
        IFES_DOUBLE_KEY("beta1", adam.beta1),
        IFES_DOUBLE_KEY("beta2", adam.beta2),
        IFES_DOUBLE_KEY("eps", adam.eps),
        IFES_DOUBLE_KEY("weight_decay", adam.weight_decay),
        IFES_DOUBLE_KEY("tau", loss.tau),
        IFES_DOUBLE_KEY("xi", loss.xi),
        IFES_DOUBLE_KEY("ssim_const", loss.ssim_const),
        IFES_NUMBER_KEY("window", loss.window, std::size_t),
        IFES_NUMBER_KEY("iterations", iterations, std::size_t),
        IFES_NUMBER_KEY("batch", batch, std::size_t),
        KeySpec{"smooth", [](RunConfig& c, std::string_view k, std::string_view v) { c.smooth = parse_bool(k, v); },
                [](const RunConfig& c) { return std::string(c.smooth ? "true" : "false"); }},
        KeySpec{"variant",
                [](RunConfig& c, std::string_view, std::string_view v) {
                    try {
                        c.variant = parse_variant(v);
                    } catch (const Error& e) {
                        throw ConfigError(e.what());
                    }
                },
                [](const RunConfig& c) { return std::string(to_string(c.variant)); }},
        KeySpec{"recon_loss",
                [](RunConfig& c, std::string_view, std::string_view v) {
                    try {
                        c.loss.recon = parse_recon_loss(v);
                    } catch (const Error& e) {
                        throw ConfigError(e.what());
                    }
                },
                [](const RunConfig& c) { return std::string(to_string(c.loss.recon)); }},
        IFES_NUMBER_KEY("patch", patch, std::size_t),
        IFES_STRING_KEY("data_dir", data_dir),
        IFES_STRING_KEY("ir_suffix", ir_suffix),
        IFES_STRING_KEY("vis_suffix", vis_suffix),
        IFES_STRING_KEY("fused_suffix", fused_suffix),
        IFES_STRING_KEY("output_dir", output_dir),
    };
    return specs;
}

#undef IFES_NUMBER_KEY
#undef IFES_DOUBLE_KEY
#undef IFES_STRING_KEY

}  // namespace

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const KeySpec& s : key_specs()) k.emplace_back(s.name);
        return k;
    }();
    return keys;
}

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
    for (const KeySpec& s : key_specs()) {
        if (key == s.name) {
            s.set(cfg, key, value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + std::string(key) + "'");
}

RunConfig parse_config(std::string_view text, RunConfig base) {
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value, got '" +
                              std::string(line) + "'");
        }
        try {
            set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return base;
}

RunConfig load_config(const fs::path& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), std::move(base));
}

std::string echo_config(const RunConfig& cfg) {
    std::string out;
    for (const KeySpec& s : key_specs()) out += std::string(s.name) + "=" + s.get(cfg) + "\n";
    return out;
}

NetConfig net_config(const RunConfig& cfg) { return make_config(cfg.stages, cfg.scale, cfg.variant, cfg.seed); }

void validate(const RunConfig& cfg) {
    validate_config(net_config(cfg));
    validate(cfg.loss);
    if (cfg.batch != 1) throw ConfigError("batch must be 1, got " + std::to_string(cfg.batch));
    if (cfg.iterations == 0) throw ConfigError("iterations must be at least 1");
    const AdamOptions& a = cfg.adam;
    if (!(a.lr > 0.0)) throw ConfigError("lr must be positive");
    if (!(a.beta1 >= 0.0 && a.beta1 < 1.0)) throw ConfigError("beta1 must lie in [0,1)");
    if (!(a.beta2 >= 0.0 && a.beta2 < 1.0)) throw ConfigError("beta2 must lie in [0,1)");
    if (!(a.eps > 0.0)) throw ConfigError("eps must be positive");
    if (!(a.weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
    const std::array<const std::string*, 3> suffixes{&cfg.ir_suffix, &cfg.vis_suffix, &cfg.fused_suffix};
    for (const std::string* s : suffixes) {
        if (s->empty()) throw ConfigError("file suffixes must be non-empty");
    }
    if (cfg.ir_suffix == cfg.vis_suffix || cfg.ir_suffix == cfg.fused_suffix || cfg.vis_suffix == cfg.fused_suffix) {
        throw ConfigError("ir_suffix, vis_suffix and fused_suffix must differ");
    }
}

fs::path output_dir(const RunConfig& cfg) {
    const char* env = std::getenv("IFES_OUTPUT_DIR");
    if (env != nullptr && *env != '\0') return fs::path(env);
    return fs::path(cfg.output_dir);
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

std::string format_log_row(const TrainLogRow& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f", r.iteration, r.infrared, r.visible, r.fusion,
                  r.weight, r.total, r.elapsed_seconds);
    return buf;
}

TrainResult train_on_pairs(const RunConfig& cfg, const std::vector<ImagePair>& pairs, const TrainObserver& observer) {
    validate(cfg);
    if (pairs.empty()) throw ParameterError("training needs at least one registered pair");

    std::vector<std::pair<Tensor, Tensor>> samples;
    if (cfg.patch > 0) {
        const std::uint64_t patch_seed = cfg.seed ^ 0x9e3779b97f4a7c15ULL;
        const PatchSet set = sample_patches(pairs, cfg.patch, cfg.iterations, patch_seed);
        for (const Patch& p : set.patches) samples.emplace_back(p.infrared.to_tensor(), p.visible.to_tensor());
    } else {
        for (const ImagePair& p : pairs) samples.emplace_back(p.infrared.to_tensor(), p.visible.to_tensor());
    }

    Trainer trainer{build_network(net_config(cfg)), AdamState(cfg.adam), cfg.loss};
    TrainResult result;
    result.log.reserve(cfg.iterations);
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < cfg.iterations; ++i) {
        const auto& [ir, vis] = samples[cfg.patch > 0 ? i : i % samples.size()];
        const LossTerms t = train_step(trainer, ir, vis);
        const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
        TrainLogRow row{i + 1, t.infrared, t.visible, t.fusion, t.weight, t.total, elapsed.count()};
        result.log.push_back(row);
        if (observer) observer(row);
    }
    result.net = std::move(trainer.net);
    return result;
}

namespace {

std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    return out;
}

std::vector<ImagePair> load_training_pairs(const RunConfig& cfg, std::ostream& status) {
    if (cfg.data_dir.empty()) throw ConfigError("data_dir is not set");
    PairListing listing = load_pairs(cfg.data_dir, cfg.ir_suffix, cfg.vis_suffix);
    for (const std::string& o : listing.orphans) status << "warning: unpaired file " << o << "\n";
    if (listing.pairs.empty()) {
        throw IoError("no '<id>" + cfg.ir_suffix + ".pgm' / '<id>" + cfg.vis_suffix + ".pgm' pairs in '" +
                      cfg.data_dir + "'");
    }
    return std::move(listing.pairs);
}

}  // namespace

TrainResult cmd_train(const RunConfig& cfg, std::ostream& status) {
    validate(cfg);
    const std::vector<ImagePair> pairs = load_training_pairs(cfg, status);
    const fs::path dir = output_dir(cfg);
    fs::create_directories(dir);
    const fs::path checkpoint = dir / "checkpoint.ifes";
    const fs::path log_path = dir / "train_log.csv";

    {
        std::ofstream echo = open_output(dir / "run_config.txt");
        echo << echo_config(cfg) << "# checkpoint=" << checkpoint.string() << "\n";
    }
    std::ofstream log = open_output(log_path);
    log << kTrainLogHeader << "\n";
    status << "training " << pairs.size() << " pair(s), " << cfg.iterations << " iterations\n";

    TrainResult result = train_on_pairs(cfg, pairs, [&](const TrainLogRow& row) {
        log << format_log_row(row) << "\n";
        log.flush();
    });
    save_checkpoint(result.net, checkpoint);
    result.checkpoint = checkpoint;
    result.log_path = log_path;
    status << "checkpoint written to " << checkpoint.string() << "\n";
    return result;
}

// ---------------------------------------------------------------------------
// fuse
// ---------------------------------------------------------------------------

FuseResult fuse_pair(const Network& net, const GrayImage& ir, const GrayImage& vis, bool smooth) {
    if (ir.width != vis.width || ir.height != vis.height) {
        throw RegistrationError("infrared " + std::to_string(ir.width) + "x" + std::to_string(ir.height) +
                                " and visible " + std::to_string(vis.width) + "x" + std::to_string(vis.height) +
                                " are not registered");
    }
    const Tensor i1 = ir.to_tensor();
    const Tensor i2 = vis.to_tensor();
    const ForwardOutput out = forward(net, i1, i2);
    FuseResult r;
    if (smooth) {
        const Tensor w1 = gaussian_filter2d(out.weight_ir, kSmoothVariance, kSmoothWindow);
        const Tensor w2 = gaussian_filter2d(out.weight_vis, kSmoothVariance, kSmoothWindow);
        r.fused = GrayImage::from_tensor(fuse_with_weight_maps(w1, w2, i1, i2));
        r.weight_ir = GrayImage::from_tensor(w1);
        r.weight_vis = GrayImage::from_tensor(w2);
    } else {
        r.fused = GrayImage::from_tensor(out.fused);
        r.weight_ir = GrayImage::from_tensor(out.weight_ir);
        r.weight_vis = GrayImage::from_tensor(out.weight_vis);
    }
    return r;
}

FuseResult cmd_fuse(const FuseRequest& req) {
    const Network net = load_checkpoint(req.checkpoint);
    const GrayImage ir = load_gray_image(req.infrared);
    const GrayImage vis = load_gray_image(req.visible);
    FuseResult r = fuse_pair(net, ir, vis, req.smooth);
    if (req.output.has_parent_path()) fs::create_directories(req.output.parent_path());
    save_gray_image(r.fused, req.output);
    if (!req.weights_dir.empty()) {
        fs::create_directories(req.weights_dir);
        const std::string stem = req.output.stem().string();
        save_gray_image(r.weight_ir, req.weights_dir / (stem + "_w_ir.pgm"));
        save_gray_image(r.weight_vis, req.weights_dir / (stem + "_w_vis.pgm"));
    }
    return r;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

EvalResult evaluate_directory(const fs::path& dir, const RunConfig& cfg) {
    if (!fs::is_directory(dir)) throw IoError("'" + dir.string() + "' is not a directory");
    // Longest suffix first, so "_vis" does not steal "a_vis_fused" style names.
    std::array<std::pair<std::string, std::size_t>, 3> roles{
        {{cfg.ir_suffix, 0}, {cfg.vis_suffix, 1}, {cfg.fused_suffix, 2}}};
    std::sort(roles.begin(), roles.end(),
              [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });

    std::map<std::string, std::array<std::optional<fs::path>, 3>> triples;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".pgm") continue;
        const std::string stem = entry.path().stem().string();
        for (const auto& [suffix, role] : roles) {
            if (stem.size() > suffix.size() && stem.compare(stem.size() - suffix.size(), suffix.size(), suffix) == 0) {
                triples[stem.substr(0, stem.size() - suffix.size())][role] = entry.path();
                break;
            }
        }
    }

    EvalResult result;
    for (const auto& [id, members] : triples) {
        if (!members[0] || !members[1] || !members[2]) {
            for (const auto& m : members) {
                if (m) result.incomplete.push_back(m->filename().string());
            }
            continue;
        }
        const GrayImage ir = load_gray_image(*members[0]);
        const GrayImage vis = load_gray_image(*members[1]);
        const GrayImage fused = load_gray_image(*members[2]);
        for (const GrayImage* img : {&vis, &fused}) {
            if (img->width != ir.width || img->height != ir.height) {
                throw RegistrationError("triple '" + id + "' has images of different sizes");
            }
        }
        result.report.rows.push_back(metrics::evaluate_pair(ir, vis, fused, id, cfg.loss));
    }
    return result;
}

int cmd_eval(const fs::path& dir, const RunConfig& cfg, std::ostream& csv, std::ostream& status) {
    validate(cfg.loss);
    const EvalResult r = evaluate_directory(dir, cfg);
    status << "# ranges: AG,EN,MI,GLD on [0,255]; SF,SSIM on [0,1]\n";
    metrics::write_csv(csv, r.report);
    for (const metrics::MetricRow& row : r.report.rows) {
        if (row.ag > row.gld) status << "warning: AG > GLD for " << row.image << "\n";
    }
    if (!r.incomplete.empty()) {
        for (const std::string& f : r.incomplete) status << "incomplete triple, skipped: " << f << "\n";
        return kExitData;
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

bool GradcheckReport::passed() const noexcept {
    return !components.empty() &&
           std::all_of(components.begin(), components.end(), [](const GradcheckComponent& c) { return c.passed; });
}

std::string GradcheckReport::str() const {
    std::string out = "gradcheck seed=" + std::to_string(seed) + "\n";
    char buf[256];
    for (const GradcheckComponent& c : components) {
        std::snprintf(buf, sizeof buf, "%-22s %s  max_rel_err=%.3e  coords=%zu  analytic=%.6e  numeric=%.6e\n",
                      c.name.c_str(), c.passed ? "PASS" : "FAIL", c.max_relative_error, c.checked, c.analytic,
                      c.numeric);
        out += buf;
    }
    std::snprintf(buf, sizeof buf, "%s in %.2f s\n", passed() ? "all components pass" : "gradient check FAILED",
                  seconds);
    out += buf;
    return out;
}

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor t(shape);
    for (double& v : t.data()) v = dist(rng);
    return t;
}

void randomize(ConvLayer& layer, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-0.5, 0.5);
    for (double& v : layer.weights.data()) v = dist(rng);
    for (double& v : layer.bias) v = dist(rng);
}

void append(std::vector<double>& out, std::span<const double> part) { out.insert(out.end(), part.begin(), part.end()); }

double dot(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Reads consecutive tensors back out of a flat parameter vector.
class Unpacker {
public:
    explicit Unpacker(std::span<const double> flat) : flat_(flat) {}
    Tensor take(Shape shape) {
        Tensor t(shape);
        std::copy_n(flat_.begin() + static_cast<std::ptrdiff_t>(at_), t.size(), t.data().begin());
        at_ += t.size();
        return t;
    }
    std::span<const double> rest() const { return flat_.subspan(at_); }

private:
    std::span<const double> flat_;
    std::size_t at_ = 0;
};

FiniteDiffOptions fd_options(std::uint64_t seed) {
    FiniteDiffOptions o;
    o.step = 1e-6;
    o.seed = seed;
    o.retry_steps = {1e-5, 1e-4, 1e-7};
    o.retry_above = kGradcheckTolerance / 10.0;
    return o;
}

class GradcheckRunner {
public:
    GradcheckRunner(const GradcheckOptions& options, GradcheckReport& report)
        : options_(options), report_(report), rng_(options.seed) {}

    std::mt19937_64& rng() { return rng_; }

    void check(const std::string& name, const LossFn& loss, std::vector<double> analytic,
               const std::vector<double>& params) {
        if (name == options_.corrupt && !analytic.empty()) analytic[0] += 1e-3 * (1.0 + std::abs(analytic[0]));
        const FiniteDiffReport r = finite_diff_check(loss, analytic, params, fd_options(options_.seed));
        GradcheckComponent c;
        c.name = name;
        c.max_relative_error = r.finite ? r.max_relative_error : std::numeric_limits<double>::infinity();
        c.checked = r.checked;
        c.analytic = r.worst_analytic;
        c.numeric = r.worst_numeric;
        c.passed = r.finite && r.max_relative_error < kGradcheckTolerance;
        report_.components.push_back(c);
    }

    // Restricts a full-network check to a few coordinates of every layer.
    void check_subset(const std::string& name, const LossFn& loss, const std::vector<double>& analytic,
                      const std::vector<double>& params, const std::vector<std::size_t>& coords) {
        std::vector<double> sub_params;
        std::vector<double> sub_analytic;
        for (std::size_t k : coords) {
            sub_params.push_back(params[k]);
            sub_analytic.push_back(analytic[k]);
        }
        LossFn sub_loss = [&loss, &params, &coords](std::span<const double> x) {
            std::vector<double> full = params;
            for (std::size_t i = 0; i < coords.size(); ++i) full[coords[i]] = x[i];
            return loss(full);
        };
        check(name, sub_loss, std::move(sub_analytic), sub_params);
    }

private:
    const GradcheckOptions& options_;
    GradcheckReport& report_;
    std::mt19937_64 rng_;
};

void check_conv(GradcheckRunner& run, const std::string& name, Activation act) {
    ConvLayer layer(2, 3, act);
    randomize(layer, run.rng());
    const Shape in_shape{1, 2, 6, 5};
    const Tensor input = random_tensor(in_shape, run.rng(), -1.0, 1.0);
    const Tensor probe = random_tensor({1, 3, 6, 5}, run.rng(), -1.0, 1.0);

    const ConvGrads g = conv2d_backward(input, layer, probe);
    std::vector<double> params;
    append(params, input.data());
    append(params, layer.weights.data());
    append(params, layer.bias);
    std::vector<double> analytic;
    append(analytic, g.input.data());
    append(analytic, g.weights.data());
    append(analytic, g.bias);

    const LossFn loss = [&](std::span<const double> x) {
        Unpacker u(x);
        const Tensor in = u.take(in_shape);
        ConvLayer l = layer;
        l.weights = u.take(layer.weights.shape());
        const auto rest = u.rest();
        std::copy(rest.begin(), rest.end(), l.bias.begin());
        return dot(conv2d_forward(in, l), probe);
    };
    run.check(name, loss, analytic, params);
}

void check_losses(GradcheckRunner& run) {
    const Shape odd{1, 1, 9, 7};  // clipped edge windows with window 4
    LossConfig cfg;
    cfg.window = 4;

    {
        const Tensor x = random_tensor(odd, run.rng(), 0.0, 1.0);
        const Tensor target = random_tensor(odd, run.rng(), 0.0, 1.0);
        for (ReconLoss kind : {ReconLoss::MSE, ReconLoss::MAE}) {
            auto f = kind == ReconLoss::MSE ? &mse_loss : &mae_loss;
            const ScalarGrad g = f(x, target);
            const LossFn loss = [&](std::span<const double> p) { return f(Unpacker(p).take(odd), target).value; };
            run.check(std::string("loss.recon_") + std::string(to_string(kind)), loss,
                      {g.grad.data().begin(), g.grad.data().end()}, {x.data().begin(), x.data().end()});
        }
    }
    {
        const Tensor a = random_tensor(odd, run.rng(), 0.0, 1.0);
        const Tensor b = random_tensor(odd, run.rng(), 0.0, 1.0);
        const SsimResult s = ssim(a, b, cfg);
        std::vector<double> params;
        append(params, a.data());
        append(params, b.data());
        std::vector<double> analytic;
        append(analytic, s.grad_a.data());
        append(analytic, s.grad_b.data());
        const LossFn loss = [&](std::span<const double> p) {
            Unpacker u(p);
            const Tensor pa = u.take(odd);
            return ssim(pa, u.take(odd), cfg).value;
        };
        run.check("loss.ssim", loss, analytic, params);
    }
    {
        const Tensor i1 = random_tensor(odd, run.rng(), 0.0, 1.0);
        const Tensor i2 = random_tensor(odd, run.rng(), 0.0, 1.0);
        const Tensor fused = random_tensor(odd, run.rng(), 0.0, 1.0);
        const ScalarGrad g = fusion_loss(fused, i1, i2, cfg);
        const LossFn loss = [&](std::span<const double> p) {
            return fusion_loss(Unpacker(p).take(odd), i1, i2, cfg).value;
        };
        run.check("loss.fusion", loss, {g.grad.data().begin(), g.grad.data().end()},
                  {fused.data().begin(), fused.data().end()});
    }
    {
        const Tensor w1 = random_tensor(odd, run.rng(), 0.05, 0.95);
        const Tensor w2 = random_tensor(odd, run.rng(), 0.05, 0.95);
        const WeightMapLoss g = weight_map_loss(w1, w2, cfg);
        std::vector<double> params;
        append(params, w1.data());
        append(params, w2.data());
        std::vector<double> analytic;
        append(analytic, g.grad_w1.data());
        append(analytic, g.grad_w2.data());
        const LossFn loss = [&](std::span<const double> p) {
            Unpacker u(p);
            const Tensor a = u.take(odd);
            return weight_map_loss(a, u.take(odd), cfg).value;
        };
        run.check("loss.weight_map", loss, analytic, params);
    }
    {
        const Tensor i1 = random_tensor(odd, run.rng(), 0.0, 1.0);
        const Tensor i2 = random_tensor(odd, run.rng(), 0.0, 1.0);
        FusionOutputs out;
        out.fused = random_tensor(odd, run.rng(), 0.0, 1.0);
        out.weight_ir = random_tensor(odd, run.rng(), 0.05, 0.95);
        out.weight_vis = random_tensor(odd, run.rng(), 0.05, 0.95);
        out.recon_ir = random_tensor(odd, run.rng(), 0.0, 1.0);
        out.recon_vis = random_tensor(odd, run.rng(), 0.0, 1.0);
        const LossTerms t = total_loss(out, i1, i2, cfg);
        std::vector<double> params;
        std::vector<double> analytic;
        for (const Tensor* p : {&out.fused, &out.weight_ir, &out.weight_vis, &out.recon_ir, &out.recon_vis}) {
            append(params, p->data());
        }
        for (const Tensor* g : {&t.grads.fused, &t.grads.weight_ir, &t.grads.weight_vis, &t.grads.recon_ir,
                                &t.grads.recon_vis}) {
            append(analytic, g->data());
        }
        const LossFn loss = [&](std::span<const double> p) {
            Unpacker u(p);
            FusionOutputs o;
            o.fused = u.take(odd);
            o.weight_ir = u.take(odd);
            o.weight_vis = u.take(odd);
            o.recon_ir = u.take(odd);
            o.recon_vis = u.take(odd);
            return total_loss(o, i1, i2, cfg).total;
        };
        run.check("loss.total", loss, analytic, params);
    }
}

void randomize_biases(Network& net, std::mt19937_64& rng) {
    // Zero biases would leave every ReLU kink at the same place.
    std::uniform_real_distribution<double> dist(-0.1, 0.1);
    net.visit([&](const std::string&, ConvLayer& l) {
        for (double& b : l.bias) b = dist(rng);
    });
}

void check_stage(GradcheckRunner& run) {
    Network net = build_network(make_config(2, 16, Variant::Full, run.rng()()));
    randomize_biases(net, run.rng());
    const int n = 1;
    const Shape f_shape{1, net.config.ivif_channels[1], 6, 5};
    const Tensor fused = random_tensor(f_shape, run.rng(), 0.0, 1.0);
    const StageResult s = ifem_stage(fused, net, n);
    const Tensor r_ir = random_tensor(s.state.infrared.shape(), run.rng(), -1.0, 1.0);
    const Tensor r_vis = random_tensor(s.state.visible.shape(), run.rng(), -1.0, 1.0);
    const Tensor r_next = random_tensor(s.next_fused->shape(), run.rng(), -1.0, 1.0);

    NetworkGrads grads = zero_grads(net);
    const Tensor d_fused = ifem_stage_backward(fused, net, n, r_ir, r_vis, &r_next, grads);
    std::vector<double> params;
    append(params, fused.data());
    append(params, flatten_parameters(net));
    std::vector<double> analytic;
    append(analytic, d_fused.data());
    append(analytic, flatten_grads(grads));

    const LossFn loss = [&](std::span<const double> p) {
        Unpacker u(p);
        const Tensor f = u.take(f_shape);
        Network copy = net;
        assign_parameters(copy, u.rest());
        const StageResult r = ifem_stage(f, copy, n);
        return dot(r.state.infrared, r_ir) + dot(r.state.visible, r_vis) + dot(*r.next_fused, r_next);
    };
    run.check("ifem_stage", loss, analytic, params);
}

void check_network(GradcheckRunner& run, const std::string& name, int stages, std::size_t scale, Variant variant,
                   ReconLoss recon) {
    Network net = build_network(make_config(stages, scale, variant, run.rng()()));
    randomize_biases(net, run.rng());
    const Shape img{1, 1, 8, 8};
    const Tensor ir = random_tensor(img, run.rng(), 0.0, 1.0);
    const Tensor vis = random_tensor(img, run.rng(), 0.0, 1.0);
    LossConfig cfg;
    cfg.window = 4;
    cfg.recon = recon;

    const auto [terms, grads] = loss_and_grads(net, ir, vis, cfg);
    const std::vector<double> params = flatten_parameters(net);
    const std::vector<double> analytic = flatten_grads(grads);

    // A few weights and one bias from every layer.
    std::vector<std::size_t> coords;
    std::size_t offset = 0;
    net.visit([&](const std::string&, const ConvLayer& l) {
        const std::size_t nw = l.weights.size();
        std::uniform_int_distribution<std::size_t> pick_w(0, nw - 1);
        std::uniform_int_distribution<std::size_t> pick_b(0, l.bias.size() - 1);
        for (int k = 0; k < 3; ++k) coords.push_back(offset + pick_w(run.rng()));
        coords.push_back(offset + nw + pick_b(run.rng()));
        offset += nw + l.bias.size();
    });
    std::sort(coords.begin(), coords.end());
    coords.erase(std::unique(coords.begin(), coords.end()), coords.end());

    const LossFn loss = [&](std::span<const double> p) {
        Network copy = net;
        assign_parameters(copy, p);
        return total_loss(forward(copy, ir, vis), ir, vis, cfg).total;
    };
    run.check_subset(name, loss, analytic, params, coords);
}

}  // namespace

const std::vector<std::string>& gradcheck_components() {
    static const std::vector<std::string> names = {
        "conv.relu",        "conv.sigmoid", "conv.linear", "loss.recon_mse", "loss.recon_mae",
        "loss.ssim",        "loss.fusion",  "loss.weight_map", "loss.total", "ifem_stage",
        "network.full",     "network.no_ifem", "network.hc", "network.full_mae",
    };
    return names;
}

GradcheckReport cmd_gradcheck(const GradcheckOptions& options) {
    const auto start = std::chrono::steady_clock::now();
    GradcheckReport report;
    report.seed = options.seed;
    GradcheckRunner run(options, report);
    check_conv(run, "conv.relu", Activation::ReLU);
    check_conv(run, "conv.sigmoid", Activation::Sigmoid);
    check_conv(run, "conv.linear", Activation::Linear);
    check_losses(run);
    check_stage(run);
    check_network(run, "network.full", 3, 8, Variant::Full, ReconLoss::MSE);
    check_network(run, "network.no_ifem", 3, 16, Variant::NoIFEM, ReconLoss::MSE);
    check_network(run, "network.hc", 3, 16, Variant::HierConnect, ReconLoss::MSE);
    check_network(run, "network.full_mae", 2, 16, Variant::Full, ReconLoss::MAE);
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    report.seconds = elapsed.count();
    return report;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

const std::vector<AblationVariant>& ablation_variants() {
    static const std::vector<AblationVariant> v = {
        {"full", Variant::Full, 3, ReconLoss::MSE},
        {"no_ifem", Variant::NoIFEM, 3, ReconLoss::MSE},
        {"s1", Variant::Full, 1, ReconLoss::MSE},
        {"s2", Variant::Full, 2, ReconLoss::MSE},
        {"s3", Variant::Full, 3, ReconLoss::MSE},
        {"s4", Variant::Full, 4, ReconLoss::MSE},
        {"hc", Variant::HierConnect, 4, ReconLoss::MSE},
        {"mae", Variant::Full, 3, ReconLoss::MAE},
    };
    return v;
}

const AblationVariant& find_ablation_variant(std::string_view name) {
    for (const AblationVariant& v : ablation_variants()) {
        if (v.name == name) return v;
    }
    throw ConfigError("unknown ablation variant '" + std::string(name) +
                      "' (expected full, no_ifem, s1, s2, s3, s4, hc or mae)");
}

bool is_held_out(std::string_view id) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : id) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h % 4 == 0;
}

AblationResult run_ablation(const RunConfig& cfg, const std::vector<ImagePair>& pairs,
                            const std::vector<std::string>& variants, std::ostream& csv, std::ostream& status) {
    std::vector<const AblationVariant*> plan;
    for (const std::string& name : variants) plan.push_back(&find_ablation_variant(name));
    for (const AblationVariant* v : plan) {
        RunConfig c = cfg;
        c.variant = v->variant;
        c.stages = v->stages;
        c.loss.recon = v->recon;
        validate(c);
    }
    if (pairs.empty()) throw ParameterError("ablation needs at least one registered pair");

    std::vector<ImagePair> train;
    std::vector<ImagePair> held_out;
    for (const ImagePair& p : pairs) (is_held_out(p.id) ? held_out : train).push_back(p);
    if (train.empty() || held_out.empty()) {
        status << "warning: the identifier split left one side empty; training and evaluating on all "
               << pairs.size() << " pair(s)\n";
        train = pairs;
        held_out = pairs;
    }

    AblationResult result;
    result.train_pairs = train.size();
    result.eval_pairs = held_out.size();
    metrics::write_csv_header(csv, "variant");
    csv.flush();
    for (const AblationVariant* v : plan) {
        RunConfig c = cfg;
        c.variant = v->variant;
        c.stages = v->stages;
        c.loss.recon = v->recon;
        status << "ablation " << v->name << ": training " << train.size() << " pair(s), " << c.iterations
               << " iterations\n";
        const TrainResult trained = train_on_pairs(c, train);
        metrics::MetricReport per_image;
        for (const ImagePair& p : held_out) {
            const FuseResult f = fuse_pair(trained.net, p.infrared, p.visible, c.smooth);
            per_image.rows.push_back(metrics::evaluate_pair(p.infrared, p.visible, f.fused, p.id, c.loss));
        }
        metrics::MetricRow row = per_image.mean();
        row.image = v->name;
        metrics::write_csv_row(csv, row);
        csv.flush();
        result.report.rows.push_back(row);
    }
    return result;
}

AblationResult cmd_ablate(const RunConfig& cfg, const std::vector<std::string>& variants, std::ostream& status) {
    validate(cfg);
    for (const std::string& name : variants) find_ablation_variant(name);
    const std::vector<ImagePair> pairs = load_training_pairs(cfg, status);
    const fs::path dir = output_dir(cfg);
    fs::create_directories(dir);
    std::ofstream csv = open_output(dir / "ablation.csv");
    AblationResult r = run_ablation(cfg, pairs, variants, csv, status);
    status << "ablation table written to " << (dir / "ablation.csv").string() << "\n";
    return r;
}

}  // namespace ifes::cli
