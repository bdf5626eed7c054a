#pragma once

#include "ifes/dataset.hpp"
#include "ifes/ifesnet.hpp"
#include "ifes/metrics.hpp"

#include <chrono>
#include <exception>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace ifes::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 2,         // bad flags or config
    kExitData = 3,          // unreadable, malformed or unregistered inputs
    kExitIntegrity = 4,     // checkpoint corruption
    kExitVerification = 5,  // gradient check breach
    kExitTraining = 6,      // divergence
};

int exit_code_for(const std::exception& e) noexcept;

struct RunConfig {
    int stages = 3;
    std::size_t scale = 8;
    std::uint64_t seed = 0;
    AdamOptions adam;
    LossConfig loss;
    std::size_t iterations = 500;
    std::size_t batch = 1;
    bool smooth = false;
    Variant variant = Variant::Full;
    /// Side of the square training patches; 0 trains on whole images.
    std::size_t patch = 64;
    std::string data_dir;
    std::string ir_suffix = "_ir";
    std::string vis_suffix = "_vis";
    std::string fused_suffix = "_fused";
    std::string output_dir = "ifes_out";
};

/// Names of every accepted key, in the order `echo_config` prints them.
const std::vector<std::string>& config_keys();

/// Applies one key=value assignment. Throws ConfigError for unknown keys and
/// unparsable values.
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value);

/// `key = value` lines; blank lines and `#` comments are ignored. Errors
/// carry the line number.
RunConfig parse_config(std::string_view text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

/// Every key with its effective value, one `key=value` per line. Parsing the
/// echo yields the same config.
std::string echo_config(const RunConfig& cfg);

/// Cross-field checks (network shape, loss constants, batch size).
void validate(const RunConfig& cfg);

NetConfig net_config(const RunConfig& cfg);

/// `output_dir`, unless IFES_OUTPUT_DIR is set and non-empty.
std::filesystem::path output_dir(const RunConfig& cfg);

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainLogRow {
    std::size_t iteration = 0;
    double infrared = 0.0;
    double visible = 0.0;
    double fusion = 0.0;
    double weight = 0.0;
    double total = 0.0;
    double elapsed_seconds = 0.0;
};

inline constexpr std::string_view kTrainLogHeader = "iteration,L_I,L_V,L_F,L_M,total,elapsed_s";
std::string format_log_row(const TrainLogRow& row);

struct TrainResult {
    Network net;
    std::vector<TrainLogRow> log;
    std::filesystem::path checkpoint;
    std::filesystem::path log_path;
};

using TrainObserver = std::function<void(const TrainLogRow&)>;

/// Trains on in-memory pairs with batch size 1. With `patch > 0` iteration i
/// uses patch i of a seeded sample; otherwise pairs are visited in order.
TrainResult train_on_pairs(const RunConfig& cfg, const std::vector<ImagePair>& pairs,
                           const TrainObserver& observer = {});

/// Loads pairs from `data_dir`, trains, and writes `checkpoint.ifes`,
/// `train_log.csv` and `run_config.txt` into the output directory.
TrainResult cmd_train(const RunConfig& cfg, std::ostream& status);

// ---------------------------------------------------------------------------
// fuse
// ---------------------------------------------------------------------------

struct FuseResult {
    GrayImage fused;
    GrayImage weight_ir;
    GrayImage weight_vis;
};

/// Unit-range fused image and weight maps for one registered pair.
FuseResult fuse_pair(const Network& net, const GrayImage& ir, const GrayImage& vis, bool smooth);

struct FuseRequest {
    std::filesystem::path checkpoint;
    std::filesystem::path infrared;
    std::filesystem::path visible;
    std::filesystem::path output;
    bool smooth = false;
    /// When set, W_1 and W_2 are written next to each other in this directory.
    std::filesystem::path weights_dir;
};

FuseResult cmd_fuse(const FuseRequest& request);

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalResult {
    metrics::MetricReport report;
    /// File names of members of incomplete triples.
    std::vector<std::string> incomplete;
};

/// Scores every `<id><ir><.pgm>`, `<id><vis>.pgm`, `<id><fused>.pgm` triple
/// in `dir`, sorted by id. Incomplete triples are listed, not scored.
EvalResult evaluate_directory(const std::filesystem::path& dir, const RunConfig& cfg);

/// Writes the CSV to `csv` (range conventions go to `status`). Returns
/// kExitData when any triple was incomplete.
int cmd_eval(const std::filesystem::path& dir, const RunConfig& cfg, std::ostream& csv, std::ostream& status);

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

inline constexpr double kGradcheckTolerance = 1e-5;

struct GradcheckComponent {
    std::string name;
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    double analytic = 0.0;  // at the worst coordinate
    double numeric = 0.0;
    bool passed = false;
};

struct GradcheckReport {
    std::uint64_t seed = 0;
    std::vector<GradcheckComponent> components;
    double seconds = 0.0;

    bool passed() const noexcept;
    std::string str() const;
};

struct GradcheckOptions {
    std::uint64_t seed = 0;
    /// Test hook: the analytic gradient of the named component is perturbed
    /// before comparison, as a broken backward would be.
    std::string corrupt;
};

/// Component names in the order they are run.
const std::vector<std::string>& gradcheck_components();

GradcheckReport cmd_gradcheck(const GradcheckOptions& options);

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

struct AblationVariant {
    std::string name;
    Variant variant;
    int stages;
    ReconLoss recon;
};

/// full, no_ifem, s1, s2, s3, s4, hc, mae.
const std::vector<AblationVariant>& ablation_variants();
const AblationVariant& find_ablation_variant(std::string_view name);

/// FNV-1a of the pair identifier; a pair is held out when the hash is 0 mod 4.
bool is_held_out(std::string_view id) noexcept;

struct AblationResult {
    metrics::MetricReport report;  // one row per variant, in request order
    std::size_t train_pairs = 0;
    std::size_t eval_pairs = 0;
};

/// Trains every requested variant under the same seed, data and iterations
/// and scores the mean metrics over the held-out pairs. Each row is written
/// to `csv` and flushed as soon as it is known, so a failing variant leaves
/// the earlier rows in place.
AblationResult run_ablation(const RunConfig& cfg, const std::vector<ImagePair>& pairs,
                            const std::vector<std::string>& variants, std::ostream& csv, std::ostream& status);

AblationResult cmd_ablate(const RunConfig& cfg, const std::vector<std::string>& variants, std::ostream& status);

}  // namespace ifes::cli
