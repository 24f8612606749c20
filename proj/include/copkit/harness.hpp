#pragma once

#include <string>
#include <vector>

#include "copkit/envs.hpp"
#include "copkit/learning.hpp"
#include "copkit/replay.hpp"

// Experiment driver: declarative configs, three study types, deterministic
// seeding, CSV/JSON emission.
namespace copkit {

enum class StudyKind { Operator, Learning, Control };

struct AlgoSpec {
    std::vector<double> gamma_hats = {0.9};
    double eta = 0.02;
    double normalization_weight = 0.0;
    StepSchedule schedule = StepSchedule::robbins_monro();
    int batch_size = 32;
    double epsilon = 0.1;
    int sync_period = 1000;
    double value_step = 0.1;
    double ratio_step = 0.05;
    // Minimum behavior-policy stationary mass per state; 0 disables the
    // coverage screen.
    double coverage_threshold = 0.0;
};

struct BudgetSpec {
    long steps = 10000;
    std::vector<uint64_t> seeds = {1};
};

struct ExperimentConfig {
    StudyKind study = StudyKind::Operator;
    EnvSpec env;
    uint64_t env_seed = 0;
    AlgoSpec algo;
    BudgetSpec budget;
    std::string out_dir = ".";

    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::string& path);
    void apply_seed_offset(uint64_t offset);
};

// One deep-RL training arm of the control study; exposed so tests can run a
// single arm without the full grid.
struct ControlArmConfig {
    double eta = 0.02;
    double gamma_hat = 0.99;
    double epsilon = 0.1;
    int batch_size = 32;
    double normalization_weight = 0.0;
    double value_step = 0.1;
    double ratio_step = 0.05;
    int sync_period = 1000;
    long buffer_capacity = 100000;
    PriorityMode priority_mode = PriorityMode::Ratio;
    bool learn_ratio = true;
};

struct ControlRunResult {
    struct Row {
        long step;
        double eval_return;
        double mean_c_eval;
        double ratio_loss;
        double value_loss;
        double mean_priority;
    };
    std::vector<Row> rows;
    double mean_eval_return = 0.0;
};

ControlRunResult run_control_arm(const Mdp& mdp, const Policy& behavior, int start_state,
                                 const ControlArmConfig& arm, long steps, uint64_t seed);

// Runs the configured study and writes its CSV files under out_dir.
// Independent (gamma_hat, seed) cells may run on up to `parallel` threads;
// output order is fixed by the config, not by scheduling.
void run_study(const ExperimentConfig& config, int parallel = 1);

struct DescribeReport {
    StateDistribution d_mu;
    StateDistribution d_pi;
    StateDistribution d_hat_pi;
    ConcentrationReport concentration;
};

DescribeReport describe_env(const GeneratedEnv& env, double gamma_hat, int n_steps = 1);

// Subcommands: run, validate, suite, describe. Exit codes: 0 success,
// 1 config/usage error, 2 study failure, 3 acceptance failure.
int cli_main(int argc, const char* const* argv);

}  // namespace copkit
