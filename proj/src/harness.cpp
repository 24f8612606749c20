#include "copkit/harness.hpp"

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "copkit/acceptance.hpp"
#include "copkit/constants.hpp"
#include "copkit/kernels.hpp"

namespace copkit {

namespace {

StudyKind study_from_string(const std::string& s) {
    if (s == "operator") return StudyKind::Operator;
    if (s == "learning") return StudyKind::Learning;
    if (s == "control") return StudyKind::Control;
    throw InvalidSpec("unknown study kind: " + s);
}

StepSchedule schedule_from_json(const nlohmann::json& j) {
    StepSchedule s = StepSchedule::robbins_monro();
    for (const auto& [key, value] : j.items()) {
        if (key == "kind") {
            const std::string k = value.get<std::string>();
            if (k == "constant") s.kind = StepSchedule::Kind::Constant;
            else if (k == "robbins_monro") s.kind = StepSchedule::Kind::RobbinsMonro;
            else throw InvalidSpec("unknown schedule kind: " + k);
        } else if (key == "alpha0") {
            s.alpha0 = value.get<double>();
        } else if (key == "t0") {
            s.t0 = value.get<double>();
        } else {
            throw InvalidSpec("unknown schedule key: " + key);
        }
    }
    if (s.alpha0 <= 0.0) throw InvalidSpec("schedule: alpha0 must be positive");
    return s;
}

AlgoSpec algo_from_json(const nlohmann::json& j) {
    AlgoSpec a;
    for (const auto& [key, value] : j.items()) {
        if (key == "gamma_hats") a.gamma_hats = value.get<std::vector<double>>();
        else if (key == "eta") a.eta = value.get<double>();
        else if (key == "normalization_weight") a.normalization_weight = value.get<double>();
        else if (key == "schedule") a.schedule = schedule_from_json(value);
        else if (key == "batch_size") a.batch_size = value.get<int>();
        else if (key == "epsilon") a.epsilon = value.get<double>();
        else if (key == "sync_period") a.sync_period = value.get<int>();
        else if (key == "value_step") a.value_step = value.get<double>();
        else if (key == "ratio_step") a.ratio_step = value.get<double>();
        else if (key == "coverage_threshold") a.coverage_threshold = value.get<double>();
        else throw InvalidSpec("unknown algo key: " + key);
    }
    for (double g : a.gamma_hats)
        if (!(g >= 0.0 && g <= 1.0)) throw InvalidSpec("algo: gamma_hat outside [0,1]");
    return a;
}

BudgetSpec budget_from_json(const nlohmann::json& j) {
    BudgetSpec b;
    for (const auto& [key, value] : j.items()) {
        if (key == "steps") b.steps = value.get<long>();
        else if (key == "seeds") b.seeds = value.get<std::vector<uint64_t>>();
        else throw InvalidSpec("unknown budget key: " + key);
    }
    if (b.steps < 0) throw InvalidSpec("budget: negative steps");
    if (b.seeds.empty()) throw InvalidSpec("budget: no seeds");
    return b;
}

std::string fmt_gamma(double g) {
    std::ostringstream os;
    os << g;
    return os.str();
}

// Deterministic per-cell RNG stream.
std::mt19937_64 cell_rng(uint64_t seed, uint64_t salt) {
    std::seed_seq seq{seed, salt};
    return std::mt19937_64(seq);
}

void run_cells(std::vector<std::function<void()>>& cells, int parallel) {
    if (parallel <= 1) {
        for (auto& cell : cells) cell();
        return;
    }
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            cells[i]();
        }
    };
    std::vector<std::thread> pool;
    const int n = std::min<int>(parallel, static_cast<int>(cells.size()));
    pool.reserve(n);
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
}

// --- operator study ---

void run_operator_study(const ExperimentConfig& config, int parallel) {
    const GeneratedEnv env = generate_env(config.env, config.env_seed);
    const Mdp& mdp = env.require_mdp();
    const InducedChain chain = induce_chain(mdp, env.target);
    const StateDistribution d_mu = stationary_distribution(induce_chain(mdp, env.behavior));
    const StateDistribution d_pi = stationary_distribution(chain);

    std::vector<std::string> traces(config.algo.gamma_hats.size());
    std::vector<std::string> summary_rows(config.algo.gamma_hats.size());
    std::vector<std::function<void()>> cells;
    for (size_t gi = 0; gi < config.algo.gamma_hats.size(); ++gi) {
        cells.emplace_back([&, gi] {
            const double gh = config.algo.gamma_hats[gi];
            std::ostringstream row;
            row << std::setprecision(17);
            try {
                Vec fixed;
                if (gh < 1.0) {
                    fixed = ratio_of(discounted_stationary(chain, d_mu, gh), d_mu).values();
                } else {
                    fixed = ratio_of(d_pi, d_mu).values();
                }
                const RatioOperator op = [&, gh](const Vec& c) {
                    return discounted_cop_apply(chain, d_mu, RatioVector(c), gh).values();
                };
                const long steps = std::max<long>(config.budget.steps, 1);
                IterationTrace trace =
                    iterate_operator(op, RatioVector::ones(mdp.n_states()), d_mu, steps,
                                     std::max<long>(1, steps / 200));
                std::ostringstream os;
                write_trace_csv(os, trace, d_mu, fixed);
                traces[gi] = os.str();
                const ConcentrationReport rep = concentration(chain, d_mu, d_pi, 1);
                Vec diff(fixed.size());
                for (size_t i = 0; i < fixed.size(); ++i) diff[i] = trace.final[i] - fixed[i];
                row << fmt_gamma(gh) << ',' << rep.k_n << ',' << rep.k_bound << ','
                    << rep.safe_gamma << ',' << trace.residuals.back() << ','
                    << weighted_norm(diff, d_mu) << ",ok";
            } catch (const Diverged&) {
                row << fmt_gamma(gh) << ",,,,,,diverged";
            } catch (const std::exception&) {
                row << fmt_gamma(gh) << ",,,,,,failed";
            }
            summary_rows[gi] = row.str();
        });
    }
    run_cells(cells, parallel);

    namespace fs = std::filesystem;
    fs::create_directories(config.out_dir);
    for (size_t gi = 0; gi < config.algo.gamma_hats.size(); ++gi) {
        if (traces[gi].empty()) continue;
        std::ofstream f(fs::path(config.out_dir) /
                        ("operator_gh" + fmt_gamma(config.algo.gamma_hats[gi]) + ".csv"));
        f << traces[gi];
    }
    std::ofstream s(fs::path(config.out_dir) / "operator_summary.csv");
    s << "gamma_hat,k_1,k_bound,safe_gamma,final_residual,final_distance,status\n";
    for (const auto& row : summary_rows) s << row << '\n';
}

// --- learning study ---

void run_learning_study(const ExperimentConfig& config, int parallel) {
    const GeneratedEnv env = generate_env(config.env, config.env_seed);
    const Mdp& mdp = env.require_mdp();
    const InducedChain chain = induce_chain(mdp, env.target);
    const TransitionSampler sampler(mdp, env.behavior, env.target);
    const StateDistribution& d_mu = sampler.d_mu();

    struct Cell {
        double gh;
        uint64_t seed;
    };
    std::vector<Cell> grid;
    for (double gh : config.algo.gamma_hats)
        for (uint64_t seed : config.budget.seeds) grid.push_back({gh, seed});
    std::vector<std::string> chunks(grid.size());
    std::vector<std::function<void()>> cells;
    for (size_t ci = 0; ci < grid.size(); ++ci) {
        cells.emplace_back([&, ci] {
            const auto& [gh, seed] = grid[ci];
            std::ostringstream os;
            os << std::setprecision(17);
            try {
                Vec target = gh < 1.0
                                 ? ratio_of(discounted_stationary(chain, d_mu, gh), d_mu).values()
                                 : ratio_of(stationary_distribution(chain), d_mu).values();
                std::mt19937_64 rng = cell_rng(seed, 0x6c6561726eULL);
                Vec c(mdp.n_states(), 1.0);
                const long steps = config.budget.steps;
                const long record = std::max<long>(1, steps / 100);
                for (long t = 0; t < steps; ++t) {
                    const TransitionSample s = sampler.sample(rng);
                    const double alpha = config.algo.schedule.at(t);
                    if (gh < 1.0) {
                        discounted_cop_td_step(c, s, alpha, gh);
                    } else {
                        cop_td_step(c, s, alpha);
                        if ((t + 1) % 1000 == 0) {
                            const double mass = kernels::dot(d_mu.data(), c.data(), c.size());
                            if (std::fabs(mass) > 1e-300)
                                kernels::scale(1.0 / mass, c.data(), c.size());
                        }
                    }
                    if ((t + 1) % record == 0 || t + 1 == steps) {
                        double max_err = 0.0;
                        Vec diff(c.size());
                        for (size_t i = 0; i < c.size(); ++i) {
                            diff[i] = c[i] - target[i];
                            max_err = std::max(max_err, std::fabs(diff[i]));
                        }
                        os << seed << ',' << (t + 1) << ',' << max_err << ','
                           << weighted_norm(diff, d_mu) << ','
                           << normalization_loss(c, d_mu) << ",ok\n";
                    }
                }
            } catch (const std::exception&) {
                os << seed << ",,,,failed\n";
            }
            chunks[ci] = os.str();
        });
    }
    run_cells(cells, parallel);

    std::filesystem::create_directories(config.out_dir);
    // One file per gamma_hat; all seed cells merge into it in config order.
    for (size_t gi = 0; gi < config.algo.gamma_hats.size(); ++gi) {
        std::ofstream f(std::filesystem::path(config.out_dir) /
                        ("learning_gh" + fmt_gamma(config.algo.gamma_hats[gi]) + ".csv"));
        f << "seed,step,max_error,weighted_error,loss,status\n";
        for (size_t si = 0; si < config.budget.seeds.size(); ++si)
            f << chunks[gi * config.budget.seeds.size() + si];
    }
}

// --- control study ---

struct ControlArm {
    const char* name;
    PriorityMode mode;
    bool learn_ratio;
};

constexpr ControlArm kControlArms[] = {
    {"ratio_prioritized", PriorityMode::Ratio, true},
    {"td_error_prioritized", PriorityMode::TdError, false},
    {"td_error_aux", PriorityMode::TdError, true},
    {"uniform", PriorityMode::Uniform, false},
    {"uniform_aux", PriorityMode::Uniform, true},
};

}  // namespace

ControlRunResult run_control_arm(const Mdp& mdp, const Policy& behavior, int start_state,
                                 const ControlArmConfig& arm, long steps, uint64_t seed) {
    ControlRunResult result;
    TrainerConfig cfg;
    cfg.eta = arm.eta;
    cfg.gamma_hat = arm.gamma_hat;
    cfg.epsilon = arm.epsilon;
    cfg.batch_size = arm.batch_size;
    cfg.normalization_weight = arm.normalization_weight;
    cfg.value_step = arm.value_step;
    cfg.ratio_step = arm.ratio_step;
    cfg.sync_period = arm.sync_period;
    cfg.priority_mode = arm.priority_mode;
    cfg.learn_ratio = arm.learn_ratio;
    cfg.validate();

    const int n = mdp.n_states();
    AgentParams params(FeatureMap::identity(n), mdp.n_actions());
    ReplayBuffer buffer(static_cast<size_t>(arm.buffer_capacity));
    std::mt19937_64 rng = cell_rng(seed, 0x636f6e74726f6cULL);
    // Behavior-policy stream; the target policy is the evolving greedy one.
    TransitionSampler sampler(mdp, behavior, behavior);
    const StateDistribution& d_mu = sampler.d_mu();

    const long eval_every = std::max<long>(1, steps / 100);
    TrainMetrics last{};
    for (long t = 0; t < steps; ++t) {
        buffer.push(sampler.sample(rng));
        if (buffer.size() >= static_cast<size_t>(cfg.batch_size))
            last = train_step(params, buffer, cfg, rng, mdp.discount());
        if ((t + 1) % eval_every == 0 || t + 1 == steps) {
            Matrix q(n, mdp.n_actions());
            for (int s = 0; s < n; ++s)
                for (int a = 0; a < mdp.n_actions(); ++a) q.at(s, a) = params.q(s, a);
            const Policy greedy = greedy_policy(q, 0.0);
            const Vec v = exact_values(induce_chain(mdp, greedy), mdp.discount());
            double mean_c = 0.0;
            for (int s = 0; s < n; ++s) mean_c += d_mu(s) * params.ratio(s);
            result.rows.push_back({t + 1, v[start_state], mean_c, last.ratio_loss,
                                   last.value_loss, last.mean_priority});
        }
    }
    double acc = 0.0;
    for (const auto& row : result.rows) acc += row.eval_return;
    result.mean_eval_return = result.rows.empty() ? 0.0 : acc / result.rows.size();
    return result;
}

namespace {

void run_control_study(const ExperimentConfig& config, int parallel) {
    const GeneratedEnv env = generate_env(config.env, config.env_seed);
    const Mdp& mdp = env.require_mdp();
    if (config.algo.coverage_threshold > 0.0) {
        const StateDistribution d_mu =
            stationary_distribution(induce_chain(mdp, env.behavior));
        for (int s = 0; s < mdp.n_states(); ++s)
            if (d_mu(s) < config.algo.coverage_threshold)
                throw InvalidSpec("control: behavior coverage below threshold at state " +
                                  std::to_string(s));
    }
    const double gh = config.algo.gamma_hats.empty() ? 0.99 : config.algo.gamma_hats.front();

    struct Cell {
        size_t arm;
        uint64_t seed;
    };
    std::vector<Cell> grid;
    for (size_t ai = 0; ai < std::size(kControlArms); ++ai)
        for (uint64_t seed : config.budget.seeds) grid.push_back({ai, seed});
    std::vector<std::string> chunks(grid.size());
    std::vector<std::function<void()>> cells;
    for (size_t ci = 0; ci < grid.size(); ++ci) {
        cells.emplace_back([&, ci] {
            const auto [ai, seed] = grid[ci];
            const ControlArm& arm = kControlArms[ai];
            std::ostringstream os;
            os << std::setprecision(17);
            try {
                ControlArmConfig ac;
                ac.eta = config.algo.eta;
                ac.gamma_hat = gh;
                ac.epsilon = config.algo.epsilon;
                ac.batch_size = config.algo.batch_size;
                ac.normalization_weight = config.algo.normalization_weight;
                ac.value_step = config.algo.value_step;
                ac.ratio_step = config.algo.ratio_step;
                ac.sync_period = config.algo.sync_period;
                ac.priority_mode = arm.mode;
                ac.learn_ratio = arm.learn_ratio;
                const ControlRunResult run = run_control_arm(
                    mdp, env.behavior, env.start_state, ac, config.budget.steps, seed);
                for (const auto& row : run.rows) {
                    os << seed << ',' << row.step << ',' << row.eval_return << ','
                       << row.mean_c_eval << ',' << row.ratio_loss << ',' << row.value_loss
                       << ',' << row.mean_priority << ",ok\n";
                }
            } catch (const std::exception&) {
                os << seed << ",,,,,,failed\n";
            }
            chunks[ci] = os.str();
        });
    }
    run_cells(cells, parallel);

    std::filesystem::create_directories(config.out_dir);
    // One file per ablation arm, seeds merged in config order.
    for (size_t ai = 0; ai < std::size(kControlArms); ++ai) {
        std::ofstream f(std::filesystem::path(config.out_dir) /
                        ("control_" + std::string(kControlArms[ai].name) + ".csv"));
        f << "seed,step,eval_return,mean_c_eval,ratio_loss,value_loss,mean_priority,status\n";
        for (size_t si = 0; si < config.budget.seeds.size(); ++si)
            f << chunks[ai * config.budget.seeds.size() + si];
    }
}

}  // namespace

// --- config ---

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    bool has_env = false;
    for (const auto& [key, value] : j.items()) {
        if (key == "study") c.study = study_from_string(value.get<std::string>());
        else if (key == "env") {
            nlohmann::json env = value;
            if (env.contains("seed")) {
                c.env_seed = env.at("seed").get<uint64_t>();
                env.erase("seed");
            }
            c.env = EnvSpec::from_json(env);
            has_env = true;
        } else if (key == "algo") c.algo = algo_from_json(value);
        else if (key == "budget") c.budget = budget_from_json(value);
        else if (key == "out_dir") c.out_dir = value.get<std::string>();
        else throw InvalidSpec("unknown config key: " + key);
    }
    if (!has_env) throw InvalidSpec("config: missing env");
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InvalidSpec("config file not found: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidSpec("config parse error: " + std::string(e.what()));
    }
    return from_json(j);
}

void ExperimentConfig::apply_seed_offset(uint64_t offset) {
    env_seed += offset;
    for (uint64_t& s : budget.seeds) s += offset;
}

void run_study(const ExperimentConfig& config, int parallel) {
    switch (config.study) {
        case StudyKind::Operator: run_operator_study(config, parallel); break;
        case StudyKind::Learning: run_learning_study(config, parallel); break;
        case StudyKind::Control: run_control_study(config, parallel); break;
    }
}

DescribeReport describe_env(const GeneratedEnv& env, double gamma_hat, int n_steps) {
    const Mdp& mdp = env.require_mdp();
    const InducedChain chain = induce_chain(mdp, env.target);
    StateDistribution d_mu = stationary_distribution(induce_chain(mdp, env.behavior));
    StateDistribution d_pi = stationary_distribution(chain);
    StateDistribution d_hat = discounted_stationary(chain, d_mu, gamma_hat);
    ConcentrationReport rep = concentration(chain, d_mu, d_pi, n_steps);
    return DescribeReport{std::move(d_mu), std::move(d_pi), std::move(d_hat), rep};
}

// --- CLI ---

namespace {

uint64_t seed_offset_from_env() {
    const char* v = std::getenv("COPKIT_SEED_OFFSET");
    if (!v || !*v) return 0;
    return std::strtoull(v, nullptr, 10);
}

EnvSpec parse_env_name(const std::string& name) {
    // Accept "chain5", "random_ergodic10", "gridworld", ...
    size_t digits = name.size();
    while (digits > 0 && std::isdigit(static_cast<unsigned char>(name[digits - 1]))) --digits;
    EnvSpec spec;
    spec.kind = env_kind_from_string(name.substr(0, digits));
    if (digits < name.size()) spec.n_states = std::stoi(name.substr(digits));
    return spec;
}

void print_distribution(std::ostream& os, const char* label, const StateDistribution& d) {
    os << label << " = [";
    os << std::setprecision(12);
    for (int s = 0; s < d.size(); ++s) os << (s ? ", " : "") << d(s);
    os << "]\n";
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"covariate-shift off-policy evaluation lab"};
    app.require_subcommand(1);

    std::string config_path, out_dir, seeds_csv, log_level = "info";
    int parallel = 1;

    auto* run = app.add_subcommand("run", "run a study from a JSON config");
    run->add_option("config,--config", config_path)->required();
    run->add_option("--out-dir", out_dir);
    run->add_option("--seeds", seeds_csv, "comma-separated seed override");
    run->add_option("--parallel", parallel);
    run->add_option("--log-level", log_level);

    auto* validate = app.add_subcommand("validate", "validate a JSON config");
    validate->add_option("config", config_path)->required();

    std::string env_name;
    double gamma_hat = 0.9;
    int n_steps = 1;
    uint64_t env_seed = 0;
    auto* describe = app.add_subcommand("describe", "print distributions for an environment");
    describe->add_option("env", env_name)->required();
    describe->add_option("--gamma-hat", gamma_hat);
    describe->add_option("--n", n_steps);
    describe->add_option("--seed", env_seed);

    auto* suite = app.add_subcommand("suite", "run the acceptance battery");
    suite->add_option("--out-dir", out_dir);
    suite->add_option("--parallel", parallel);
    suite->add_option("--log-level", log_level);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (validate->parsed()) {
            ExperimentConfig::load(config_path);
            std::cout << "config ok\n";
            return 0;
        }
        if (describe->parsed()) {
            const GeneratedEnv env = generate_env(parse_env_name(env_name), env_seed);
            const DescribeReport rep = describe_env(env, gamma_hat, n_steps);
            print_distribution(std::cout, "d_mu", rep.d_mu);
            print_distribution(std::cout, "d_pi", rep.d_pi);
            print_distribution(std::cout, "d_hat_pi", rep.d_hat_pi);
            std::cout << "K_" << n_steps << " = " << rep.concentration.k_n
                      << ", K_bound = " << rep.concentration.k_bound
                      << ", safe_gamma = " << rep.concentration.safe_gamma << '\n';
            return 0;
        }
        if (suite->parsed()) {
            const std::string dir = out_dir.empty() ? "acceptance_out" : out_dir;
            return run_acceptance(std::cout, dir) ? 0 : 3;
        }
        // run
        ExperimentConfig config = ExperimentConfig::load(config_path);
        if (!out_dir.empty()) config.out_dir = out_dir;
        if (!seeds_csv.empty()) {
            config.budget.seeds.clear();
            std::stringstream ss(seeds_csv);
            std::string token;
            while (std::getline(ss, token, ','))
                config.budget.seeds.push_back(std::stoull(token));
            if (config.budget.seeds.empty()) throw InvalidSpec("--seeds: empty list");
        }
        config.apply_seed_offset(seed_offset_from_env());
        try {
            run_study(config, parallel);
        } catch (const std::exception& e) {
            std::cerr << "study failed: " << e.what() << '\n';
            return 2;
        }
        return 0;
    } catch (const InvalidSpec& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace copkit
