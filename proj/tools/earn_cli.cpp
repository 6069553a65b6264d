#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "earn/earn.hpp"

namespace {

using nlohmann::json;

constexpr int kValidationExit = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw earn::ConfigError(path + ": " + e.what());
    }
}

// Command-line values arrive as text; coerce them to the type of the default.
json coerce(const json& like, const std::string& text, const std::string& key) {
    try {
        if (like.is_boolean()) {
            if (text == "true" || text == "1" || text == "on") return true;
            if (text == "false" || text == "0" || text == "off") return false;
            throw earn::ConfigError("--" + key + " expects a boolean");
        }
        if (like.is_number_unsigned()) return std::stoull(text);
        if (like.is_number_integer()) return std::stoll(text);
        if (like.is_number_float()) return std::stod(text);
    } catch (const std::logic_error&) {
        throw earn::ConfigError("--" + key + ": cannot parse '" + text + "'");
    }
    return text;
}

// One flag per TrainConfig key, e.g. --learning_rate 1e-3 --filter_mode soft.
struct ConfigFlags {
    std::string config_path;
    std::map<std::string, std::string> values;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON training config");
        const json defaults = earn::to_json(earn::TrainConfig{});
        for (auto it = defaults.begin(); it != defaults.end(); ++it) {
            cmd->add_option("--" + it.key(), values[it.key()], "override " + it.key());
        }
    }

    earn::TrainConfig resolve() const {
        json j = config_path.empty() ? json::object() : read_json_file(config_path);
        const json defaults = earn::to_json(earn::TrainConfig{});
        for (const auto& [k, v] : values) {
            if (!v.empty()) j[k] = coerce(defaults.at(k), v, k);
        }
        return earn::train_config_from_json(j);
    }

    bool any_set() const {
        if (!config_path.empty()) return true;
        for (const auto& [k, v] : values) {
            if (!v.empty()) return true;
        }
        return false;
    }
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

int cmd_generate(const std::string& config_path, const std::string& out_dir, std::optional<std::uint64_t> seed) {
    earn::synth::SynthConfig cfg;
    if (!config_path.empty()) {
        try {
            cfg = read_json_file(config_path).get<earn::synth::SynthConfig>();
        } catch (const json::exception& e) {
            throw earn::ConfigError(config_path + ": " + e.what());
        }
    }
    if (seed) cfg.seed = *seed;
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw earn::ConfigError(e.what());
    }
    const auto data = earn::synth::generate(cfg);
    std::filesystem::create_directories(out_dir);
    earn::save_dataset(data.train, out_dir + "/train.jsonl");
    earn::save_dataset(data.eval, out_dir + "/eval.jsonl");
    json cj = cfg;
    write_text(out_dir + "/synth_config.json", cj.dump(2) + "\n");
    std::cout << "wrote " << data.train.scenes.size() << " training and " << data.eval.scenes.size()
              << " evaluation scenes to " << out_dir << "\n";
    return 0;
}

int cmd_train(const ConfigFlags& flags, const std::string& data_path, const std::string& out, const std::string& resume,
              const std::string& metrics, int log_every) {
    const earn::Dataset data = earn::load_dataset(data_path);
    std::optional<earn::Trainer> trainer;
    if (!resume.empty()) {
        const earn::Checkpoint ck = earn::load_checkpoint(resume);
        std::optional<earn::TrainConfig> requested;
        if (flags.any_set()) requested = flags.resolve();
        trainer.emplace(data, ck, requested);
    } else {
        trainer.emplace(data, flags.resolve());
    }
    std::optional<earn::MetricsLog> log;
    if (!metrics.empty()) log.emplace(metrics, !resume.empty() && std::filesystem::exists(metrics));
    trainer->run([&](const earn::StepRecord& r) {
        if (log) log->write(r);
        if (log_every > 0 && (r.iteration + 1) % log_every == 0) {
            std::cout << "iter " << r.iteration + 1 << " lr " << r.lr << " loss " << r.bundle.total << "\n";
        }
    });
    earn::save_checkpoint(trainer->checkpoint(), out);
    std::cout << "checkpoint at iteration " << trainer->iteration() << " written to " << out << "\n";
    return 0;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& data_path, const std::string& out) {
    const earn::Checkpoint ck = earn::load_checkpoint(ckpt_path);
    const earn::Dataset data = earn::load_dataset(data_path);
    if (!(earn::dims_for(data.header, ck.dims.word_dim) == ck.dims)) {
        throw earn::ConfigError("dataset dimensions differ from checkpoint");
    }
    const earn::EarnModel model = earn::model_from_checkpoint(ck);
    const earn::EvalReport rep = earn::evaluate(model, data, ck.config);
    earn::write_report(rep, out);
    std::cout << "accuracy " << rep.accuracy() << " over " << rep.count << " queries\n";
    for (const auto& [k, s] : rep.per_kind) std::cout << "  " << k << " " << s.accuracy() << " (" << s.count << ")\n";
    return 0;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

int cmd_ablate(const ConfigFlags& flags, const std::string& train_path, const std::string& eval_path,
               const std::string& toggles, const std::string& out) {
    const auto names = split_list(toggles);
    const earn::TrainConfig base = flags.resolve();
    earn::validate_toggles(names);
    const earn::Dataset train = earn::load_dataset(train_path);
    const earn::Dataset eval = earn::load_dataset(eval_path);
    const auto rows = earn::run_ablation(train, eval, base, names, [](const earn::AblationRow& r) {
        std::cout << "row";
        for (const auto& [n, on] : r.settings) std::cout << ' ' << n << '=' << (on ? "on" : "off");
        std::cout << " accuracy " << r.report.accuracy() << "\n";
    });
    std::ofstream csv(out + ".csv");
    if (!csv) throw std::runtime_error("cannot write " + out + ".csv");
    earn::write_ablation_csv(rows, csv);
    write_text(out + ".json", earn::to_json(rows).dump(2) + "\n");
    return 0;
}

int cmd_report(const std::string& in_path, const std::string& out) {
    std::ifstream in(in_path);
    if (!in) throw UsageError("cannot open " + in_path);
    const earn::CsvTable t = earn::read_csv(in);
    write_text(out, earn::render_svg(t));
    std::cout << "wrote " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Weakly supervised referring-expression grounding"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("generate", "write a synthetic benchmark");
    std::string gen_config, gen_out;
    std::optional<std::uint64_t> gen_seed;
    gen->add_option("--config", gen_config, "JSON generator config");
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--seed", gen_seed, "override the generator seed");

    auto* train = app.add_subcommand("train", "train a model");
    ConfigFlags train_flags;
    std::string train_data, train_out, train_resume, train_metrics;
    int log_every = 0;
    train_flags.attach(train);
    train->add_option("--data", train_data, "training dataset (JSONL)")->required();
    train->add_option("--out", train_out, "checkpoint path")->required();
    train->add_option("--resume", train_resume, "continue from a checkpoint");
    train->add_option("--metrics", train_metrics, "per-step loss log (CSV)");
    train->add_option("--log-every", log_every, "print progress every N steps");

    auto* ev = app.add_subcommand("evaluate", "score a checkpoint on a dataset");
    std::string ev_ckpt, ev_data, ev_out;
    ev->add_option("--checkpoint", ev_ckpt)->required();
    ev->add_option("--data", ev_data)->required();
    ev->add_option("--out", ev_out, "report prefix; writes .json and .csv")->required();

    auto* ab = app.add_subcommand("ablate", "train and evaluate every toggle combination");
    ConfigFlags ab_flags;
    std::string ab_train, ab_eval, ab_toggles, ab_out;
    ab_flags.attach(ab);
    ab->add_option("--train", ab_train)->required();
    ab->add_option("--eval", ab_eval)->required();
    ab->add_option("--toggles", ab_toggles, "comma list from adp,lan,att,ent,scxtp,loc,cxt,hard,soft,distp");
    ab->add_option("--out", ab_out, "table prefix; writes .csv and .json")->required();

    auto* rep = app.add_subcommand("report", "render a metrics or ablation CSV as SVG");
    std::string rep_in, rep_out;
    rep->add_option("--in", rep_in)->required();
    rep->add_option("--out", rep_out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kValidationExit;
    }

    try {
        if (*gen) return cmd_generate(gen_config, gen_out, gen_seed);
        if (*train) return cmd_train(train_flags, train_data, train_out, train_resume, train_metrics, log_every);
        if (*ev) return cmd_evaluate(ev_ckpt, ev_data, ev_out);
        if (*ab) return cmd_ablate(ab_flags, ab_train, ab_eval, ab_toggles, ab_out);
        if (*rep) return cmd_report(rep_in, rep_out);
    } catch (const earn::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidationExit;
    } catch (const earn::DatasetError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidationExit;
    } catch (const earn::CheckpointError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidationExit;
    } catch (const earn::EvalError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidationExit;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidationExit;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
