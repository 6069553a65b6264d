#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "earn/config.hpp"
#include "earn/dataset.hpp"
#include "earn/model.hpp"
#include "earn/train.hpp"

namespace earn {

class EvalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EvalRecord {
    int scene = 0;
    int query = 0;
    std::string kind;
    int selected = 0;
    int gt = 0;
    double iou = 0.0;
    bool correct = false;
    std::array<double, 3> cue_weights{};
    int candidates = 0;
    Box box;
};

struct KindStats {
    int count = 0;
    int correct = 0;
    double accuracy() const { return count == 0 ? 0.0 : static_cast<double>(correct) / count; }
};

struct EvalReport {
    int count = 0;
    int correct = 0;
    double mean_candidates = 0.0;
    std::map<std::string, KindStats> per_kind;
    nlohmann::json config;
    std::vector<EvalRecord> records;

    double accuracy() const { return count == 0 ? 0.0 : static_cast<double>(correct) / count; }
};

/// Grounds every query and scores the pick at IoU > 0.5. Only the grounding
/// path runs; the reconstruction branch is never touched.
inline EvalReport evaluate(const EarnModel& model, const Dataset& data) {
    EvalReport rep;
    double cand_sum = 0.0;
    for (std::size_t s = 0; s < data.scenes.size(); ++s) {
        const Scene& scene = data.scenes[s];
        if (scene.queries.empty()) continue;
        const CueFeatures f = model.features(strip_labels(scene));
        for (std::size_t qi = 0; qi < scene.queries.size(); ++qi) {
            const Query& q = scene.queries[qi];
            if (!q.gt_index) {
                throw EvalError("scene " + std::to_string(s) + " query " + std::to_string(qi) + " has no gt_index");
            }
            const int gt = *q.gt_index;
            if (gt < 0 || gt >= static_cast<int>(scene.proposals.size())) {
                throw EvalError("scene " + std::to_string(s) + " query " + std::to_string(qi) + ": gt_index out of range");
            }
            ad::Tape tape;
            const QueryForward fw = model.ground(tape, f, q.view());
            EvalRecord r;
            r.scene = static_cast<int>(s);
            r.query = static_cast<int>(qi);
            r.kind = q.kind.empty() ? "all" : q.kind;
            r.selected = fw.combined.selected;
            r.gt = gt;
            r.box = scene.proposals[static_cast<std::size_t>(r.selected)].box;
            r.iou = compute_iou(r.box, scene.proposals[static_cast<std::size_t>(gt)].box);
            r.correct = r.iou > 0.5;
            for (int c = 0; c < 3; ++c) r.cue_weights[static_cast<std::size_t>(c)] = fw.lang.cue_weights.value()(0, c);
            r.candidates = fw.candidates();
            cand_sum += r.candidates;
            ++rep.count;
            rep.correct += r.correct ? 1 : 0;
            KindStats& ks = rep.per_kind[r.kind];
            ++ks.count;
            ks.correct += r.correct ? 1 : 0;
            rep.records.push_back(std::move(r));
        }
    }
    rep.mean_candidates = rep.count == 0 ? 0.0 : cand_sum / rep.count;
    return rep;
}

inline EvalReport evaluate(const EarnModel& model, const Dataset& data, const TrainConfig& cfg) {
    EvalReport rep = evaluate(model, data);
    rep.config = to_json(cfg);
    return rep;
}

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json kinds = nlohmann::json::object();
    for (const auto& [k, s] : r.per_kind) kinds[k] = {{"count", s.count}, {"correct", s.correct}, {"accuracy", s.accuracy()}};
    return {{"accuracy", r.accuracy()},
            {"count", r.count},
            {"correct", r.correct},
            {"mean_candidates", r.mean_candidates},
            {"per_kind", kinds},
            {"config", r.config}};
}

inline void write_predictions_csv(const EvalReport& r, std::ostream& out) {
    out.precision(17);
    out << "scene,query,kind,selected,gt,iou,correct,w_subject,w_location,w_context,candidates,x1,y1,x2,y2\n";
    for (const auto& e : r.records) {
        out << e.scene << ',' << e.query << ',' << e.kind << ',' << e.selected << ',' << e.gt << ',' << e.iou << ','
            << (e.correct ? 1 : 0) << ',' << e.cue_weights[0] << ',' << e.cue_weights[1] << ',' << e.cue_weights[2]
            << ',' << e.candidates << ',' << e.box.x_tl() << ',' << e.box.y_tl() << ',' << e.box.x_br() << ',' << e.box.y_br() << '\n';
    }
}

/// Writes <prefix>.json (summary) and <prefix>.csv (per-query predictions).
inline void write_report(const EvalReport& r, const std::string& prefix) {
    std::ofstream js(prefix + ".json");
    std::ofstream csv(prefix + ".csv");
    if (!js || !csv) throw std::runtime_error("cannot write report at " + prefix);
    js << to_json(r).dump(2) << '\n';
    write_predictions_csv(r, csv);
}

// ---------------------------------------------------------------------------
// Ablation grid

inline const std::vector<std::string>& ablation_toggles() {
    static const std::vector<std::string> names{"adp", "lan", "att", "ent", "scxtp", "loc", "cxt", "hard", "soft", "distp"};
    return names;
}

/// Applies one toggle to a configuration. "off" for a loss toggle zeroes its coefficient(s).
inline void apply_toggle(TrainConfig& c, const std::string& name, bool on, const TrainConfig& base) {
    if (name == "adp") {
        c.coef.alpha = on ? base.coef.alpha : 0.0;
        c.coef.beta = on ? base.coef.beta : 0.0;
    } else if (name == "lan") {
        c.coef.gamma = on ? base.coef.gamma : 0.0;
    } else if (name == "att") {
        c.coef.lambda = on ? base.coef.lambda : 0.0;
    } else if (name == "ent") {
        c.model.entity_enhancement = on;
    } else if (name == "scxtp") {
        c.model.context_mode = on ? ContextMode::soft_all : ContextMode::max_all;
    } else if (name == "loc") {
        c.model.use_location = on;
    } else if (name == "cxt") {
        c.model.use_context = on;
    } else if (name == "hard") {
        c.model.filter_mode = on ? FilterMode::hard : FilterMode::none;
    } else if (name == "soft") {
        c.model.filter_mode = on ? FilterMode::soft : FilterMode::none;
    } else if (name == "distp") {
        c.model.distance_penalty = on;
    } else {
        throw ConfigError("invalid ablation toggle: " + name);
    }
}

inline void validate_toggles(const std::vector<std::string>& toggles) {
    std::set<std::string> seen;
    for (const auto& t : toggles) {
        const auto& known = ablation_toggles();
        if (std::find(known.begin(), known.end(), t) == known.end()) throw ConfigError("invalid ablation toggle: " + t);
        if (!seen.insert(t).second) throw ConfigError("duplicate ablation toggle: " + t);
    }
    if (seen.count("hard") && seen.count("soft")) throw ConfigError("toggles hard and soft select the same setting");
}

struct AblationRow {
    std::vector<std::pair<std::string, bool>> settings;
    TrainConfig config;
    EvalReport report;
};

/// Configurations of the full 2^k grid, in binary counting order with the
/// first toggle as the most significant bit and "on" before "off".
inline std::vector<std::pair<std::vector<std::pair<std::string, bool>>, TrainConfig>> ablation_grid(
    const TrainConfig& base, const std::vector<std::string>& toggles) {
    validate_toggles(toggles);
    const std::size_t k = toggles.size();
    std::vector<std::pair<std::vector<std::pair<std::string, bool>>, TrainConfig>> out;
    for (std::size_t mask = 0; mask < (std::size_t{1} << k); ++mask) {
        TrainConfig c = base;
        std::vector<std::pair<std::string, bool>> settings;
        for (std::size_t i = 0; i < k; ++i) {
            const bool on = ((mask >> (k - 1 - i)) & 1U) == 0;
            apply_toggle(c, toggles[i], on, base);
            settings.emplace_back(toggles[i], on);
        }
        c.validate();
        out.emplace_back(std::move(settings), c);
    }
    return out;
}

/// Trains one model per grid cell with the shared seed and evaluates it.
inline std::vector<AblationRow> run_ablation(const Dataset& train, const Dataset& eval, const TrainConfig& base,
                                             const std::vector<std::string>& toggles,
                                             const std::function<void(const AblationRow&)>& on_row = {}) {
    std::vector<AblationRow> rows;
    for (auto& [settings, cfg] : ablation_grid(base, toggles)) {
        Trainer trainer(train, cfg);
        trainer.run();
        AblationRow row{settings, cfg, evaluate(trainer.model(), eval, cfg)};
        if (on_row) on_row(row);
        rows.push_back(std::move(row));
    }
    return rows;
}

inline void write_ablation_csv(const std::vector<AblationRow>& rows, std::ostream& out) {
    std::set<std::string> kinds;
    for (const auto& r : rows) {
        for (const auto& [k, s] : r.report.per_kind) kinds.insert(k);
    }
    out.precision(17);
    out << "row";
    if (!rows.empty()) {
        for (const auto& [name, on] : rows.front().settings) out << ',' << name;
    }
    out << ",accuracy,count,mean_candidates";
    for (const auto& k : kinds) out << ",acc_" << k;
    out << '\n';
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        out << i;
        for (const auto& [name, on] : r.settings) out << ',' << (on ? "on" : "off");
        out << ',' << r.report.accuracy() << ',' << r.report.count << ',' << r.report.mean_candidates;
        for (const auto& k : kinds) {
            auto it = r.report.per_kind.find(k);
            out << ',' << (it == r.report.per_kind.end() ? 0.0 : it->second.accuracy());
        }
        out << '\n';
    }
}

inline nlohmann::json to_json(const std::vector<AblationRow>& rows) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json settings = nlohmann::json::object();
        for (const auto& [name, on] : r.settings) settings[name] = on;
        arr.push_back({{"settings", settings}, {"report", to_json(r.report)}});
    }
    return arr;
}

// ---------------------------------------------------------------------------
// Static plots

struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if (columns[i] == name) return static_cast<int>(i);
        }
        return -1;
    }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline CsvTable read_csv(std::istream& in) {
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty CSV");
    t.columns = split_csv_line(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto row = split_csv_line(line);
        if (row.size() != t.columns.size()) throw std::runtime_error("ragged CSV row: " + line);
        t.rows.push_back(std::move(row));
    }
    return t;
}

namespace detail {

inline const char* palette(std::size_t i) {
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                   "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    return colors[i % 10];
}

inline std::string fmt(double v) {
    std::ostringstream o;
    o.precision(4);
    o << v;
    return o.str();
}

}  // namespace detail

/// Line chart of every loss column of a training metrics log against iteration.
inline std::string render_metrics_svg(const CsvTable& t) {
    const int xi = t.column("iteration");
    if (xi < 0) throw std::runtime_error("metrics CSV lacks an iteration column");
    std::vector<int> series;
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
        if (static_cast<int>(c) != xi && t.columns[c] != "lr") series.push_back(static_cast<int>(c));
    }
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    bool first = true;
    for (const auto& r : t.rows) {
        const double x = std::stod(r[static_cast<std::size_t>(xi)]);
        if (first) xmin = xmax = x;
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        for (int c : series) {
            const double y = std::stod(r[static_cast<std::size_t>(c)]);
            if (first) ymin = ymax = y;
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
            first = false;
        }
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    const double W = 800, H = 480, L = 60, R = 160, T = 20, B = 40;
    auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << L << "\" y=\"" << H - 10 << "\" font-size=\"12\">" << detail::fmt(xmin) << "</text>\n";
    s << "<text x=\"" << W - R << "\" y=\"" << H - 10 << "\" font-size=\"12\" text-anchor=\"end\">" << detail::fmt(xmax)
      << "</text>\n";
    s << "<text x=\"" << L - 4 << "\" y=\"" << H - B << "\" font-size=\"12\" text-anchor=\"end\">" << detail::fmt(ymin)
      << "</text>\n";
    s << "<text x=\"" << L - 4 << "\" y=\"" << T + 10 << "\" font-size=\"12\" text-anchor=\"end\">" << detail::fmt(ymax)
      << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto c = static_cast<std::size_t>(series[k]);
        s << "<polyline fill=\"none\" stroke=\"" << detail::palette(k) << "\" points=\"";
        for (const auto& r : t.rows) {
            s << px(std::stod(r[static_cast<std::size_t>(xi)])) << ',' << py(std::stod(r[c])) << ' ';
        }
        s << "\"/>\n";
        s << "<text x=\"" << W - R + 8 << "\" y=\"" << T + 14 * (k + 1) << "\" font-size=\"12\" fill=\""
          << detail::palette(k) << "\">" << t.columns[c] << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

/// Bar chart of the accuracy column of an ablation table.
inline std::string render_ablation_svg(const CsvTable& t) {
    const int ai = t.column("accuracy");
    if (ai < 0) throw std::runtime_error("ablation CSV lacks an accuracy column");
    const int first_setting = 1;
    const double W = 800, H = 480, L = 60, B = 120, T = 20;
    const double n = std::max<double>(1.0, static_cast<double>(t.rows.size()));
    const double bw = (W - L - 20) / n;
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - 20 << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const double acc = std::stod(t.rows[i][static_cast<std::size_t>(ai)]);
        const double h = acc * (H - T - B);
        const double x = L + bw * static_cast<double>(i) + 4;
        s << "<rect x=\"" << x << "\" y=\"" << H - B - h << "\" width=\"" << bw - 8 << "\" height=\"" << h
          << "\" fill=\"" << detail::palette(0) << "\"/>\n";
        s << "<text x=\"" << x + (bw - 8) / 2 << "\" y=\"" << H - B - h - 4
          << "\" font-size=\"11\" text-anchor=\"middle\">" << detail::fmt(acc) << "</text>\n";
        std::string label;
        for (int c = first_setting; c < ai; ++c) {
            if (t.rows[i][static_cast<std::size_t>(c)] == "on") label += (label.empty() ? "" : "+") + t.columns[static_cast<std::size_t>(c)];
        }
        if (label.empty()) label = "-";
        s << "<text x=\"" << x + (bw - 8) / 2 << "\" y=\"" << H - B + 16
          << "\" font-size=\"11\" text-anchor=\"middle\">" << label << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

/// Picks the chart type from the CSV header.
inline std::string render_svg(const CsvTable& t) {
    if (t.column("iteration") >= 0) return render_metrics_svg(t);
    return render_ablation_svg(t);
}

}  // namespace earn
