#include "memcovert/detector.hpp"

#include "memcovert/channel_sim.hpp"
#include "memcovert/codec.hpp"
#include "memcovert/error.hpp"
#include "memcovert/modulation.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace memcovert::detect {

namespace {

void shuffle_indices(std::vector<std::size_t>& idx, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = idx.size(); i > 1; --i) {
        std::swap(idx[i - 1], idx[rng() % i]);
    }
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string utc_date() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[16];
    std::strftime(buf, sizeof(buf), "%Y-%m-%d", &tm);
    return buf;
}

void check_features(const Dataset& data) {
    if (data.empty()) throw InvalidInput("empty dataset");
    const auto f = data.front().values.size();
    if (f == 0) throw InvalidInput("windows without features");
    for (const auto& w : data) {
        if (w.values.size() != f) throw InvalidInput("windows differ in length");
        if (w.label != 0 && w.label != 1) throw InvalidInput("training windows need labels 0 or 1");
    }
}

}  // namespace

std::vector<double> normalize_window(std::span<const double> raw) {
    std::vector<double> out(raw.size(), 0.5);
    if (raw.empty()) return out;
    const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
    const double range = *hi - *lo;
    if (!(range > 0.0)) return out;
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - *lo) / range;
    // Pin the extremes so that normalization is exactly idempotent.
    out[static_cast<std::size_t>(lo - raw.begin())] = 0.0;
    out[static_cast<std::size_t>(hi - raw.begin())] = 1.0;
    return out;
}

Dataset windows_from_trace(const MemoryTrace& trace, int label, std::size_t window,
                           std::size_t stride) {
    if (window == 0) throw ParameterError("window must be positive");
    if (stride == 0) stride = window;
    const auto values = trace.values_as_double();
    Dataset out;
    for (std::size_t start = 0; start + window <= values.size(); start += stride) {
        out.push_back({normalize_window(std::span<const double>(values).subspan(start, window)), label});
    }
    return out;
}

Dataset windows_from_trace(const LabeledTrace& t, std::size_t window, std::size_t stride) {
    if (!t.activity_us || t.label != 1) return windows_from_trace(t.trace, t.label, window, stride);
    if (window == 0) throw ParameterError("window must be positive");
    if (stride == 0) stride = window;
    const auto& samples = t.trace.samples();
    const auto values = t.trace.values_as_double();
    const auto& act = *t.activity_us;
    Dataset out;
    for (std::size_t start = 0; start + window <= values.size(); start += stride) {
        const auto first = samples[start].t_us;
        const auto last = samples[start + window - 1].t_us;
        const auto it = std::lower_bound(act.begin(), act.end(), first);
        if (it == act.end() || *it > last) continue;
        out.push_back({normalize_window(std::span<const double>(values).subspan(start, window)), 1});
    }
    return out;
}

Dataset build_dataset(const std::vector<LabeledTrace>& traces, const DatasetOptions& options,
                      std::vector<std::string>* warnings) {
    Dataset attack, benign;
    for (const auto& t : traces) {
        if (t.trace.size() < options.window) {
            if (warnings) {
                warnings->push_back("skipping trace '" + t.name + "': " + std::to_string(t.trace.size()) +
                                    " samples is shorter than one window");
            }
            continue;
        }
        auto w = windows_from_trace(t, options.window, options.stride);
        auto& dst = t.label == 1 ? attack : benign;
        dst.insert(dst.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
    }
    if (options.balance && !attack.empty() && !benign.empty() && attack.size() != benign.size()) {
        auto& bigger = attack.size() > benign.size() ? attack : benign;
        const auto keep = std::min(attack.size(), benign.size());
        std::vector<std::size_t> idx(bigger.size());
        std::iota(idx.begin(), idx.end(), 0);
        shuffle_indices(idx, options.seed);
        idx.resize(keep);
        std::sort(idx.begin(), idx.end());
        Dataset kept;
        kept.reserve(keep);
        for (auto i : idx) kept.push_back(std::move(bigger[i]));
        bigger = std::move(kept);
    }
    Dataset out = std::move(attack);
    out.insert(out.end(), std::make_move_iterator(benign.begin()), std::make_move_iterator(benign.end()));
    return out;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double train_fraction,
                                          std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ParameterError("train fraction must lie in (0, 1)");
    }
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    shuffle_indices(idx, seed);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(data.size())));
    std::pair<Dataset, Dataset> out;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        (i < n_train ? out.first : out.second).push_back(data[idx[i]]);
    }
    return out;
}

void write_dataset(const Dataset& data, std::ostream& out) {
    const auto f = data.empty() ? kWindowSize : data.front().values.size();
    for (std::size_t i = 0; i < f; ++i) out << 'f' << i << ',';
    out << "label\n";
    for (const auto& w : data) {
        for (double v : w.values) out << format_double(v) << ',';
        out << w.label << '\n';
    }
}

Dataset read_dataset(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("dataset is empty", 0);
    const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
    if (columns < 2 || line.rfind("label") != line.size() - 5) {
        throw FormatError("dataset header must end with a label column", 0);
    }
    Dataset out;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        FeatureWindow w;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != columns) {
            throw FormatError("dataset row " + std::to_string(row) + " has " +
                                  std::to_string(cells.size()) + " columns, expected " +
                                  std::to_string(columns),
                              row);
        }
        try {
            for (std::size_t i = 0; i + 1 < cells.size(); ++i) w.values.push_back(std::stod(cells[i]));
            w.label = std::stoi(cells.back());
        } catch (const std::exception&) {
            throw FormatError("dataset row " + std::to_string(row) + " is not numeric", row);
        }
        out.push_back(std::move(w));
        ++row;
    }
    return out;
}

void write_dataset_file(const Dataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write dataset " + path);
    write_dataset(data, out);
}

Dataset read_dataset_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open dataset " + path);
    return read_dataset(in);
}

std::uint64_t dataset_hash(const Dataset& data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& w : data) {
        mix(static_cast<std::uint64_t>(w.label));
        for (double v : w.values) mix(std::bit_cast<std::uint64_t>(v));
    }
    return h;
}

// ---------------------------------------------------------------- models

ClassifierModel ClassifierModel::knn_train(const Dataset& data, int k) {
    check_features(data);
    if (k < 1) throw ParameterError("k must be >= 1");
    if (static_cast<std::size_t>(k) > data.size()) {
        throw ParameterError("k = " + std::to_string(k) + " exceeds the dataset size " +
                             std::to_string(data.size()));
    }
    ClassifierModel m;
    m.kind_ = ModelKind::Knn;
    m.k_ = k;
    m.features_ = data.front().values.size();
    for (const auto& w : data) {
        m.samples_.push_back(w.values);
        m.labels_.push_back(w.label);
    }
    m.meta_["corpus_hash"] = std::to_string(dataset_hash(data));
    m.meta_["created"] = utc_date();
    return m;
}

namespace {

class TreeBuilder {
public:
    TreeBuilder(const Dataset& data, int max_depth) : data_(data), max_depth_(max_depth) {}

    std::vector<TreeNode> build() {
        std::vector<std::size_t> all(data_.size());
        std::iota(all.begin(), all.end(), 0);
        grow(all, 0);
        return std::move(nodes_);
    }

private:
    struct Split {
        int feature = -1;
        double threshold = 0.0;
    };

    int grow(const std::vector<std::size_t>& idx, int depth) {
        std::size_t ones = 0;
        for (auto i : idx) ones += data_[i].label == 1;
        const auto n = idx.size();
        const int node = static_cast<int>(nodes_.size());
        nodes_.push_back(TreeNode{-1, 0.0, -1, -1, 2 * ones > n ? 1 : 0});
        if (depth >= max_depth_ || ones == 0 || ones == n || n < 2) return node;

        const Split split = best_split(idx, ones);
        if (split.feature < 0) return node;
        std::vector<std::size_t> left, right;
        for (auto i : idx) {
            (data_[i].values[split.feature] <= split.threshold ? left : right).push_back(i);
        }
        nodes_[node].feature = split.feature;
        nodes_[node].threshold = split.threshold;
        const int l = grow(left, depth + 1);
        const int r = grow(right, depth + 1);
        nodes_[node].left = l;
        nodes_[node].right = r;
        return node;
    }

    // Minimizes n_l * gini_l + n_r * gini_r. Scanning features and
    // thresholds in ascending order with a strict comparison resolves ties
    // toward the lowest feature, then the lowest threshold.
    Split best_split(const std::vector<std::size_t>& idx, std::size_t ones) const {
        const auto n = idx.size();
        const auto features = data_.front().values.size();
        Split best;
        double best_cost = std::numeric_limits<double>::infinity();
        std::vector<std::pair<double, int>> column(n);
        for (std::size_t f = 0; f < features; ++f) {
            for (std::size_t j = 0; j < n; ++j) column[j] = {data_[idx[j]].values[f], data_[idx[j]].label};
            std::sort(column.begin(), column.end());
            std::size_t left_ones = 0;
            for (std::size_t j = 0; j + 1 < n; ++j) {
                left_ones += column[j].second == 1;
                if (column[j].first == column[j + 1].first) continue;
                const double nl = static_cast<double>(j + 1);
                const double nr = static_cast<double>(n - j - 1);
                const double ol = static_cast<double>(left_ones);
                const double orr = static_cast<double>(ones - left_ones);
                const double cost = (nl - (ol * ol + (nl - ol) * (nl - ol)) / nl) +
                                    (nr - (orr * orr + (nr - orr) * (nr - orr)) / nr);
                if (cost < best_cost) {
                    best_cost = cost;
                    best.feature = static_cast<int>(f);
                    best.threshold = 0.5 * (column[j].first + column[j + 1].first);
                }
            }
        }
        return best;
    }

    const Dataset& data_;
    int max_depth_;
    std::vector<TreeNode> nodes_;
};

}  // namespace

ClassifierModel ClassifierModel::dtree_train(const Dataset& data, int max_depth) {
    check_features(data);
    if (max_depth < 0) throw ParameterError("max_depth must be >= 0");
    ClassifierModel m;
    m.kind_ = ModelKind::DecisionTree;
    m.max_depth_ = max_depth;
    m.features_ = data.front().values.size();
    m.nodes_ = TreeBuilder(data, max_depth).build();
    m.meta_["corpus_hash"] = std::to_string(dataset_hash(data));
    m.meta_["created"] = utc_date();
    return m;
}

int ClassifierModel::predict(std::span<const double> x) const {
    if (x.size() != features_) {
        throw InvalidInput("window has " + std::to_string(x.size()) + " features, model expects " +
                           std::to_string(features_));
    }
    if (kind_ == ModelKind::DecisionTree) {
        int node = 0;
        while (nodes_[node].feature >= 0) {
            const auto& n = nodes_[node];
            node = x[n.feature] <= n.threshold ? n.left : n.right;
        }
        return nodes_[node].label;
    }
    std::vector<std::pair<double, std::size_t>> dist(samples_.size());
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        double d = 0.0;
        const auto& s = samples_[i];
        for (std::size_t j = 0; j < features_; ++j) {
            const double diff = s[j] - x[j];
            d += diff * diff;
        }
        dist[i] = {d, i};
    }
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(k_), dist.size());
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    std::size_t votes = 0;
    for (std::size_t i = 0; i < k; ++i) votes += labels_[dist[i].second] == 1;
    return 2 * votes > k ? 1 : 0;
}

int ClassifierModel::depth() const {
    if (kind_ != ModelKind::DecisionTree || nodes_.empty()) return 0;
    std::vector<int> d(nodes_.size(), 0);
    int deepest = 0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        // Children are always stored after their parent.
        if (nodes_[i].feature < 0) continue;
        d[nodes_[i].left] = d[nodes_[i].right] = d[i] + 1;
        deepest = std::max(deepest, d[i] + 1);
    }
    return deepest;
}

void ClassifierModel::set_metadata(const std::string& key, const std::string& value) {
    if (key.find_first_of(" \n=") != std::string::npos || value.find('\n') != std::string::npos) {
        throw InvalidInput("metadata keys may not contain spaces, '=' or newlines");
    }
    meta_[key] = value;
}

std::string ClassifierModel::describe() const {
    if (kind_ == ModelKind::Knn) return "KNN " + std::to_string(k_);
    return "DT " + std::to_string(max_depth_);
}

void ClassifierModel::save(std::ostream& out) const {
    out << "memcovert-model 1\n";
    out << "kind " << (kind_ == ModelKind::Knn ? "knn" : "dtree") << '\n';
    out << "features " << features_ << '\n';
    for (const auto& [k, v] : meta_) out << "meta " << k << '=' << v << '\n';
    if (kind_ == ModelKind::Knn) {
        out << "k " << k_ << '\n';
        out << "samples " << samples_.size() << '\n';
        for (std::size_t i = 0; i < samples_.size(); ++i) {
            out << labels_[i];
            for (double v : samples_[i]) out << ' ' << format_double(v);
            out << '\n';
        }
    } else {
        out << "max_depth " << max_depth_ << '\n';
        out << "nodes " << nodes_.size() << '\n';
        for (const auto& n : nodes_) {
            out << n.feature << ' ' << format_double(n.threshold) << ' ' << n.left << ' ' << n.right
                << ' ' << n.label << '\n';
        }
    }
    out << "end\n";
}

namespace {

std::string expect_key(std::istream& in, const std::string& key) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("model truncated before '" + key + "'");
    if (line.rfind(key + ' ', 0) != 0) {
        throw ParseError("model: expected '" + key + "', found '" + line + "'");
    }
    return line.substr(key.size() + 1);
}

}  // namespace

ClassifierModel ClassifierModel::load(std::istream& in) {
    const auto version = expect_key(in, "memcovert-model");
    if (version != "1") throw ParseError("unsupported model version " + version);
    ClassifierModel m;
    const auto kind = expect_key(in, "kind");
    if (kind == "knn") {
        m.kind_ = ModelKind::Knn;
    } else if (kind == "dtree") {
        m.kind_ = ModelKind::DecisionTree;
    } else {
        throw ParseError("unknown model kind '" + kind + "'");
    }
    m.features_ = std::stoul(expect_key(in, "features"));
    std::string line;
    while (std::getline(in, line) && line.rfind("meta ", 0) == 0) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("model: bad metadata line");
        m.meta_[line.substr(5, eq - 5)] = line.substr(eq + 1);
    }
    std::istringstream first(line);
    std::string key;
    first >> key;
    if (m.kind_ == ModelKind::Knn) {
        if (key != "k") throw ParseError("model: expected 'k'");
        first >> m.k_;
        const auto n = std::stoul(expect_key(in, "samples"));
        m.samples_.assign(n, std::vector<double>(m.features_));
        m.labels_.assign(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            if (!(in >> m.labels_[i])) throw ParseError("model: truncated sample " + std::to_string(i));
            for (auto& v : m.samples_[i]) {
                if (!(in >> v)) throw ParseError("model: truncated sample " + std::to_string(i));
            }
        }
    } else {
        if (key != "max_depth") throw ParseError("model: expected 'max_depth'");
        first >> m.max_depth_;
        const auto n = std::stoul(expect_key(in, "nodes"));
        m.nodes_.resize(n);
        for (auto& node : m.nodes_) {
            if (!(in >> node.feature >> node.threshold >> node.left >> node.right >> node.label)) {
                throw ParseError("model: truncated node list");
            }
        }
        for (const auto& node : m.nodes_) {
            const auto bad = [n](int c) { return c < 0 || static_cast<std::size_t>(c) >= n; };
            if (node.feature >= 0 &&
                (bad(node.left) || bad(node.right) || static_cast<std::size_t>(node.feature) >= m.features_)) {
                throw ParseError("model: node references out of range");
            }
        }
        if (n == 0) throw ParseError("model: tree without nodes");
    }
    in >> std::ws;
    if (!std::getline(in, line) || line != "end") throw ParseError("model: missing 'end'");
    return m;
}

void ClassifierModel::save_file(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write model " + path);
    save(out);
}

ClassifierModel ClassifierModel::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open model " + path);
    return load(in);
}

// ---------------------------------------------------------------- evaluation

EvalReport evaluate(const Predictor& predict, const Dataset& held_out) {
    EvalReport r;
    r.windows = held_out.size();
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& w : held_out) {
        const int p = predict(w.values);
        if (w.label == 1) {
            (p == 1 ? r.true_positive : r.false_negative)++;
        } else {
            (p == 1 ? r.false_positive : r.true_negative)++;
        }
    }
    const auto elapsed = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0);
    if (r.windows == 0) return r;
    const auto pct = [](std::size_t a, std::size_t b) {
        return b == 0 ? 0.0 : 100.0 * static_cast<double>(a) / static_cast<double>(b);
    };
    r.accuracy_pct = pct(r.true_positive + r.true_negative, r.windows);
    r.false_negative_pct = pct(r.false_negative, r.true_positive + r.false_negative);
    r.false_positive_pct = pct(r.false_positive, r.false_positive + r.true_negative);
    r.inference_ms_per_window = elapsed.count() / static_cast<double>(r.windows);
    return r;
}

EvalReport evaluate(const ClassifierModel& model, const Dataset& held_out) {
    return evaluate([&model](std::span<const double> x) { return model.predict(x); }, held_out);
}

std::string format_eval(const std::string& label, const EvalReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "%-8s windows=%zu accuracy=%.2f%% fn=%.2f%% fp=%.2f%% time_ms=%.4f", label.c_str(),
                  r.windows, r.accuracy_pct, r.false_negative_pct, r.false_positive_pct,
                  r.inference_ms_per_window);
    return buf;
}

// ---------------------------------------------------------------- corpus

std::vector<LabeledTrace> synthesize_corpus(const CorpusOptions& options) {
    if (options.attack_profiles.empty() || options.benign_profiles.empty()) {
        throw ParameterError("corpus needs attack and benign profiles");
    }
    const auto& lib = channel::ProfileLibrary::builtin();
    const auto mod = modulation::ModulationParams::rz_defaults();
    std::mt19937_64 rng(options.seed);
    std::vector<LabeledTrace> out;
    const auto packets_needed = options.trace_duration_us / mod.packet_duration_us() + 2;
    for (std::size_t i = 0; i < options.traces_per_class; ++i) {
        const auto& profile = options.attack_profiles[i % options.attack_profiles.size()];
        const auto& p = lib.get(profile);

        std::vector<std::uint8_t> text(static_cast<std::size_t>((packets_needed + 1) / 2));
        for (auto& c : text) c = static_cast<std::uint8_t>(0x20 + rng() % 95);
        const auto bits = codec::packets_to_bits(codec::encode_message(text));
        const auto offset = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(mod.t_p_us()));
        const auto schedule = modulation::schedule_bits(bits, mod, offset - mod.t_p_us());
        auto attack = backend::execute_and_sample(schedule, channel::background_model(profile, rng(), lib),
                                                  options.sample_period_us, p.level_bytes,
                                                  options.trace_duration_us);
        std::vector<std::int64_t> activity;
        for (const auto& e : schedule.events) activity.push_back(e.t_us);
        std::sort(activity.begin(), activity.end());
        out.push_back({std::move(attack), 1, "attack-" + std::to_string(i) + "-" + profile,
                       std::move(activity)});

        const auto& quiet = options.benign_profiles[i % options.benign_profiles.size()];
        auto benign = channel::synth_background(quiet, options.trace_duration_us,
                                                options.sample_period_us, rng(), lib);
        out.push_back({std::move(benign), 0, "benign-" + std::to_string(i) + "-" + quiet, std::nullopt});
    }
    return out;
}

// ---------------------------------------------------------------- monitor

bool AlertLatch::update(int prediction) {
    if (prediction != 1) {
        run_ = 0;
        return false;
    }
    return ++run_ == needed_;
}

namespace {

struct RawWindow {
    std::vector<double> values;
    std::int64_t t_us = 0;
};

MonitorEvent classify_window(const RawWindow& w, const ClassifierModel& model, AlertLatch& latch) {
    MonitorEvent e;
    e.t_us = w.t_us;
    e.prediction = model.predict(normalize_window(w.values));
    const auto [lo, hi] = std::minmax_element(w.values.begin(), w.values.end());
    e.min_bytes = *lo;
    e.max_bytes = *hi;
    e.mean_bytes = std::accumulate(w.values.begin(), w.values.end(), 0.0) /
                   static_cast<double>(w.values.size());
    e.alert = latch.update(e.prediction);
    return e;
}

// Accumulates samples into windows, discarding a window that straddles a gap.
class WindowAssembler {
public:
    WindowAssembler(std::size_t window, std::int64_t period_us)
        : window_(window), max_gap_us_(period_us + period_us / 2) {}

    // Returns a complete window, if this sample finished one.
    std::optional<RawWindow> add(const TimedSample& s, std::size_t& gaps) {
        if (!current_.values.empty() && s.t_us - last_t_ > max_gap_us_) {
            ++gaps;
            current_.values.clear();
        }
        last_t_ = s.t_us;
        current_.values.push_back(static_cast<double>(s.used_bytes));
        current_.t_us = s.t_us;
        if (current_.values.size() < window_) return std::nullopt;
        RawWindow done = std::move(current_);
        current_ = {};
        current_.values.reserve(window_);
        return done;
    }

private:
    std::size_t window_;
    std::int64_t max_gap_us_;
    std::int64_t last_t_ = 0;
    RawWindow current_;
};

}  // namespace

MonitorLog monitor_trace(const MemoryTrace& trace, const ClassifierModel& model,
                         const MonitorOptions& options) {
    MonitorLog log;
    AlertLatch latch(options.consecutive_for_alert);
    WindowAssembler assembler(options.window, trace.nominal_period_us());
    for (const auto& s : trace.samples()) {
        if (auto w = assembler.add(s, log.gaps)) {
            auto e = classify_window(*w, model, latch);
            if (e.alert) log.alerts.push_back(e.t_us);
            log.events.push_back(e);
        }
    }
    return log;
}

MonitorLog run_monitor(backend::Sampler& sampler, const ClassifierModel& model,
                       std::int64_t duration_us, std::int64_t period_us,
                       const MonitorOptions& options,
                       const std::function<void(const MonitorEvent&)>& on_event,
                       const std::atomic<bool>* stop) {
    MonitorLog log;
    BoundedQueue<RawWindow> queue(options.queue_capacity);
    std::size_t gaps = 0, dropped = 0;
    std::exception_ptr sampler_error;
    std::thread producer([&] {
        try {
            WindowAssembler assembler(options.window, period_us);
            sampler.stream(
                duration_us, period_us,
                [&](const TimedSample& s) {
                    if (auto w = assembler.add(s, gaps)) {
                        if (!queue.try_push(std::move(*w))) ++dropped;
                    }
                },
                stop);
        } catch (...) {
            sampler_error = std::current_exception();
        }
        queue.close();
    });
    AlertLatch latch(options.consecutive_for_alert);
    while (auto w = queue.pop()) {
        auto e = classify_window(*w, model, latch);
        if (e.alert) log.alerts.push_back(e.t_us);
        if (on_event) on_event(e);
        log.events.push_back(e);
    }
    producer.join();
    if (sampler_error) std::rethrow_exception(sampler_error);
    log.gaps = gaps;
    log.dropped = dropped;
    return log;
}

}  // namespace memcovert::detect
