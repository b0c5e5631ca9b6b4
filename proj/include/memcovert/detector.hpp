#pragma once

#include "memcovert/backends.hpp"
#include "memcovert/trace.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace memcovert::detect {

inline constexpr std::size_t kWindowSize = 100;

struct FeatureWindow {
    std::vector<double> values;
    int label = -1;  // 0 benign, 1 attack, -1 unlabeled
};

// Min-max normalization into [0, 1]; a constant window maps to all 0.5.
std::vector<double> normalize_window(std::span<const double> raw);

struct LabeledTrace {
    MemoryTrace trace;
    int label = 0;
    std::string name;
    // Transmitter event times, when known. An attack window containing none
    // of them carries no channel activity and is left out of the dataset.
    std::optional<std::vector<std::int64_t>> activity_us;
};

struct DatasetOptions {
    std::size_t window = kWindowSize;
    std::size_t stride = 0;  // 0: same as window
    bool balance = true;
    std::uint64_t seed = 1;
};

using Dataset = std::vector<FeatureWindow>;

// Non-overlapping (by default) normalized windows of one trace.
Dataset windows_from_trace(const MemoryTrace& trace, int label, std::size_t window = kWindowSize,
                           std::size_t stride = 0);
Dataset windows_from_trace(const LabeledTrace& trace, std::size_t window = kWindowSize,
                           std::size_t stride = 0);

// Traces shorter than one window are skipped and reported in `warnings`.
// With balance set the larger class is down-sampled (seeded) to the size of
// the smaller one; attack windows come first in the result.
Dataset build_dataset(const std::vector<LabeledTrace>& traces, const DatasetOptions& options = {},
                      std::vector<std::string>* warnings = nullptr);

// Seeded shuffle, then the first round(train_fraction * n) windows train.
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double train_fraction,
                                          std::uint64_t seed);

void write_dataset(const Dataset& data, std::ostream& out);
Dataset read_dataset(std::istream& in);
void write_dataset_file(const Dataset& data, const std::string& path);
Dataset read_dataset_file(const std::string& path);

// FNV-1a over labels and the exact bit patterns of every feature.
std::uint64_t dataset_hash(const Dataset& data);

enum class ModelKind { Knn, DecisionTree };

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;   // feature value <= threshold
    int right = -1;  // feature value > threshold
    int label = 0;
};

class ClassifierModel {
public:
    static ClassifierModel knn_train(const Dataset& data, int k);
    static ClassifierModel dtree_train(const Dataset& data, int max_depth);

    int predict(std::span<const double> features) const;

    ModelKind kind() const noexcept { return kind_; }
    int k() const noexcept { return k_; }
    int max_depth() const noexcept { return max_depth_; }
    // Edges on the longest root-to-leaf path; 0 for KNN and single leaves.
    int depth() const;
    const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
    std::size_t feature_count() const noexcept { return features_; }
    const std::map<std::string, std::string>& metadata() const noexcept { return meta_; }
    void set_metadata(const std::string& key, const std::string& value);
    std::string describe() const;

    void save(std::ostream& out) const;
    static ClassifierModel load(std::istream& in);
    void save_file(const std::string& path) const;
    static ClassifierModel load_file(const std::string& path);

private:
    ModelKind kind_ = ModelKind::Knn;
    int k_ = 1;
    int max_depth_ = 0;
    std::size_t features_ = kWindowSize;
    std::vector<std::vector<double>> samples_;
    std::vector<int> labels_;
    std::vector<TreeNode> nodes_;
    std::map<std::string, std::string> meta_;
};

struct EvalReport {
    std::size_t windows = 0;
    std::size_t true_positive = 0, true_negative = 0, false_positive = 0, false_negative = 0;
    double accuracy_pct = 0.0;
    // Share of attack windows missed / benign windows flagged.
    double false_negative_pct = 0.0;
    double false_positive_pct = 0.0;
    double inference_ms_per_window = 0.0;
};

using Predictor = std::function<int(std::span<const double>)>;

EvalReport evaluate(const Predictor& predict, const Dataset& held_out);
EvalReport evaluate(const ClassifierModel& model, const Dataset& held_out);
std::string format_eval(const std::string& label, const EvalReport& report);

// Seeded synthetic corpus. Attack traces are an RZ-OOK transmission of
// printable text recorded over one of `attack_profiles` (the transmitter on
// an otherwise quiet machine); benign traces cycle through `benign_profiles`.
struct CorpusOptions {
    std::vector<std::string> attack_profiles = {"idle", "vp1080"};
    std::vector<std::string> benign_profiles = {"idle",   "cachebench", "vp1080",  "vp4k",   "vp4k_2",
                                                "vp4k_3", "sg_game",    "lh_game", "lh_br_game"};
    std::size_t traces_per_class = 70;
    std::int64_t trace_duration_us = 2'000'000;
    std::int64_t sample_period_us = 1000;
    std::uint64_t seed = 7;
};

std::vector<LabeledTrace> synthesize_corpus(const CorpusOptions& options);

struct MonitorOptions {
    std::size_t window = kWindowSize;
    int consecutive_for_alert = 3;
    std::size_t queue_capacity = 64;
};

struct MonitorEvent {
    std::int64_t t_us = 0;  // timestamp of the last sample in the window
    int prediction = 0;
    double mean_bytes = 0.0;
    double min_bytes = 0.0;
    double max_bytes = 0.0;
    bool alert = false;
};

struct MonitorLog {
    std::vector<MonitorEvent> events;
    std::vector<std::int64_t> alerts;
    // Windows thrown away because of sampling gaps or a full queue.
    std::size_t gaps = 0;
    std::size_t dropped = 0;
};

// Counts consecutive positives; fires once each time the run reaches M.
class AlertLatch {
public:
    explicit AlertLatch(int consecutive) : needed_(consecutive) {}
    bool update(int prediction);

private:
    int needed_;
    int run_ = 0;
};

// Offline monitor over a recorded trace. A window whose sample spacing
// exceeds 1.5x the nominal period is skipped and counted as a gap.
MonitorLog monitor_trace(const MemoryTrace& trace, const ClassifierModel& model,
                         const MonitorOptions& options = {});

template <typename T>
class BoundedQueue {
public:
    explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

    // Never blocks; returns false when full or closed.
    bool try_push(T item) {
        {
            std::lock_guard lock(mutex_);
            if (closed_ || items_.size() >= capacity_) return false;
            items_.push_back(std::move(item));
        }
        ready_.notify_one();
        return true;
    }

    // Blocks until an item arrives; empty optional once closed and drained.
    std::optional<T> pop() {
        std::unique_lock lock(mutex_);
        ready_.wait(lock, [this] { return closed_ || !items_.empty(); });
        if (items_.empty()) return std::nullopt;
        T item = std::move(items_.front());
        items_.pop_front();
        return item;
    }

    void close() {
        {
            std::lock_guard lock(mutex_);
            closed_ = true;
        }
        ready_.notify_all();
    }

private:
    std::size_t capacity_;
    std::mutex mutex_;
    std::condition_variable ready_;
    std::deque<T> items_;
    bool closed_ = false;
};

// Live monitor: the sampler thread assembles windows and hands them to the
// inference thread through a bounded queue. `on_event` runs on the inference
// thread.
MonitorLog run_monitor(backend::Sampler& sampler, const ClassifierModel& model,
                       std::int64_t duration_us, std::int64_t period_us,
                       const MonitorOptions& options = {},
                       const std::function<void(const MonitorEvent&)>& on_event = {},
                       const std::atomic<bool>* stop = nullptr);

}  // namespace memcovert::detect
