#pragma once

// Toy local learner plus a device-parameterized training-time cost model.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stigma/netsim.hpp"

namespace stigma::trainer {

using netsim::DeviceClass;

struct Sample {
    std::vector<double> x;
    int label = 0;
    friend bool operator==(const Sample&, const Sample&) = default;
};

struct SyntheticDataset {
    std::size_t dim = 0;
    std::vector<Sample> samples;

    std::size_t size() const { return samples.size(); }
    std::size_t count(int label) const {
        return static_cast<std::size_t>(
            std::count_if(samples.begin(), samples.end(), [&](const Sample& s) { return s.label == label; }));
    }
    friend bool operator==(const SyntheticDataset&, const SyntheticDataset&) = default;
};

/// Two Gaussian clusters (unit variance) whose means sit at -sep/2 and +sep/2
/// on every coordinate. Class 0 gets n/2 samples, class 1 the rest.
inline SyntheticDataset make_dataset(std::uint64_t seed, std::size_t n, double separation, std::size_t dim = 2) {
    if (n < 2) throw std::invalid_argument("a dataset needs at least two samples");
    if (dim == 0) throw std::invalid_argument("feature dimension must be positive");
    netsim::Rng rng(seed);
    SyntheticDataset ds;
    ds.dim = dim;
    ds.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Sample s;
        s.label = i < n / 2 ? 0 : 1;
        const double mean = (s.label == 0 ? -0.5 : 0.5) * separation;
        for (std::size_t j = 0; j < dim; ++j) s.x.push_back(mean + rng.normal());
        ds.samples.push_back(std::move(s));
    }
    for (std::size_t i = n - 1; i > 0; --i) std::swap(ds.samples[i], ds.samples[rng.below(i + 1)]);
    return ds;
}

/// Seeded 80/20 split; the holdout gets at least one sample.
inline std::pair<SyntheticDataset, SyntheticDataset> split_holdout(const SyntheticDataset& ds, std::uint64_t seed) {
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0);
    netsim::Rng rng(seed ^ 0x5EED5EEDULL);
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    const std::size_t n_train = std::min(ds.size() - 1, ds.size() * 4 / 5);
    SyntheticDataset train{ds.dim, {}}, holdout{ds.dim, {}};
    for (std::size_t k = 0; k < idx.size(); ++k) (k < n_train ? train : holdout).samples.push_back(ds.samples[idx[k]]);
    return {std::move(train), std::move(holdout)};
}

/// Dense weights with the bias as the last entry.
struct ModelParams {
    std::vector<double> weights;
    std::uint64_t sample_count = 0;
    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

inline double score(const ModelParams& p, const std::vector<double>& x) {
    if (p.weights.size() != x.size() + 1) throw std::invalid_argument("feature dimension does not match model");
    double z = p.weights.back();
    for (std::size_t j = 0; j < x.size(); ++j) z += p.weights[j] * x[j];
    return z;
}

inline int predict(const ModelParams& p, const std::vector<double>& x) { return score(p, x) >= 0.0 ? 1 : 0; }

inline double accuracy(const ModelParams& p, const SyntheticDataset& ds) {
    if (ds.samples.empty()) return 0.0;
    std::size_t hit = 0;
    for (const auto& s : ds.samples) hit += predict(p, s.x) == s.label;
    return static_cast<double>(hit) / static_cast<double>(ds.size());
}

/// Mean logistic loss.
inline double log_loss(const ModelParams& p, const SyntheticDataset& ds) {
    double total = 0.0;
    for (const auto& s : ds.samples) {
        const double z = score(p, s.x);
        // log(1 + e^{-y z}) with y in {-1, +1}, computed stably
        const double m = s.label == 1 ? -z : z;
        total += m > 0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
    }
    return ds.samples.empty() ? 0.0 : total / static_cast<double>(ds.size());
}

struct TrainOptions {
    double step_size = 0.1;
    std::size_t max_epochs = 500;
    std::uint64_t split_seed = 0;
};

struct TrainResult {
    ModelParams params;
    double achieved_accuracy = 0.0;
    std::size_t epochs_used = 0;
    std::vector<double> loss_history;  // training loss before each epoch's check
};

/// Full-batch gradient descent on a logistic classifier. Holdout accuracy is
/// checked before every step; training stops once it reaches the target.
inline TrainResult train_toy(const SyntheticDataset& ds, double target_accuracy, TrainOptions opt = {}) {
    if (ds.count(0) == 0 || ds.count(1) == 0) throw std::invalid_argument("training data must contain both classes");
    if (!(opt.step_size > 0.0)) throw std::invalid_argument("step size must be positive");
    auto [train, holdout] = split_holdout(ds, opt.split_seed);
    TrainResult r;
    r.params.weights.assign(ds.dim + 1, 0.0);
    r.params.sample_count = train.size();
    const double inv_n = 1.0 / static_cast<double>(train.size());
    for (std::size_t epoch = 0;; ++epoch) {
        r.loss_history.push_back(log_loss(r.params, train));
        r.achieved_accuracy = accuracy(r.params, holdout);
        r.epochs_used = epoch;
        if (r.achieved_accuracy >= target_accuracy || epoch == opt.max_epochs) break;
        std::vector<double> grad(r.params.weights.size(), 0.0);
        for (const auto& s : train.samples) {
            const double err = 1.0 / (1.0 + std::exp(-score(r.params, s.x))) - s.label;
            for (std::size_t j = 0; j < ds.dim; ++j) grad[j] += err * s.x[j];
            grad.back() += err;
        }
        for (std::size_t j = 0; j < grad.size(); ++j) r.params.weights[j] -= opt.step_size * grad[j] * inv_n;
    }
    return r;
}

// ---------------------------------------------------------------------------
// Hardware profiles and cost model

struct DeviceProfile {
    DeviceClass device_class;
    double cpu_clock_ghz = 0.0;
    double memory_gb = 0.0;
    double storage_gb = 0.0;
    double bandwidth_mbps = 0.0;
    bool constrained = false;
};

inline DeviceProfile device_profile(DeviceClass d) {
    const double bw = netsim::device_bandwidth_mbps(d);
    switch (d) {
    case DeviceClass::m5a_xlarge: return {d, 2.5, 32, 120, bw, false};
    case DeviceClass::c5_large: return {d, 3.6, 8, 120, bw, false};
    case DeviceClass::es_large: return {d, 3.6, 8, 120, bw, false};
    case DeviceClass::es_medium: return {d, 3.6, 4, 120, bw, false};
    case DeviceClass::egs: return {d, 3.5, 32, 1000, bw, false};
    case DeviceClass::njn: return {d, 1.43, 4, 64, bw, true};
    case DeviceClass::rpi4: return {d, 1.5, 4, 64, bw, true};
    }
    throw std::invalid_argument("unknown device class");
}

/// Accuracy multipliers relative to the 0.97 reference point.
struct AccuracyMultipliers {
    double at_085 = 0.35;
    double at_070 = 0.20;

    void validate() const {
        if (!(at_085 > 0.0 && at_085 <= 1.0 && at_070 > 0.0 && at_070 <= at_085))
            throw std::invalid_argument("accuracy multipliers must satisfy 0 < m(0.70) <= m(0.85) <= 1");
    }

    /// Log-linear between the calibration points, clamped outside [0.70, 0.97].
    double at(double accuracy) const {
        constexpr double a70 = 0.70, a85 = 0.85, a97 = 0.97;
        if (accuracy >= a97) return 1.0;
        if (accuracy <= a70) return at_070;
        auto lerp_log = [](double x, double x0, double x1, double y0, double y1) {
            const double t = (x - x0) / (x1 - x0);
            return std::exp(std::log(y0) + t * (std::log(y1) - std::log(y0)));
        };
        if (accuracy >= a85) return lerp_log(accuracy, a85, a97, at_085, 1.0);
        return lerp_log(accuracy, a70, a85, at_070, at_085);
    }
};

struct CostModel {
    /// Training time at 0.97 accuracy in units of the m5a.xlarge time.
    std::map<DeviceClass, double> base_units{
        {DeviceClass::m5a_xlarge, 1.0}, {DeviceClass::c5_large, 0.85}, {DeviceClass::es_large, 0.9},
        {DeviceClass::es_medium, 1.2},  {DeviceClass::egs, 0.4},       {DeviceClass::njn, 0.55},
        {DeviceClass::rpi4, 1.5}};
    AccuracyMultipliers standard{0.35, 0.20};
    AccuracyMultipliers constrained{0.30, 0.10};
    double unit_ms = 60'000.0;
    bool include_transfer = true;
    std::uint64_t model_bytes = 1'000'000;

    void validate() const {
        for (const auto& [d, u] : base_units)
            if (!(u > 0.0)) throw std::invalid_argument("base time must be positive");
        if (!(unit_ms > 0.0)) throw std::invalid_argument("unit_ms must be positive");
        standard.validate();
        constrained.validate();
    }

    double multiplier(DeviceClass d, double target_accuracy) const {
        return (device_profile(d).constrained ? constrained : standard).at(target_accuracy);
    }

    double compute_ms(DeviceClass d, double target_accuracy) const {
        auto it = base_units.find(d);
        if (it == base_units.end()) throw std::invalid_argument("no base time for device class");
        return it->second * unit_ms * multiplier(d, target_accuracy);
    }

    /// Training plus (optionally) shipping the model to the device.
    double estimate_ms(DeviceClass d, double target_accuracy) const {
        double t = compute_ms(d, target_accuracy);
        if (include_transfer) t += netsim::transfer_time(model_bytes, netsim::device_link(d));
        return t;
    }

    static CostModel from_json(const nlohmann::json& j) {
        CostModel m;
        if (j.contains("unit_ms")) m.unit_ms = j.at("unit_ms").get<double>();
        if (j.contains("include_transfer")) m.include_transfer = j.at("include_transfer").get<bool>();
        if (j.contains("model_bytes")) m.model_bytes = j.at("model_bytes").get<std::uint64_t>();
        if (j.contains("base"))
            for (const auto& [name, v] : j.at("base").items()) m.base_units[netsim::parse_device(name)] = v.get<double>();
        auto read = [&](const char* key, AccuracyMultipliers& out) {
            if (!j.contains("multipliers") || !j["multipliers"].contains(key)) return;
            const auto& t = j["multipliers"][key];
            if (t.contains("0.85")) out.at_085 = t.at("0.85").get<double>();
            if (t.contains("0.70")) out.at_070 = t.at("0.70").get<double>();
        };
        read("standard", m.standard);
        read("constrained", m.constrained);
        m.validate();
        return m;
    }
};

inline double estimate_time(const CostModel& m, const DeviceProfile& d, double target_accuracy) {
    return m.estimate_ms(d.device_class, target_accuracy);
}

}  // namespace stigma::trainer
