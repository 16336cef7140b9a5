#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "vburst/config.hpp"
#include "vburst/data.hpp"
#include "vburst/metrics.hpp"
#include "vburst/model.hpp"
#include "vburst/weighting.hpp"

namespace vburst {

enum class Strategy { uniform, dwa, rruw, druw };

inline const char* to_string(Strategy s) {
    switch (s) {
        case Strategy::uniform: return "uniform";
        case Strategy::dwa: return "dwa";
        case Strategy::rruw: return "rruw";
        case Strategy::druw: return "druw";
    }
    return "?";
}

inline Strategy strategy_from_string(const std::string& s) {
    if (s == "uniform") return Strategy::uniform;
    if (s == "dwa") return Strategy::dwa;
    if (s == "rruw") return Strategy::rruw;
    if (s == "druw") return Strategy::druw;
    throw std::invalid_argument("unknown strategy '" + s + "'");
}

/// Complete description of one experiment.
struct RunConfig {
    Architecture architecture = Architecture::vanilla;
    Strategy strategy = Strategy::uniform;
    int epochs = 30;
    int batch_size = 8;
    double lr_backbone = 1e-5;
    double lr_heads = 1e-3;
    int plateau_patience = 5;
    double plateau_factor = 0.5;
    std::vector<std::uint64_t> seeds{1};
    BackboneConfig backbone;
    HeadConfig heads;
    double dwa_temperature = 2.0;
    double phi = 1.0;
    AdamWConfig optim;
    int classes = 8;
    int emo_dims = 10;
    int cultures = 4;
    std::vector<int> enabled_tasks{0, 1, 2, 3};
    Config source = Config::defaults();

    void validate() const {
        check(lr_backbone > 0 && lr_heads > 0, "trainer: learning rates must be positive");
        check(plateau_factor > 0 && plateau_factor < 1,
              "trainer: plateau_factor must lie in (0,1)");
        check(epochs >= 1, "trainer: epochs must be at least 1");
        check(batch_size >= 2, "trainer: batch_size must be at least 2");
        check(!seeds.empty(), "trainer: need at least one seed");
        check(!enabled_tasks.empty(), "trainer: need at least one enabled task");
        for (int t : enabled_tasks)
            check(0 <= t && t < kTaskCount, "trainer: enabled task index out of range");
        backbone.validate();
        heads.validate();
    }
};

inline std::vector<int> task_indices_from_names(const std::string& csv) {
    static const std::array<const char*, 4> names = {"type", "two", "high", "culture"};
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        const std::string name = b == std::string::npos ? "" : item.substr(b, e - b + 1);
        const auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end()) throw ConfigError("unknown task '" + name + "'");
        out.push_back(static_cast<int>(it - names.begin()));
    }
    return out;
}

inline RunConfig run_config_from(const Config& c) {
    RunConfig rc;
    rc.architecture = architecture_from_string(c.get("trainer.architecture"));
    rc.strategy = strategy_from_string(c.get("trainer.strategy"));
    rc.epochs = c.get_int("trainer.epochs");
    rc.batch_size = c.get_int("trainer.batch_size");
    rc.lr_backbone = c.get_double("trainer.lr_backbone");
    rc.lr_heads = c.get_double("trainer.lr_heads");
    rc.plateau_patience = c.get_int("trainer.plateau_patience");
    rc.plateau_factor = c.get_double("trainer.plateau_factor");
    rc.seeds = c.get_u64_list("trainer.seeds");
    rc.backbone.conv_channels = c.get_int("backbone.conv_channels");
    rc.backbone.d_model = c.get_int("backbone.d_model");
    rc.backbone.n_layers = c.get_int("backbone.n_layers");
    rc.backbone.n_heads = c.get_int("backbone.n_heads");
    rc.backbone.ff_mult = c.get_int("backbone.ff_mult");
    rc.backbone.mask_prob = c.get_double("backbone.mask_prob");
    rc.backbone.conv_kernels = c.get_int_list("backbone.conv_kernels");
    rc.backbone.conv_strides = c.get_int_list("backbone.conv_strides");
    rc.backbone.sample_len = c.get_int("data.wave_len");
    rc.heads.hidden_width = c.get_int("heads.hidden_width");
    rc.heads.attn_blocks = c.get_int("heads.attn_blocks");
    rc.heads.pooling = c.get("heads.pooling");
    rc.dwa_temperature = c.get_double("weighting.temperature");
    rc.phi = c.get_double("weighting.phi");
    rc.optim.beta1 = c.get_double("optim.beta1");
    rc.optim.beta2 = c.get_double("optim.beta2");
    rc.optim.eps = c.get_double("optim.eps");
    rc.optim.weight_decay = c.get_double("optim.weight_decay");
    rc.classes = c.get_int("data.classes");
    rc.emo_dims = c.get_int("data.emo_dims");
    rc.cultures = c.get_int("data.cultures");
    rc.enabled_tasks = task_indices_from_names(c.get("trainer.tasks"));
    rc.source = c;
    return rc;
}

namespace detail {

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

template <typename T>
std::string join(const std::vector<T>& items) {
    std::ostringstream os;
    for (size_t i = 0; i < items.size(); ++i) os << (i ? "," : "") << items[i];
    return os.str();
}

}  // namespace detail

/// Config echo of this run's effective values; the checkpoint loader uses it
/// to rebuild an identical model.
inline Config to_config(const RunConfig& rc) {
    Config c = rc.source;
    c.set("trainer.architecture", to_string(rc.architecture));
    c.set("trainer.strategy", to_string(rc.strategy));
    c.set("trainer.epochs", std::to_string(rc.epochs));
    c.set("trainer.batch_size", std::to_string(rc.batch_size));
    c.set("trainer.lr_backbone", detail::num(rc.lr_backbone));
    c.set("trainer.lr_heads", detail::num(rc.lr_heads));
    c.set("trainer.plateau_patience", std::to_string(rc.plateau_patience));
    c.set("trainer.plateau_factor", detail::num(rc.plateau_factor));
    c.set("trainer.seeds", detail::join(rc.seeds));
    {
        static const std::array<const char*, 4> names = {"type", "two", "high", "culture"};
        std::vector<std::string> task_names;
        for (int t : rc.enabled_tasks) task_names.push_back(names[t]);
        c.set("trainer.tasks", detail::join(task_names));
    }
    c.set("backbone.conv_channels", std::to_string(rc.backbone.conv_channels));
    c.set("backbone.d_model", std::to_string(rc.backbone.d_model));
    c.set("backbone.n_layers", std::to_string(rc.backbone.n_layers));
    c.set("backbone.n_heads", std::to_string(rc.backbone.n_heads));
    c.set("backbone.ff_mult", std::to_string(rc.backbone.ff_mult));
    c.set("backbone.mask_prob", detail::num(rc.backbone.mask_prob));
    c.set("backbone.conv_kernels", detail::join(rc.backbone.conv_kernels));
    c.set("backbone.conv_strides", detail::join(rc.backbone.conv_strides));
    c.set("data.wave_len", std::to_string(rc.backbone.sample_len));
    c.set("heads.hidden_width", std::to_string(rc.heads.hidden_width));
    c.set("heads.attn_blocks", std::to_string(rc.heads.attn_blocks));
    c.set("heads.pooling", rc.heads.pooling);
    c.set("weighting.temperature", detail::num(rc.dwa_temperature));
    c.set("weighting.phi", detail::num(rc.phi));
    c.set("optim.beta1", detail::num(rc.optim.beta1));
    c.set("optim.beta2", detail::num(rc.optim.beta2));
    c.set("optim.eps", detail::num(rc.optim.eps));
    c.set("optim.weight_decay", detail::num(rc.optim.weight_decay));
    c.set("data.classes", std::to_string(rc.classes));
    c.set("data.emo_dims", std::to_string(rc.emo_dims));
    c.set("data.cultures", std::to_string(rc.cultures));
    return c;
}

/// Halves the learning rates after `patience` consecutive epochs without
/// monitor improvement.
class PlateauScheduler {
  public:
    PlateauScheduler(int patience, double factor) : patience_(patience), factor_(factor) {
        check(patience >= 1, "scheduler: patience must be at least 1");
    }

    /// Returns true when the rates should be reduced after this epoch.
    bool observe(double monitor) {
        if (!has_best_ || monitor > best_) {
            best_ = monitor;
            has_best_ = true;
            stale_ = 0;
            return false;
        }
        if (++stale_ >= patience_) {
            stale_ = 0;
            return true;
        }
        return false;
    }

    double factor() const { return factor_; }
    double best() const { return best_; }
    int stale() const { return stale_; }

  private:
    int patience_;
    double factor_;
    double best_ = 0.0;
    bool has_best_ = false;
    int stale_ = 0;
};

/// Validation scores: UAR for the type task, mean CCC and mean Pearson rho
/// for the regression tasks (culture per its own block).
struct EvalMetrics {
    double type_uar = 0.0;
    double two_ccc = 0.0, two_rho = 0.0;
    double high_ccc = 0.0, high_rho = 0.0;
    double culture_ccc = 0.0, culture_rho = 0.0;

    double task_metric(int task) const {
        switch (task) {
            case 0: return type_uar;
            case 1: return two_ccc;
            case 2: return high_ccc;
            case 3: return culture_ccc;
        }
        throw std::out_of_range("EvalMetrics: task index out of range");
    }

    double monitor(const std::vector<int>& tasks) const {
        double s = 0.0;
        for (int t : tasks) s += task_metric(t);
        return s / tasks.size();
    }
};

struct EpochRecord {
    int epoch = 0;
    std::array<double, 4> train_loss{};  // NaN for disabled tasks
    std::array<double, 4> val_metric{};
    std::array<double, 4> lambda{};  // NaN when the strategy has no dynamic weights
    std::array<double, 4> alpha{};   // NaN when the strategy has no alpha
    double lr_backbone = 0.0;
    double lr_heads = 0.0;
    double monitor = 0.0;
};

namespace detail {

inline std::string fmt(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline const std::array<const char*, 4>& task_names() {
    static const std::array<const char*, 4> names = {"type", "two", "high", "culture"};
    return names;
}

}  // namespace detail

inline std::string epoch_log_header() {
    return "epoch,task,train_loss,val_metric,lr_backbone,lr_heads,lambda,alpha";
}

inline std::string epoch_log_rows(const EpochRecord& r, const std::vector<int>& tasks) {
    std::ostringstream os;
    for (int t : tasks)
        os << r.epoch << ',' << detail::task_names()[t] << ',' << detail::fmt(r.train_loss[t])
           << ',' << detail::fmt(r.val_metric[t]) << ',' << detail::fmt(r.lr_backbone) << ','
           << detail::fmt(r.lr_heads) << ',' << detail::fmt(r.lambda[t]) << ','
           << detail::fmt(r.alpha[t]) << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// Batching and evaluation
// ---------------------------------------------------------------------------

namespace detail {

struct Batch {
    std::vector<std::vector<double>> waves;
    BatchLabels labels;
};

inline Batch make_batch(const Dataset& ds, const std::vector<int>& idx, int emo_dims) {
    Batch b;
    const int n = static_cast<int>(idx.size());
    std::vector<double> two(static_cast<size_t>(n) * 2);
    std::vector<double> high(static_cast<size_t>(n) * emo_dims);
    for (int i = 0; i < n; ++i) {
        const Sample& s = ds.samples[idx[i]];
        b.waves.push_back(s.wave);
        b.labels.type.push_back(s.type_label);
        b.labels.culture.push_back(s.culture);
        two[i * 2] = s.arousal;
        two[i * 2 + 1] = s.valence;
        check(static_cast<int>(s.high.size()) == emo_dims,
              "trainer: sample emotion dimension mismatch");
        std::copy(s.high.begin(), s.high.end(), high.begin() + static_cast<size_t>(i) * emo_dims);
    }
    b.labels.two = Tensor::from_data({n, 2}, std::move(two));
    b.labels.high = Tensor::from_data({n, emo_dims}, std::move(high));
    return b;
}

// Batch index ranges; a trailing single sample is folded into the previous
// batch so every batch has at least two rows (CCC needs two points).
inline std::vector<std::vector<int>> batch_plan(const std::vector<int>& idx, int batch_size) {
    std::vector<std::vector<int>> plan;
    for (size_t start = 0; start < idx.size(); start += batch_size) {
        const size_t end = std::min(idx.size(), start + batch_size);
        plan.emplace_back(idx.begin() + start, idx.begin() + end);
    }
    if (plan.size() >= 2 && plan.back().size() == 1) {
        plan[plan.size() - 2].push_back(plan.back()[0]);
        plan.pop_back();
    }
    return plan;
}

inline double rho_or_zero(const std::vector<double>& x, const std::vector<double>& y) {
    // A constant prediction column has undefined correlation; score it 0
    // for reporting instead of aborting the evaluation.
    try {
        return pearson(x, y);
    } catch (const std::invalid_argument&) {
        return 0.0;
    }
}

inline std::vector<double> column(const std::vector<std::vector<double>>& rows, int col) {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[col]);
    return out;
}

}  // namespace detail

/// Whole-split metrics with masking off and the chain consuming its own
/// predictions.
inline EvalMetrics evaluate_model(Model& model, const Dataset& ds, const std::string& split,
                                  const RunConfig& cfg) {
    const std::vector<int> idx = ds.split_indices(split);
    if (idx.empty()) throw ConfigError("evaluate: split '" + split + "' is empty");
    model.set_training(false);

    std::vector<int> true_type, pred_type, cultures;
    std::vector<std::vector<double>> pred_two, pred_high, pred_culture;
    std::vector<std::vector<double>> true_two, true_high;
    for (const auto& chunk : detail::batch_plan(idx, cfg.batch_size)) {
        detail::Batch b = detail::make_batch(ds, chunk, cfg.emo_dims);
        HeadOutput out = model.forward(b.waves, nullptr, false);
        if (auto* chain = dynamic_cast<ChainHeads*>(&model.heads()))
            check(std::string(chain->last_conditioning_source()) == "prediction",
                  "evaluate: chain conditioned on truth outside training");
        const int n = static_cast<int>(chunk.size());
        for (int i = 0; i < n; ++i) {
            const Sample& s = ds.samples[chunk[i]];
            true_type.push_back(s.type_label);
            cultures.push_back(s.culture);
            true_two.push_back({s.arousal, s.valence});
            true_high.push_back(s.high);
            int arg = 0;
            for (int c = 1; c < cfg.classes; ++c)
                if (out.type_logits.at(i, c) > out.type_logits.at(i, arg)) arg = c;
            pred_type.push_back(arg);
            std::vector<double> row2(2), rowh(cfg.emo_dims),
                rowc(static_cast<size_t>(cfg.cultures) * cfg.emo_dims);
            for (int c = 0; c < 2; ++c) row2[c] = out.two.at(i, c);
            for (int c = 0; c < cfg.emo_dims; ++c) rowh[c] = out.high.at(i, c);
            for (int c = 0; c < cfg.cultures * cfg.emo_dims; ++c) rowc[c] = out.culture.at(i, c);
            pred_two.push_back(std::move(row2));
            pred_high.push_back(std::move(rowh));
            pred_culture.push_back(std::move(rowc));
        }
    }

    EvalMetrics m;
    m.type_uar = uar(true_type, pred_type, cfg.classes).value;

    auto mean_scores = [](const std::vector<std::vector<double>>& pred,
                          const std::vector<std::vector<double>>& truth, int dims, int offset,
                          double& ccc_out, double& rho_out) {
        double cs = 0.0, rs = 0.0;
        for (int d = 0; d < dims; ++d) {
            const auto pc = detail::column(pred, offset + d);
            const auto tc = detail::column(truth, d);
            cs += ccc(pc, tc);
            rs += detail::rho_or_zero(pc, tc);
        }
        ccc_out = cs / dims;
        rho_out = rs / dims;
    };
    mean_scores(pred_two, true_two, 2, 0, m.two_ccc, m.two_rho);
    mean_scores(pred_high, true_high, cfg.emo_dims, 0, m.high_ccc, m.high_rho);

    // Culture: each sample scored on its own block, grouped per culture.
    double cs = 0.0, rs = 0.0;
    int groups = 0;
    for (int c = 0; c < cfg.cultures; ++c) {
        std::vector<std::vector<double>> gp, gt;
        for (size_t i = 0; i < cultures.size(); ++i)
            if (cultures[i] == c) {
                gp.push_back(pred_culture[i]);
                gt.push_back(true_high[i]);
            }
        if (gp.size() < 2) continue;
        double gc = 0.0, gr = 0.0;
        mean_scores(gp, gt, cfg.emo_dims, c * cfg.emo_dims, gc, gr);
        cs += gc;
        rs += gr;
        ++groups;
    }
    check(groups > 0, "evaluate: no culture has two samples in split '" + split + "'");
    m.culture_ccc = cs / groups;
    m.culture_rho = rs / groups;
    return m;
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

struct TrainResult {
    std::vector<EpochRecord> records;
    EvalMetrics best_val;
    EvalMetrics final_val;
    int best_epoch = 0;
    double best_monitor = 0.0;
    std::string checkpoint_path;        // best monitor
    std::string final_checkpoint_path;  // end of training
};

namespace detail {

constexpr char kCheckpointMagic[8] = {'V', 'B', 'C', 'K', '0', '0', '0', '1'};

template <typename T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T take(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    check(in.good(), "checkpoint: truncated file");
    return v;
}

inline void put_doubles(std::ostream& out, const std::vector<double>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}
inline void take_doubles(std::istream& in, std::vector<double>& v) {
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
    check(in.good(), "checkpoint: truncated file");
}

}  // namespace detail

/// Single-file checkpoint: config echo, parameter tensors, optimizer and
/// weighting state. Layout:
///   magic "VBCK0001"; u64 config text length + bytes;
///   u64 seed; i32 epoch; f64 best monitor;
///   u32 param count; per param: u32 name length + bytes, u8 group,
///     u32 rank, u32 extents..., f64 values..., f64 moment1..., f64 moment2...;
///   i64 optimizer step count; f64 group rates (backbone, head, weighting);
///   u32 dwa history rows; per row: u32 count + f64 values;
///   f64 dwa temperature; f64 phi.
inline void save_checkpoint(const std::string& path, const std::vector<Parameter>& params,
                            const AdamW& opt, const DwaState& dwa, const Config& config,
                            std::uint64_t seed, int epoch, double best_monitor) {
    std::ofstream out(path, std::ios::binary);
    check(out.good(), "save_checkpoint: cannot open " + path);
    out.write(detail::kCheckpointMagic, 8);
    const std::string text = config.resolved_text();
    detail::put<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    detail::put<std::uint64_t>(out, seed);
    detail::put<std::int32_t>(out, epoch);
    detail::put<double>(out, best_monitor);

    auto& m1 = const_cast<AdamW&>(opt).moment1();
    auto& m2 = const_cast<AdamW&>(opt).moment2();
    check(m1.size() == params.size(), "save_checkpoint: optimizer does not cover parameters");
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& p = params[i];
        detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(p.group));
        detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.tensor.rank()));
        for (int d : p.tensor.shape()) detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        detail::put_doubles(out, p.tensor.data());
        detail::put_doubles(out, m1[i]);
        detail::put_doubles(out, m2[i]);
    }
    detail::put<std::int64_t>(out, opt.step_count());
    detail::put<double>(out, opt.rates().backbone);
    detail::put<double>(out, opt.rates().head);
    detail::put<double>(out, opt.rates().weighting);
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(dwa.history.size()));
    for (const auto& row : dwa.history) {
        detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(row.size()));
        detail::put_doubles(out, row);
    }
    detail::put<double>(out, dwa.temperature);
    detail::put<double>(out, 0.0);  // reserved: phi travels in the config echo
    check(out.good(), "save_checkpoint: write failed for " + path);
}

struct LoadedCheckpoint {
    Config config = Config::defaults();
    std::uint64_t seed = 0;
    int epoch = 0;
    double best_monitor = 0.0;
    struct StoredParam {
        std::string name;
        ParamGroup group;
        std::vector<int> shape;
        std::vector<double> data, m1, m2;
    };
    std::vector<StoredParam> params;
    std::int64_t step_count = 0;
    GroupRates rates;
    DwaState dwa;
};

inline LoadedCheckpoint load_checkpoint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), "load_checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    check(in.good() && std::memcmp(magic, detail::kCheckpointMagic, 8) == 0,
          "load_checkpoint: bad magic in " + path);
    LoadedCheckpoint ck;
    const auto text_len = detail::take<std::uint64_t>(in);
    std::string text(text_len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(text_len));
    check(in.good(), "load_checkpoint: truncated config text");
    ck.config = Config::from_resolved_text(text);
    ck.seed = detail::take<std::uint64_t>(in);
    ck.epoch = detail::take<std::int32_t>(in);
    ck.best_monitor = detail::take<double>(in);
    const auto n_params = detail::take<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < n_params; ++i) {
        LoadedCheckpoint::StoredParam p;
        const auto name_len = detail::take<std::uint32_t>(in);
        p.name.resize(name_len);
        in.read(p.name.data(), name_len);
        p.group = static_cast<ParamGroup>(detail::take<std::uint8_t>(in));
        const auto rank = detail::take<std::uint32_t>(in);
        int count = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            p.shape.push_back(static_cast<int>(detail::take<std::uint32_t>(in)));
            count *= p.shape.back();
        }
        p.data.resize(count);
        p.m1.resize(count);
        p.m2.resize(count);
        detail::take_doubles(in, p.data);
        detail::take_doubles(in, p.m1);
        detail::take_doubles(in, p.m2);
        ck.params.push_back(std::move(p));
    }
    ck.step_count = detail::take<std::int64_t>(in);
    ck.rates.backbone = detail::take<double>(in);
    ck.rates.head = detail::take<double>(in);
    ck.rates.weighting = detail::take<double>(in);
    const auto rows = detail::take<std::uint32_t>(in);
    RunConfig rc = run_config_from(ck.config);
    ck.dwa = DwaState(static_cast<int>(rc.enabled_tasks.size()), rc.dwa_temperature);
    for (std::uint32_t r = 0; r < rows; ++r) {
        const auto count = detail::take<std::uint32_t>(in);
        std::vector<double> row(count);
        detail::take_doubles(in, row);
        ck.dwa.history.push_back(std::move(row));
    }
    ck.dwa.temperature = detail::take<double>(in);
    detail::take<double>(in);  // reserved
    return ck;
}

/// Materialized training state restored from a checkpoint file.
struct RestoredRun {
    RunConfig config;
    std::unique_ptr<Model> model;
    UncertaintyState uncertainty;
    DwaState dwa;
    std::uint64_t seed = 0;
    int epoch = 0;
    double best_monitor = 0.0;
};

inline RestoredRun restore_checkpoint(const std::string& path) {
    LoadedCheckpoint ck = load_checkpoint_file(path);
    RestoredRun run;
    run.config = run_config_from(ck.config);
    run.seed = ck.seed;
    run.epoch = ck.epoch;
    run.best_monitor = ck.best_monitor;
    run.dwa = ck.dwa;
    std::mt19937_64 rng(ck.seed);
    const auto specs = task_specs(run.config.classes, run.config.emo_dims, run.config.cultures);
    run.model = std::make_unique<Model>(run.config.architecture, run.config.backbone,
                                        run.config.heads, specs, rng);
    const bool wants_alpha = run.config.strategy == Strategy::rruw ||
                             run.config.strategy == Strategy::druw;
    if (wants_alpha)
        run.uncertainty =
            UncertaintyState(static_cast<int>(run.config.enabled_tasks.size()), run.config.phi);

    std::vector<Parameter> params = run.model->parameters();
    for (const auto& p : run.uncertainty.log_alpha) params.push_back(p);
    check(params.size() == ck.params.size(),
          "load_checkpoint: parameter count does not match the stored architecture/config");
    for (size_t i = 0; i < params.size(); ++i) {
        check(params[i].name == ck.params[i].name &&
                  params[i].tensor.shape() == ck.params[i].shape,
              "load_checkpoint: parameter '" + ck.params[i].name +
                  "' does not match the rebuilt model (architecture/config mismatch)");
        params[i].tensor.data() = ck.params[i].data;
    }
    return run;
}

inline EvalMetrics evaluate_checkpoint(const std::string& path, const Dataset& ds,
                                       const std::string& split) {
    RestoredRun run = restore_checkpoint(path);
    return evaluate_model(*run.model, ds, split, run.config);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

/// Runs one seed to completion. When `out_dir` is non-empty, writes
/// epoch_log.csv and best.ckpt there; the directory must already exist.
inline TrainResult train_run(const RunConfig& cfg, const Dataset& ds, std::uint64_t seed,
                             const std::string& out_dir = "") {
    cfg.validate();
    std::vector<int> train_idx = ds.split_indices("train");
    if (train_idx.empty()) throw ConfigError("train: split 'train' is empty");
    if (ds.split_indices("val").empty()) throw ConfigError("train: split 'val' is empty");

    const auto specs = task_specs(cfg.classes, cfg.emo_dims, cfg.cultures);
    const int k_enabled = static_cast<int>(cfg.enabled_tasks.size());
    std::mt19937_64 rng(seed);
    Model model(cfg.architecture, cfg.backbone, cfg.heads, specs, rng);

    const bool uses_alpha = cfg.strategy == Strategy::rruw || cfg.strategy == Strategy::druw;
    const bool uses_dwa = cfg.strategy == Strategy::dwa || cfg.strategy == Strategy::druw;
    UncertaintyState uncertainty;
    if (uses_alpha) uncertainty = UncertaintyState(k_enabled, cfg.phi);
    DwaState dwa(k_enabled, cfg.dwa_temperature);

    std::vector<Parameter> params = model.parameters();
    for (const auto& p : uncertainty.log_alpha) params.push_back(p);
    AdamW opt(params, {cfg.lr_backbone, cfg.lr_heads, cfg.lr_heads}, cfg.optim);
    PlateauScheduler sched(cfg.plateau_patience, cfg.plateau_factor);

    std::ofstream log;
    if (!out_dir.empty()) {
        log.open(out_dir + "/epoch_log.csv");
        check(log.good(), "train: cannot write epoch log in '" + out_dir + "'");
        log << epoch_log_header() << "\n";
    }

    TrainResult result;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    double best_monitor = -std::numeric_limits<double>::infinity();
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const std::vector<double> lambda_used =
            uses_dwa ? dwa_weights(dwa) : std::vector<double>();
        std::shuffle(train_idx.begin(), train_idx.end(), rng);
        model.set_training(true);
        std::vector<double> loss_sums(k_enabled, 0.0);
        int batches = 0;
        for (const auto& chunk : detail::batch_plan(train_idx, cfg.batch_size)) {
            opt.zero_grad();
            detail::Batch b = detail::make_batch(ds, chunk, cfg.emo_dims);
            HeadOutput out = model.forward(b.waves, &b.labels, true, &rng);
            if (auto* chain = dynamic_cast<ChainHeads*>(&model.heads()))
                check(std::string(chain->last_conditioning_source()) == "truth",
                      "train: chain must condition on truth during training");
            std::vector<Tensor> losses;
            for (int t : cfg.enabled_tasks) {
                Tensor l;
                switch (t) {
                    case 0: l = cross_entropy(out.type_logits, b.labels.type); break;
                    case 1: l = ccc_loss(out.two, b.labels.two); break;
                    case 2: l = ccc_loss(out.high, b.labels.high); break;
                    case 3:
                        l = culture_masked_loss(out.culture, b.labels.high, b.labels.culture,
                                                cfg.cultures);
                        break;
                }
                if (!std::isfinite(l.item()))
                    throw std::runtime_error("train: non-finite loss for task '" +
                                             std::string(detail::task_names()[t]) +
                                             "' at epoch " + std::to_string(epoch));
                losses.push_back(l);
            }
            Tensor total;
            switch (cfg.strategy) {
                case Strategy::uniform: total = uniform_loss(losses); break;
                case Strategy::dwa: total = dwa_loss(losses, dwa); break;
                case Strategy::rruw: total = rruw_loss(losses, uncertainty); break;
                case Strategy::druw: total = druw_loss(losses, uncertainty, dwa); break;
            }
            total.backward();
            opt.step();
            for (int i = 0; i < k_enabled; ++i) loss_sums[i] += losses[i].item();
            ++batches;
        }
        std::vector<double> epoch_means(k_enabled);
        for (int i = 0; i < k_enabled; ++i) epoch_means[i] = loss_sums[i] / batches;
        dwa.push_epoch(epoch_means);

        EvalMetrics vm = evaluate_model(model, ds, "val", cfg);
        const double monitor = vm.monitor(cfg.enabled_tasks);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss.fill(nan);
        rec.val_metric.fill(nan);
        rec.lambda.fill(nan);
        rec.alpha.fill(nan);
        for (int i = 0; i < k_enabled; ++i) {
            const int t = cfg.enabled_tasks[i];
            rec.train_loss[t] = epoch_means[i];
            rec.val_metric[t] = vm.task_metric(t);
            if (uses_dwa) rec.lambda[t] = lambda_used[i];
            if (uses_alpha) rec.alpha[t] = uncertainty.alphas()[i];
        }
        rec.lr_backbone = opt.rates().backbone;
        rec.lr_heads = opt.rates().head;
        rec.monitor = monitor;
        result.records.push_back(rec);
        if (log.is_open()) log << epoch_log_rows(rec, cfg.enabled_tasks);

        if (monitor > best_monitor) {
            best_monitor = monitor;
            result.best_epoch = epoch;
            result.best_val = vm;
            if (!out_dir.empty()) {
                result.checkpoint_path = out_dir + "/best.ckpt";
                save_checkpoint(result.checkpoint_path, params, opt, dwa, to_config(cfg), seed,
                                epoch, best_monitor);
            }
        }
        if (sched.observe(monitor)) opt.rates().scale(cfg.plateau_factor);
        result.final_val = vm;
    }
    result.best_monitor = best_monitor;
    if (!out_dir.empty()) {
        result.final_checkpoint_path = out_dir + "/last.ckpt";
        save_checkpoint(result.final_checkpoint_path, params, opt, dwa, to_config(cfg), seed,
                        cfg.epochs, best_monitor);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Multi-seed orchestration
// ---------------------------------------------------------------------------

struct SeedReport {
    std::uint64_t seed = 0;
    EvalMetrics best;
    double best_monitor = 0.0;
};

struct MultiSeedReport {
    std::vector<SeedReport> runs;
    EvalMetrics best_of;  // per-task maxima over the per-seed bests
};

inline MultiSeedReport multi_seed(const RunConfig& cfg, const Dataset& ds,
                                  const std::string& out_dir = "") {
    cfg.validate();
    MultiSeedReport report;
    for (std::uint64_t seed : cfg.seeds) {
        std::string run_dir;
        if (!out_dir.empty()) {
            run_dir = out_dir + "/seed_" + std::to_string(seed);
            std::filesystem::create_directories(run_dir);
            to_config(cfg).write_resolved(run_dir + "/config.resolved");
        }
        TrainResult r = train_run(cfg, ds, seed, run_dir);
        report.runs.push_back({seed, r.best_val, r.best_monitor});
    }
    auto max_of = [&](auto field) {
        double v = -std::numeric_limits<double>::infinity();
        for (const auto& r : report.runs) v = std::max(v, field(r.best));
        return v;
    };
    report.best_of.type_uar = max_of([](const EvalMetrics& m) { return m.type_uar; });
    report.best_of.two_ccc = max_of([](const EvalMetrics& m) { return m.two_ccc; });
    report.best_of.two_rho = max_of([](const EvalMetrics& m) { return m.two_rho; });
    report.best_of.high_ccc = max_of([](const EvalMetrics& m) { return m.high_ccc; });
    report.best_of.high_rho = max_of([](const EvalMetrics& m) { return m.high_rho; });
    report.best_of.culture_ccc = max_of([](const EvalMetrics& m) { return m.culture_ccc; });
    report.best_of.culture_rho = max_of([](const EvalMetrics& m) { return m.culture_rho; });
    return report;
}

}  // namespace vburst
