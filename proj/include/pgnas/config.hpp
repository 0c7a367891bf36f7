#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pgnas/data.hpp"
#include "pgnas/errors.hpp"
#include "pgnas/objective.hpp"
#include "pgnas/search.hpp"
#include "pgnas/search_space.hpp"
#include "pgnas/serialize.hpp"
#include "pgnas/supernet.hpp"
#include "pgnas/trainer.hpp"

namespace pgnas {

using json = nlohmann::json;

// Dataset source: a planted-subnetwork generator or files. Generated and
// single-source data is partitioned by the split fractions.
struct DataConfig {
    std::string kind = "planted";  // planted | csv | idx

    // planted
    std::vector<std::array<int, 3>> planted_active;  // (layer, channel, kernel_size) triples
    uint64_t teacher_seed = 1;
    double noise = 0.0;
    int count = 0;
    double teacher_weight_scale = 1.0;

    // csv
    std::string csv_train, csv_val, csv_test;
    bool csv_has_header = false;

    // idx
    std::string idx_train_images, idx_train_labels;
    std::string idx_val_images, idx_val_labels;

    data::SplitFractions split{2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0};
    uint64_t split_seed = 0;
    bool split_seed_given = false;
};

struct ExperimentConfig {
    std::string name = "run";
    uint64_t seed = 0;
    std::string output_dir;  // empty: resolved from PGNAS_OUTPUT_ROOT or cwd
    SearchSpaceSpec space;
    InitConfig init;
    TrainConfig train;
    PriorConfig prior;
    SearchConfig search;
    DataConfig data;
    bool train_seed_given = false;
    bool search_seed_given = false;
    json raw;  // the validated document, canonical source for digests

    uint64_t digest() const { return digest_string(raw.dump()); }

    // Seeds left unset derive from the global seed, one stream per purpose.
    uint64_t net_seed() const { return hash_combine(seed, hash_bytes("net")); }
    uint64_t resolved_train_seed() const {
        return train_seed_given ? train.seed : hash_combine(seed, hash_bytes("train"));
    }
    uint64_t resolved_search_seed() const {
        return search_seed_given ? search.seed : hash_combine(seed, hash_bytes("search"));
    }
    uint64_t resolved_split_seed() const {
        return data.split_seed_given ? data.split_seed : hash_combine(seed, hash_bytes("split"));
    }

    Architecture planted_architecture() const {
        std::vector<uint8_t> bits(static_cast<size_t>(space.total_slices()), 0);
        for (const auto& [l, k, s] : data.planted_active) {
            const int gi = space.group_index(l, s);
            if (k < 0 || k >= space.group_channels(gi)) {
                throw ConfigError("planted slice channel " + std::to_string(k) +
                                  " out of range in layer " + std::to_string(l));
            }
            bits[static_cast<size_t>(space.group_slice_offset(gi) + k)] = 1;
        }
        return Architecture::from_bits(space, bits);
    }
};

namespace config {

// ---- strict schema walking ---------------------------------------------------

class Violations {
  public:
    void add(const std::string& path, const std::string& msg) {
        items_.push_back(path.empty() ? msg : path + ": " + msg);
    }
    void require(bool ok, const std::string& path, const std::string& msg) {
        if (!ok) add(path, msg);
    }
    bool empty() const { return items_.empty(); }
    void raise_if_any() const {
        if (items_.empty()) return;
        std::string all = "configuration invalid (" + std::to_string(items_.size()) + " problems):";
        for (const auto& i : items_) all += "\n  - " + i;
        throw ConfigError(all);
    }

  private:
    std::vector<std::string> items_;
};

inline void check_keys(const json& obj, const std::string& path,
                       const std::set<std::string>& allowed, Violations& v) {
    if (!obj.is_object()) {
        v.add(path, "expected an object");
        return;
    }
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.count(key)) v.add(path, "unknown key '" + key + "'");
    }
}

template <typename T>
bool read_field(const json& obj, const std::string& path, const std::string& key, T& out,
                Violations& v) {
    if (!obj.contains(key)) return false;
    try {
        out = obj.at(key).get<T>();
        return true;
    } catch (const json::exception&) {
        v.add(path + "." + key, "has the wrong type");
        return false;
    }
}

// ---- section parsers ----------------------------------------------------------

inline SearchSpaceSpec parse_space(const json& j, Violations& v) {
    SearchSpaceSpec s;
    check_keys(j, "space", {"input_shape", "num_classes", "layers"}, v);
    read_field(j, "space", "input_shape", s.input_shape, v);
    read_field(j, "space", "num_classes", s.num_classes, v);
    if (j.contains("layers") && j.at("layers").is_array()) {
        int li = 0;
        for (const json& lj : j.at("layers")) {
            const std::string path = "space.layers[" + std::to_string(li) + "]";
            check_keys(lj, path,
                       {"in_channels", "out_channels", "kernel_sizes", "activation",
                        "classifier_head"},
                       v);
            LayerSpec ls;
            read_field(lj, path, "in_channels", ls.in_channels, v);
            read_field(lj, path, "out_channels", ls.out_channels, v);
            read_field(lj, path, "kernel_sizes", ls.kernel_sizes, v);
            read_field(lj, path, "activation", ls.activation, v);
            read_field(lj, path, "classifier_head", ls.classifier_head, v);
            s.layers.push_back(std::move(ls));
            ++li;
        }
    } else {
        v.add("space.layers", "required array missing");
    }
    for (const auto& e : s.validate_errors()) v.add("", e);
    return s;
}

inline InitConfig parse_init(const json& j, Violations& v) {
    InitConfig init;
    check_keys(j, "init", {"p_init", "weight_scale", "per_channel_keep"}, v);
    read_field(j, "init", "p_init", init.p_init, v);
    read_field(j, "init", "weight_scale", init.weight_scale, v);
    read_field(j, "init", "per_channel_keep", init.per_channel_keep, v);
    v.require(init.p_init > 0.0 && init.p_init < 1.0, "init.p_init", "must lie strictly in (0,1)");
    v.require(init.weight_scale > 0.0, "init.weight_scale", "must be positive");
    return init;
}

inline TrainConfig parse_train(const json& j, Violations& v, bool& seed_given) {
    TrainConfig t;
    check_keys(j, "train",
               {"minibatch", "lr", "lr_schedule", "momentum", "max_steps", "tau_schedule",
                "tau_start", "tau_end", "seed", "checkpoint_every", "convergence_window",
                "convergence_tol", "per_example_masks", "use_entropy", "use_adaptive_l2"},
               v);
    read_field(j, "train", "minibatch", t.minibatch, v);
    read_field(j, "train", "lr", t.lr, v);
    read_field(j, "train", "lr_schedule", t.lr_schedule, v);
    read_field(j, "train", "momentum", t.momentum, v);
    read_field(j, "train", "max_steps", t.max_steps, v);
    read_field(j, "train", "tau_schedule", t.tau_schedule, v);
    read_field(j, "train", "tau_start", t.tau_start, v);
    read_field(j, "train", "tau_end", t.tau_end, v);
    seed_given = read_field(j, "train", "seed", t.seed, v);
    read_field(j, "train", "checkpoint_every", t.checkpoint_every, v);
    read_field(j, "train", "convergence_window", t.convergence_window, v);
    read_field(j, "train", "convergence_tol", t.convergence_tol, v);
    read_field(j, "train", "per_example_masks", t.per_example_masks, v);
    read_field(j, "train", "use_entropy", t.use_entropy, v);
    read_field(j, "train", "use_adaptive_l2", t.use_adaptive_l2, v);
    try {
        t.validate();
    } catch (const ConfigError& e) {
        v.add("train", e.what());
    }
    return t;
}

inline PriorConfig parse_prior(const json& j, Violations& v) {
    PriorConfig p;
    check_keys(j, "prior",
               {"length_scale", "length_scale_overrides", "dataset_size", "entropy_variant"}, v);
    read_field(j, "prior", "length_scale", p.length_scale, v);
    if (j.contains("length_scale_overrides")) {
        const json& o = j.at("length_scale_overrides");
        if (!o.is_object()) {
            v.add("prior.length_scale_overrides", "expected an object of group -> scale");
        } else {
            for (const auto& [key, value] : o.items()) {
                if (!value.is_number()) {
                    v.add("prior.length_scale_overrides." + key, "must be a number");
                } else {
                    p.length_scale_overrides[key] = value.get<double>();
                }
            }
        }
    }
    int64_t n = 0;
    if (read_field(j, "prior", "dataset_size", n, v)) p.dataset_size = n;
    std::string variant = "as_printed";
    read_field(j, "prior", "entropy_variant", variant, v);
    if (variant == "as_printed") {
        p.entropy = PriorConfig::EntropyVariant::as_printed;
    } else if (variant == "full_bernoulli") {
        p.entropy = PriorConfig::EntropyVariant::full_bernoulli;
    } else {
        v.add("prior.entropy_variant", "must be 'as_printed' or 'full_bernoulli'");
    }
    v.require(p.length_scale > 0.0, "prior.length_scale", "must be positive");
    return p;
}

inline SearchConfig parse_search(const json& j, Violations& v, bool& seed_given) {
    SearchConfig s;
    check_keys(j, "search", {"num_candidates", "seed", "reject_empty", "max_retries"}, v);
    read_field(j, "search", "num_candidates", s.num_candidates, v);
    seed_given = read_field(j, "search", "seed", s.seed, v);
    read_field(j, "search", "reject_empty", s.reject_empty, v);
    read_field(j, "search", "max_retries", s.max_retries, v);
    try {
        s.validate();
    } catch (const ConfigError& e) {
        v.add("search", e.what());
    }
    return s;
}

inline DataConfig parse_data(const json& j, Violations& v) {
    DataConfig d;
    check_keys(j, "data",
               {"kind", "planted", "csv", "idx", "split", "split_seed"}, v);
    read_field(j, "data", "kind", d.kind, v);
    if (d.kind != "planted" && d.kind != "csv" && d.kind != "idx") {
        v.add("data.kind", "must be 'planted', 'csv' or 'idx'");
    }
    if (j.contains("planted")) {
        const json& p = j.at("planted");
        check_keys(p, "data.planted",
                   {"active", "teacher_seed", "noise", "count", "teacher_weight_scale"}, v);
        if (p.contains("active")) {
            try {
                d.planted_active = p.at("active").get<std::vector<std::array<int, 3>>>();
            } catch (const json::exception&) {
                v.add("data.planted.active", "expected an array of [layer, channel, kernel_size]");
            }
        }
        read_field(p, "data.planted", "teacher_seed", d.teacher_seed, v);
        read_field(p, "data.planted", "noise", d.noise, v);
        read_field(p, "data.planted", "count", d.count, v);
        read_field(p, "data.planted", "teacher_weight_scale", d.teacher_weight_scale, v);
    } else if (d.kind == "planted") {
        v.add("data.planted", "required section missing for kind 'planted'");
    }
    if (j.contains("csv")) {
        const json& c = j.at("csv");
        check_keys(c, "data.csv", {"train", "val", "test", "has_header"}, v);
        read_field(c, "data.csv", "train", d.csv_train, v);
        read_field(c, "data.csv", "val", d.csv_val, v);
        read_field(c, "data.csv", "test", d.csv_test, v);
        read_field(c, "data.csv", "has_header", d.csv_has_header, v);
    } else if (d.kind == "csv") {
        v.add("data.csv", "required section missing for kind 'csv'");
    }
    if (j.contains("idx")) {
        const json& c = j.at("idx");
        check_keys(c, "data.idx", {"train_images", "train_labels", "val_images", "val_labels"}, v);
        read_field(c, "data.idx", "train_images", d.idx_train_images, v);
        read_field(c, "data.idx", "train_labels", d.idx_train_labels, v);
        read_field(c, "data.idx", "val_images", d.idx_val_images, v);
        read_field(c, "data.idx", "val_labels", d.idx_val_labels, v);
    } else if (d.kind == "idx") {
        v.add("data.idx", "required section missing for kind 'idx'");
    }
    if (j.contains("split")) {
        const json& sp = j.at("split");
        check_keys(sp, "data.split", {"train", "val", "test"}, v);
        read_field(sp, "data.split", "train", d.split.train, v);
        read_field(sp, "data.split", "val", d.split.val, v);
        read_field(sp, "data.split", "test", d.split.test, v);
    }
    d.split_seed_given = read_field(j, "data", "split_seed", d.split_seed, v);
    return d;
}

// ---- whole-document parse -----------------------------------------------------

inline ExperimentConfig from_json(const json& doc) {
    Violations v;
    ExperimentConfig cfg;
    check_keys(doc, "",
               {"name", "seed", "output_dir", "space", "init", "train", "prior", "search", "data"},
               v);
    if (!doc.is_object()) v.raise_if_any();
    read_field(doc, "", "name", cfg.name, v);
    v.require(doc.contains("seed"), "seed", "required global seed missing");
    read_field(doc, "", "seed", cfg.seed, v);
    read_field(doc, "", "output_dir", cfg.output_dir, v);

    if (doc.contains("space")) {
        cfg.space = parse_space(doc.at("space"), v);
    } else {
        v.add("space", "required section missing");
    }
    cfg.init = doc.contains("init") ? parse_init(doc.at("init"), v) : InitConfig{};
    cfg.train = doc.contains("train") ? parse_train(doc.at("train"), v, cfg.train_seed_given)
                                      : TrainConfig{};
    cfg.prior = doc.contains("prior") ? parse_prior(doc.at("prior"), v) : PriorConfig{};
    cfg.search = doc.contains("search") ? parse_search(doc.at("search"), v, cfg.search_seed_given)
                                        : SearchConfig{};
    if (doc.contains("data")) {
        cfg.data = parse_data(doc.at("data"), v);
    } else {
        v.add("data", "required section missing");
    }
    if (v.empty() && cfg.data.kind == "planted") {
        try {
            Architecture planted = cfg.planted_architecture();
            if (!planted.feeds_head(cfg.space)) {
                v.add("data.planted.active", "planted architecture does not reach the head");
            }
        } catch (const ConfigError& e) {
            v.add("data.planted.active", e.what());
        }
        v.require(cfg.data.count >= 1, "data.planted.count", "must be >= 1");
        v.require(cfg.data.noise >= 0.0 && cfg.data.noise < 1.0, "data.planted.noise",
                  "must lie in [0,1)");
    }
    v.raise_if_any();
    cfg.raw = doc;
    return cfg;
}

// Dotted-path override: "train.lr=0.05" or "space.layers[1].out_channels=4".
// Values parse as JSON first and fall back to plain strings.
inline void apply_override(json& doc, const std::string& spec) {
    const size_t eq = spec.find('=');
    if (eq == std::string::npos) {
        throw ConfigError("override '" + spec + "' must look like path.to.key=value");
    }
    const std::string path = spec.substr(0, eq);
    const std::string value_text = spec.substr(eq + 1);
    json value;
    try {
        value = json::parse(value_text);
    } catch (const json::exception&) {
        value = value_text;  // unquoted string
    }
    json* node = &doc;
    size_t pos = 0;
    while (pos < path.size()) {
        size_t dot = path.find('.', pos);
        std::string part = path.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
        pos = dot == std::string::npos ? path.size() : dot + 1;
        int index = -1;
        const size_t bracket = part.find('[');
        if (bracket != std::string::npos) {
            if (part.back() != ']') throw ConfigError("override path '" + path + "' has a bad index");
            index = std::stoi(part.substr(bracket + 1, part.size() - bracket - 2));
            part = part.substr(0, bracket);
        }
        const bool last = pos >= path.size();
        json* next = nullptr;
        if (!node->is_object()) throw ConfigError("override path '" + path + "' walks into a non-object");
        if (index >= 0) {
            json& arr = (*node)[part];
            if (!arr.is_array() || index >= static_cast<int>(arr.size())) {
                throw ConfigError("override path '" + path + "' indexes past the end");
            }
            next = &arr[static_cast<size_t>(index)];
        } else {
            next = &(*node)[part];
        }
        if (last) {
            *next = value;
            return;
        }
        node = next;
    }
}

inline ExperimentConfig load(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides = {}) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config '" + path.string() + "'");
    json doc;
    try {
        doc = json::parse(is);
    } catch (const json::exception& e) {
        throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    for (const std::string& o : overrides) apply_override(doc, o);
    return from_json(doc);
}

// ---- dataset assembly ----------------------------------------------------------

struct DataBundle {
    Dataset train, val, test;
};

inline DataBundle assemble_data(const ExperimentConfig& cfg) {
    DataBundle b;
    if (cfg.data.kind == "planted") {
        data::PlantedSpec ps;
        ps.space = cfg.space;
        ps.planted = cfg.planted_architecture();
        ps.teacher_seed = cfg.data.teacher_seed;
        ps.noise = cfg.data.noise;
        ps.count = cfg.data.count;
        ps.teacher_weight_scale = cfg.data.teacher_weight_scale;
        Dataset all = data::generate_planted(ps);
        auto parts = data::split(all, cfg.data.split, cfg.resolved_split_seed());
        b.train = std::move(parts[0]);
        b.val = std::move(parts[1]);
        b.test = std::move(parts[2]);
    } else if (cfg.data.kind == "csv") {
        data::CsvSchema schema;
        schema.has_header = cfg.data.csv_has_header;
        schema.input_shape = cfg.space.input_shape;
        b.train = data::load_csv(cfg.data.csv_train, schema);
        b.val = data::load_csv(cfg.data.csv_val, schema);
        if (!cfg.data.csv_test.empty()) b.test = data::load_csv(cfg.data.csv_test, schema);
        b.train.split_tag = "train";
        b.val.split_tag = "val";
        b.test.split_tag = "test";
    } else {
        b.train = data::load_idx(cfg.data.idx_train_images, cfg.data.idx_train_labels);
        b.val = data::load_idx(cfg.data.idx_val_images, cfg.data.idx_val_labels);
        b.train.split_tag = "train";
        b.val.split_tag = "val";
    }
    b.train.validate(cfg.space.num_classes);
    b.val.validate(cfg.space.num_classes);
    if (b.test.size() > 0) b.test.validate(cfg.space.num_classes);
    if (b.train.size() == 0) throw DataError("training split is empty");
    if (b.val.size() == 0) throw DataError("validation split is empty");
    return b;
}

}  // namespace config

}  // namespace pgnas
