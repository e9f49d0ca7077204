#include "nar/config.hpp"

#include <algorithm>
#include <map>

namespace nar {

namespace {

// Line of every object key, by JSON pointer.
using LineMap = std::map<std::string, std::size_t>;

std::vector<std::size_t> key_lines(std::string_view text) {
    std::vector<std::size_t> lines;
    std::size_t line = 1;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c == '\n') ++line;
        if (c != '"') continue;
        const std::size_t start_line = line;
        for (++i; i < text.size() && text[i] != '"'; ++i) {
            if (text[i] == '\\') ++i;
        }
        std::size_t j = i + 1;
        while (j < text.size() && (text[j] == ' ' || text[j] == '\t' || text[j] == '\r' || text[j] == '\n')) ++j;
        if (j < text.size() && text[j] == ':') lines.push_back(start_line);
    }
    return lines;
}

class KeyPaths : public nlohmann::json_sax<json> {
public:
    std::vector<std::string> keys;

    bool null() override { return value(); }
    bool boolean(bool) override { return value(); }
    bool number_integer(number_integer_t) override { return value(); }
    bool number_unsigned(number_unsigned_t) override { return value(); }
    bool number_float(number_float_t, const string_t&) override { return value(); }
    bool string(string_t&) override { return value(); }
    bool binary(binary_t&) override { return value(); }
    bool start_object(std::size_t) override {
        value();
        frames_.push_back({false, 0, {}});
        return true;
    }
    bool key(string_t& k) override {
        frames_.back().key = k;
        keys.push_back(path());
        return true;
    }
    bool end_object() override {
        frames_.pop_back();
        return true;
    }
    bool start_array(std::size_t) override {
        value();
        frames_.push_back({true, 0, {}});
        return true;
    }
    bool end_array() override {
        frames_.pop_back();
        return true;
    }
    bool parse_error(std::size_t, const std::string&, const nlohmann::detail::exception&) override { return false; }

private:
    struct Frame {
        bool array;
        std::size_t index;
        std::string key;
    };

    bool value() {
        if (!frames_.empty() && frames_.back().array) ++frames_.back().index;
        return true;
    }
    std::string path() const {
        std::string p;
        for (const auto& f : frames_) p += "/" + (f.array ? std::to_string(f.index - 1) : f.key);
        return p;
    }

    std::vector<Frame> frames_;
};

LineMap locate_keys(std::string_view text) {
    KeyPaths sax;
    json::sax_parse(text, &sax);
    const auto lines = key_lines(text);
    LineMap map;
    for (std::size_t i = 0; i < sax.keys.size() && i < lines.size(); ++i) map.emplace(sax.keys[i], lines[i]);
    return map;
}

class Section {
public:
    Section(const json& value, std::string pointer, const LineMap& lines)
        : value_(value), pointer_(std::move(pointer)), lines_(lines) {
        if (!value_.is_object()) fail_at(pointer_, "expected an object");
    }

    bool has(const std::string& key) const { return value_.contains(key); }
    void skip(const std::string& key) { used_.push_back(key); }

    Section child(const std::string& key) {
        used_.push_back(key);
        static const json empty = json::object();
        return Section(value_.contains(key) ? value_.at(key) : empty, pointer_ + "/" + key, lines_);
    }

    const json& raw(const std::string& key) {
        used_.push_back(key);
        return value_.at(key);
    }

    std::size_t count(const std::string& key, std::size_t fallback) {
        if (!has(key)) return mark(key, fallback);
        const json& v = raw(key);
        if (!v.is_number_unsigned()) fail(key, "expected a non-negative integer");
        return v.get<std::size_t>();
    }
    std::uint64_t seed(const std::string& key, std::uint64_t fallback) {
        if (!has(key)) return mark(key, fallback);
        const json& v = raw(key);
        if (!v.is_number_unsigned()) fail(key, "expected a non-negative integer");
        return v.get<std::uint64_t>();
    }
    double number(const std::string& key, double fallback) {
        if (!has(key)) return mark(key, fallback);
        const json& v = raw(key);
        if (!v.is_number()) fail(key, "expected a number");
        return v.get<double>();
    }
    bool flag(const std::string& key, bool fallback) {
        if (!has(key)) return mark(key, fallback);
        const json& v = raw(key);
        if (!v.is_boolean()) fail(key, "expected true or false");
        return v.get<bool>();
    }
    std::string text(const std::string& key, const std::string& fallback) {
        if (!has(key)) return mark(key, fallback);
        const json& v = raw(key);
        if (!v.is_string()) fail(key, "expected a string");
        return v.get<std::string>();
    }
    std::optional<std::filesystem::path> path(const std::string& key, const std::filesystem::path& base) {
        // null means unset, as written by canonical()
        if (!has(key) || raw(key).is_null()) return mark(key, std::optional<std::filesystem::path>{});
        const std::filesystem::path p = text(key, "");
        if (p.empty()) fail(key, "path must not be empty");
        return (p.is_absolute() ? p : base / p).lexically_normal();
    }
    template <typename T, typename Fn>
    std::vector<T> list(const std::string& key, std::vector<T> fallback, Fn convert) {
        if (!has(key)) return mark(key, std::move(fallback));
        const json& v = raw(key);
        if (!v.is_array()) fail(key, "expected a list");
        std::vector<T> out;
        for (const auto& item : v) out.push_back(convert(item));
        return out;
    }

    // Wraps a check so that failures point at `key`.
    template <typename Fn>
    void check(const std::string& key, Fn fn) {
        try {
            fn();
        } catch (const ConfigError& e) {
            if (std::string_view(e.what()).starts_with("config")) throw;
            fail(key, e.what());
        }
    }

    void finish() const {
        for (auto it = value_.begin(); it != value_.end(); ++it) {
            if (std::find(used_.begin(), used_.end(), it.key()) == used_.end()) {
                fail_at(pointer_ + "/" + it.key(), "unknown key '" + it.key() + "'");
            }
        }
    }

    [[noreturn]] void fail(const std::string& key, const std::string& message) const {
        fail_at(pointer_ + "/" + key, message);
    }

private:
    template <typename T>
    T mark(const std::string& key, T fallback) {
        used_.push_back(key);
        return fallback;
    }

    [[noreturn]] void fail_at(const std::string& pointer, const std::string& message) const {
        std::string p = pointer;
        while (!p.empty() && !lines_.contains(p)) p.erase(p.rfind('/'));
        const std::string where = p.empty() ? "config" : "config line " + std::to_string(lines_.at(p));
        throw ConfigError(where + ": " + (pointer.empty() ? "/" : pointer) + ": " + message);
    }

    const json& value_;
    std::string pointer_;
    const LineMap& lines_;
    std::vector<std::string> used_;
};

std::size_t as_size(const json& v) {
    if (!v.is_number_unsigned()) throw ConfigError("expected a list of non-negative integers");
    return v.get<std::size_t>();
}

std::uint64_t as_seed(const json& v) {
    if (!v.is_number_unsigned()) throw ConfigError("expected a list of non-negative integers");
    return v.get<std::uint64_t>();
}

GraphFamily parse_family(Section s) {
    GraphFamily f;
    s.check("family", [&] { f.kind = family_from_string(s.text("family", to_string(f.kind))); });
    f.n_min = s.count("n_min", f.n_min);
    f.n_max = s.count("n_max", f.n_max);
    if (!s.has("p") || s.raw("p").is_null()) {
        s.skip("p");
    } else {
        f.p = s.number("p", 0.0);
    }
    f.weight_lo = s.number("weight_lo", f.weight_lo);
    f.weight_hi = s.number("weight_hi", f.weight_hi);
    s.check("family", [&] { f.validate(); });
    s.finish();
    return f;
}

}  // namespace

void RunConfig::sync() {
    training.family = family;
    training.seed = seed;
    transfer.natural.family = family;
}

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    const LineMap lines = locate_keys(text);
    Section top(root, "", lines);
    RunConfig c;
    c.seed = top.seed("seed", c.seed);
    c.out = top.path("out", base_dir);

    c.family = parse_family(top.child("graphs"));

    if (top.has("teacher")) {
        const json& t = top.raw("teacher");
        top.check("teacher", [&] {
            c.teachers.clear();
            if (t.is_string()) {
                c.teachers.push_back(teacher_from_string(t.get<std::string>()));
            } else if (t.is_array() && !t.empty()) {
                for (const auto& item : t) {
                    if (!item.is_string()) throw ConfigError("teacher names must be strings");
                    c.teachers.push_back(teacher_from_string(item.get<std::string>()));
                }
            } else {
                throw ConfigError("expected a teacher name or a non-empty list of names");
            }
        });
    } else {
        top.skip("teacher");
    }

    {
        Section r = top.child("reasoner");
        auto& rc = c.training.reasoner;
        rc.latent_dim = r.count("latent_dim", rc.latent_dim);
        rc.hidden_dim = r.count("hidden_dim", rc.hidden_dim);
        rc.rounds = r.count("rounds", rc.rounds);
        r.check("latent_dim", [&] { rc.validate(); });
        r.finish();
    }
    {
        Section t = top.child("training");
        auto& tc = c.training;
        tc.train_size = t.count("train_size", tc.train_size);
        tc.val_size = t.count("val_size", tc.val_size);
        tc.epochs = t.count("epochs", tc.epochs);
        tc.batch_size = t.count("batch_size", tc.batch_size);
        tc.learning_rate = t.number("learning_rate", tc.learning_rate);
        tc.teacher_forcing = t.number("teacher_forcing", tc.teacher_forcing);
        {
            Section w = t.child("loss_weights");
            tc.weights.dist = w.number("dist", tc.weights.dist);
            tc.weights.pred = w.number("pred", tc.weights.pred);
            tc.weights.reach = w.number("reach", tc.weights.reach);
            w.finish();
        }
        c.train_dataset = t.path("dataset", base_dir);
        c.val_dataset = t.path("val_dataset", base_dir);
        t.finish();
    }
    {
        Section g = top.child("generate");
        c.generate.kind = g.text("kind", c.generate.kind);
        if (c.generate.kind != "graphs" && c.generate.kind != "traces" && c.generate.kind != "natural") {
            g.fail("kind", "expected one of graphs, traces, natural");
        }
        c.generate.count = g.count("count", c.generate.count);
        g.finish();
    }
    {
        Section e = top.child("eval");
        e.check("sizes", [&] { c.eval.sizes = e.list<std::size_t>("sizes", {}, as_size); });
        c.eval.count = e.count("count", c.eval.count);
        for (auto n : c.eval.sizes) {
            if (n < 1) e.fail("sizes", "sizes must be positive");
        }
        if (c.eval.count < 1) e.fail("count", "count must be positive");
        e.finish();
    }
    {
        Section t = top.child("transfer");
        auto& tc = c.transfer;
        c.transfer_checkpoint = t.path("checkpoint", base_dir);
        t.check("sizes", [&] { tc.sizes = t.list<std::size_t>("sizes", tc.sizes, as_size); });
        t.check("seeds", [&] { tc.seeds = t.list<std::uint64_t>("seeds", tc.seeds, as_seed); });
        tc.val_size = t.count("val_size", tc.val_size);
        tc.record_time = t.flag("record_time", tc.record_time);
        {
            Section n = t.child("natural");
            auto& nc = tc.natural;
            nc.d_nat = n.count("d_nat", nc.d_nat);
            nc.informative = n.count("informative", nc.informative);
            nc.noise = n.number("noise", nc.noise);
            n.check("feature_map", [&] { nc.feature_map = feature_map_from_string(n.text("feature_map", "smooth")); });
            nc.distractor_sd = n.number("distractor_sd", nc.distractor_sd);
            nc.map_seed = n.seed("map_seed", nc.map_seed);
            n.finish();
        }
        {
            Section a = t.child("adapters");
            auto& ac = tc.transfer;
            ac.epochs = a.count("epochs", ac.epochs);
            ac.batch_size = a.count("batch_size", ac.batch_size);
            ac.learning_rate = a.number("learning_rate", ac.learning_rate);
            ac.edge_hidden = a.count("edge_hidden", ac.edge_hidden);
            ac.steps = a.count("steps", ac.steps);
            ac.edge_interface = a.flag("edge_interface", ac.edge_interface);
            ac.train_decoder = a.flag("train_decoder", ac.train_decoder);
            a.check("epochs", [&] { ac.validate(); });
            a.finish();
        }
        {
            Section b = t.child("baseline");
            auto& bc = tc.baseline;
            bc.epochs = b.count("epochs", bc.epochs);
            bc.learning_rate = b.number("learning_rate", bc.learning_rate);
            bc.margin = b.number("margin", bc.margin);
            bc.hinge_weight = b.number("hinge_weight", bc.hinge_weight);
            bc.min_weight = b.number("min_weight", bc.min_weight);
            b.check("epochs", [&] { bc.validate(); });
            b.finish();
        }
        c.sync();
        t.check("sizes", [&] { tc.validate(); });
        t.finish();
    }
    top.finish();
    c.sync();
    top.check("training", [&] { c.training.validate(); });
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    return parse_run_config(read_file(path), path.parent_path());
}

json RunConfig::canonical() const {
    json teachers_json = json::array();
    for (auto t : teachers) teachers_json.push_back(to_string(t));
    const auto opt_path = [](const std::optional<std::filesystem::path>& p) {
        return p ? json(p->generic_string()) : json(nullptr);
    };
    const auto& tc = transfer;
    return {
        {"seed", seed},
        {"graphs",
         {{"family", to_string(family.kind)},
          {"n_min", family.n_min},
          {"n_max", family.n_max},
          {"p", family.p ? json(*family.p) : json(nullptr)},
          {"weight_lo", family.weight_lo},
          {"weight_hi", family.weight_hi}}},
        {"teacher", teachers_json},
        {"reasoner",
         {{"latent_dim", training.reasoner.latent_dim},
          {"hidden_dim", training.reasoner.hidden_dim},
          {"rounds", training.reasoner.rounds}}},
        {"training",
         {{"train_size", training.train_size},
          {"val_size", training.val_size},
          {"epochs", training.epochs},
          {"batch_size", training.batch_size},
          {"learning_rate", training.learning_rate},
          {"teacher_forcing", training.teacher_forcing},
          {"loss_weights",
           {{"dist", training.weights.dist}, {"pred", training.weights.pred}, {"reach", training.weights.reach}}},
          {"dataset", opt_path(train_dataset)},
          {"val_dataset", opt_path(val_dataset)}}},
        {"generate", {{"kind", generate.kind}, {"count", generate.count}}},
        {"eval", {{"sizes", eval.sizes}, {"count", eval.count}}},
        {"transfer",
         {{"checkpoint", opt_path(transfer_checkpoint)},
          {"sizes", tc.sizes},
          {"seeds", tc.seeds},
          {"val_size", tc.val_size},
          {"record_time", tc.record_time},
          {"natural",
           {{"d_nat", tc.natural.d_nat},
            {"informative", tc.natural.informative},
            {"noise", tc.natural.noise},
            {"feature_map", to_string(tc.natural.feature_map)},
            {"distractor_sd", tc.natural.distractor_sd},
            {"map_seed", tc.natural.map_seed}}},
          {"adapters",
           {{"epochs", tc.transfer.epochs},
            {"batch_size", tc.transfer.batch_size},
            {"learning_rate", tc.transfer.learning_rate},
            {"edge_hidden", tc.transfer.edge_hidden},
            {"steps", tc.transfer.steps},
            {"edge_interface", tc.transfer.edge_interface},
            {"train_decoder", tc.transfer.train_decoder}}},
          {"baseline",
           {{"epochs", tc.baseline.epochs},
            {"learning_rate", tc.baseline.learning_rate},
            {"margin", tc.baseline.margin},
            {"hinge_weight", tc.baseline.hinge_weight},
            {"min_weight", tc.baseline.min_weight}}}}},
    };
}

}  // namespace nar
