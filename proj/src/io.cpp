#include "nar/io.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace nar {

static_assert(std::endian::native == std::endian::little, "checkpoint encoding assumes a little-endian host");

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 computation failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string() + " for reading");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    if (in.bad()) throw IoError("failed reading " + path.string());
    return buffer.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    if (!out) throw IoError("failed writing " + path.string());
}

json to_json(const AbstractInput& input) {
    json edges = json::array();
    for (const auto& e : input.graph.edges) edges.push_back({e.src, e.dst});
    return {{"n", input.graph.n}, {"edges", edges}, {"weights", input.graph.weights}, {"source", input.source}};
}

namespace {

template <typename T>
T field(const json& record, const char* name) {
    if (!record.contains(name)) throw FormatError(std::string("record is missing field '") + name + "'");
    try {
        return record.at(name).get<T>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("field '") + name + "': " + e.what());
    }
}

}  // namespace

AbstractInput input_from_json(const json& record) {
    const auto n = field<std::size_t>(record, "n");
    const auto pairs = field<std::vector<std::array<std::uint32_t, 2>>>(record, "edges");
    auto weights = field<std::vector<double>>(record, "weights");
    if (pairs.size() != weights.size()) throw FormatError("edges and weights differ in length");
    std::vector<Edge> edges;
    for (const auto& p : pairs) edges.push_back({p[0], p[1]});
    AbstractInput input;
    input.source = field<std::uint32_t>(record, "source");
    try {
        input.graph = make_graph(n, std::move(edges), std::move(weights));
    } catch (const DimensionError& e) {
        throw FormatError(std::string("invalid graph: ") + e.what());
    }
    if (input.source >= n) throw FormatError("source out of range");
    return input;
}

json to_json(const HintStep& step) {
    return {{"dist", step.dist}, {"reached", step.reached}, {"pred", step.pred}, {"reach", step.reach}};
}

HintStep hint_from_json(const json& record, std::size_t n) {
    HintStep h;
    h.dist = field<std::vector<double>>(record, "dist");
    h.reached = field<std::vector<std::uint8_t>>(record, "reached");
    h.pred = field<std::vector<std::uint32_t>>(record, "pred");
    h.reach = field<std::vector<std::uint8_t>>(record, "reach");
    if (h.dist.size() != n || h.reached.size() != n || h.pred.size() != n || h.reach.size() != n) {
        throw FormatError("hint arrays must have length n=" + std::to_string(n));
    }
    return h;
}

json to_json(const Trace& trace) {
    json steps = json::array();
    for (const auto& s : trace.steps) steps.push_back(to_json(s));
    return {{"teacher", to_string(trace.teacher)}, {"input", to_json(trace.input)}, {"steps", steps}};
}

Trace trace_from_json(const json& record) {
    Trace t;
    try {
        t.teacher = teacher_from_string(field<std::string>(record, "teacher"));
    } catch (const ConfigError& e) {
        throw FormatError(e.what());
    }
    if (!record.contains("input")) throw FormatError("record is missing field 'input'");
    t.input = input_from_json(record.at("input"));
    const auto steps = field<std::vector<json>>(record, "steps");
    if (steps.empty()) throw FormatError("trace has no steps");
    for (const auto& s : steps) t.steps.push_back(hint_from_json(s, t.input.n()));
    return t;
}

std::string to_jsonl(const std::vector<json>& records, const std::string& kind) {
    std::string out;
    for (const auto& r : records) {
        json tagged = r;
        tagged["kind"] = kind;
        tagged["version"] = kRecordVersion;
        out += tagged.dump();
        out.push_back('\n');
    }
    return out;
}

std::vector<json> parse_jsonl(std::string_view text, const std::string& kind) {
    std::vector<json> records;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        const std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        const std::string where = "line " + std::to_string(line_no) + ": ";
        json record;
        try {
            record = json::parse(line);
        } catch (const json::parse_error& e) {
            throw FormatError(where + e.what());
        }
        if (!record.is_object()) throw FormatError(where + "expected a JSON object");
        if (record.value("version", -1) != kRecordVersion) {
            throw FormatError(where + "unsupported record version (expected " + std::to_string(kRecordVersion) + ")");
        }
        if (record.value("kind", std::string()) != kind) throw FormatError(where + "expected a '" + kind + "' record");
        records.push_back(std::move(record));
    }
    return records;
}

namespace {

template <typename T, typename Fn>
std::vector<T> load_records(const std::filesystem::path& path, const std::string& kind, Fn convert) {
    const auto records = parse_jsonl(read_file(path), kind);
    std::vector<T> out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        try {
            out.push_back(convert(records[i]));
        } catch (const FormatError& e) {
            throw FormatError(path.string() + " record " + std::to_string(i + 1) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace

void save_inputs(const std::filesystem::path& path, const std::vector<AbstractInput>& inputs) {
    std::vector<json> records;
    for (const auto& in : inputs) records.push_back(to_json(in));
    write_file(path, to_jsonl(records, "graph"));
}

std::vector<AbstractInput> load_inputs(const std::filesystem::path& path) {
    return load_records<AbstractInput>(path, "graph", input_from_json);
}

void save_traces(const std::filesystem::path& path, const std::vector<Trace>& traces) {
    std::vector<json> records;
    for (const auto& t : traces) records.push_back(to_json(t));
    write_file(path, to_jsonl(records, "trace"));
}

std::vector<Trace> load_traces(const std::filesystem::path& path) {
    return load_records<Trace>(path, "trace", trace_from_json);
}

namespace {

class Writer {
public:
    template <typename T>
    void put(T value) {
        static_assert(std::is_trivially_copyable_v<T>);
        const auto* p = reinterpret_cast<const char*>(&value);
        bytes.append(p, sizeof(T));
    }
    void put_string(const std::string& s) {
        put(static_cast<std::uint32_t>(s.size()));
        bytes.append(s);
    }
    void put_params(const ParamSet& params) {
        put(static_cast<std::uint32_t>(params.size()));
        for (const auto& p : params) {
            put_string(p.name);
            put(static_cast<std::uint32_t>(p.value.rank()));
            for (auto d : p.value.shape()) put(static_cast<std::uint64_t>(d));
            for (double v : p.value.values()) put(v);
        }
    }

    std::string bytes;
};

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T value;
        std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }
    std::string get_string() {
        const auto len = get<std::uint32_t>();
        need(len);
        std::string s(bytes_.substr(pos_, len));
        pos_ += len;
        return s;
    }
    ParamSet get_params() {
        ParamSet params;
        const auto count = get<std::uint32_t>();
        for (std::uint32_t i = 0; i < count; ++i) {
            std::string name = get_string();
            const auto rank = get<std::uint32_t>();
            if (rank == 0 || rank > 8) throw CheckpointError("tensor '" + name + "' has invalid rank");
            Shape shape;
            std::size_t size = 1;
            for (std::uint32_t r = 0; r < rank; ++r) {
                shape.push_back(static_cast<std::size_t>(get<std::uint64_t>()));
                size *= shape.back();
            }
            need(size * sizeof(double));
            std::vector<double> values(size);
            std::memcpy(values.data(), bytes_.data() + pos_, size * sizeof(double));
            pos_ += size * sizeof(double);
            try {
                params.add(std::move(name), Tensor(std::move(shape), std::move(values)));
            } catch (const Error& e) {
                throw CheckpointError(e.what());
            }
        }
        return params;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t count) const {
        if (count > bytes_.size() - pos_) throw CheckpointError("checkpoint is truncated");
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

constexpr char kMagic[8] = {'N', 'A', 'R', 'C', 'K', 'P', 'T', '\0'};
constexpr std::size_t kDigestBytes = 64;

}  // namespace

std::string serialize_params(const ParamSet& params) {
    Writer w;
    w.put_params(params);
    return std::move(w.bytes);
}

std::string params_digest(const ParamSet& params) { return sha256_hex(serialize_params(params)); }

Checkpoint Checkpoint::of(const ReasonerParams& params) {
    return {params.config, params.processor, {{params.teacher, params.encoder, params.decoder}}};
}

Checkpoint Checkpoint::of(const MultiTaskParams& params) {
    Checkpoint c{params.config, params.processor, {}};
    for (const auto& [teacher, heads] : params.heads) c.tasks.push_back({teacher, heads.first, heads.second});
    return c;
}

ReasonerParams Checkpoint::for_task(Teacher teacher) const {
    for (const auto& t : tasks) {
        if (t.teacher == teacher) return {config, teacher, t.encoder, processor, t.decoder};
    }
    throw CheckpointError("checkpoint has no heads for teacher " + to_string(teacher));
}

ReasonerParams Checkpoint::single() const {
    if (tasks.size() != 1) {
        throw CheckpointError("checkpoint holds " + std::to_string(tasks.size()) + " tasks; name the teacher");
    }
    return for_task(tasks.front().teacher);
}

std::string encode_checkpoint(const Checkpoint& c) {
    Writer w;
    w.bytes.append(kMagic, sizeof(kMagic));
    w.put(kCheckpointVersion);
    w.put(static_cast<std::uint64_t>(c.config.latent_dim));
    w.put(static_cast<std::uint64_t>(c.config.hidden_dim));
    w.put(static_cast<std::uint64_t>(c.config.rounds));
    w.put(static_cast<std::uint8_t>(c.config.teacher_forcing ? 1 : 0));
    w.put(static_cast<std::uint32_t>(c.tasks.size()));
    for (const auto& t : c.tasks) w.put_string(to_string(t.teacher));
    w.put_params(c.processor);
    for (const auto& t : c.tasks) {
        w.put_params(t.encoder);
        w.put_params(t.decoder);
    }
    // Trailing digest of everything before it guards against corruption.
    w.bytes += sha256_hex(w.bytes);
    return std::move(w.bytes);
}

Checkpoint decode_checkpoint(std::string_view bytes) {
    if (bytes.size() < sizeof(kMagic) + kDigestBytes || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw CheckpointError("not a checkpoint file");
    }
    const auto body = bytes.substr(0, bytes.size() - kDigestBytes);
    if (sha256_hex(body) != bytes.substr(bytes.size() - kDigestBytes)) {
        throw CheckpointError("checkpoint digest mismatch (file is corrupted)");
    }
    Reader r(body.substr(sizeof(kMagic)));
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint c;
    c.config.latent_dim = static_cast<std::size_t>(r.get<std::uint64_t>());
    c.config.hidden_dim = static_cast<std::size_t>(r.get<std::uint64_t>());
    c.config.rounds = static_cast<std::size_t>(r.get<std::uint64_t>());
    c.config.teacher_forcing = r.get<std::uint8_t>() != 0;
    const auto tasks = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < tasks; ++i) {
        TaskHeads t;
        try {
            t.teacher = teacher_from_string(r.get_string());
        } catch (const ConfigError& e) {
            throw CheckpointError(e.what());
        }
        c.tasks.push_back(std::move(t));
    }
    c.processor = r.get_params();
    for (auto& t : c.tasks) {
        t.encoder = r.get_params();
        t.decoder = r.get_params();
    }
    if (!r.done()) throw CheckpointError("trailing bytes in checkpoint");
    // Parameter shapes must match what the stored config would build.
    Rng probe(0);
    const auto check = [&](const ParamSet& want, const ParamSet& got, const std::string& part) {
        if (want.size() != got.size()) throw CheckpointError(part + " has an unexpected parameter count");
        for (std::size_t i = 0; i < want.size(); ++i) {
            if (want[i].name != got[i].name || want[i].value.shape() != got[i].value.shape()) {
                throw CheckpointError(part + " parameter '" + got[i].name + "' does not match the stored config");
            }
        }
    };
    try {
        c.config.validate();
    } catch (const ConfigError& e) {
        throw CheckpointError(e.what());
    }
    check(init_processor(c.config, probe), c.processor, "processor");
    for (const auto& t : c.tasks) {
        check(init_encoder(c.config, probe), t.encoder, to_string(t.teacher) + " encoder");
        check(init_decoder(c.config, probe), t.decoder, to_string(t.teacher) + " decoder");
    }
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    write_file(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

void require_compatible(const ReasonerConfig& expected, const ReasonerConfig& found) {
    std::string diff;
    const auto cmp = [&](const char* name, std::size_t a, std::size_t b) {
        if (a != b) diff += std::string(diff.empty() ? "" : ", ") + name + " (expected " + std::to_string(a) +
                            ", checkpoint has " + std::to_string(b) + ")";
    };
    cmp("latent_dim", expected.latent_dim, found.latent_dim);
    cmp("hidden_dim", expected.hidden_dim, found.hidden_dim);
    cmp("rounds", expected.rounds, found.rounds);
    if (!diff.empty()) throw CheckpointError("checkpoint config mismatch: " + diff);
}

json Manifest::to_json() const {
    json outs = json::array();
    for (const auto& o : outputs) outs.push_back({{"path", o.path}, {"sha256", o.sha256}});
    return {{"command", command}, {"config_hash", config_hash}, {"seed", seed}, {"outputs", outs}, {"records", records}};
}

ManifestEntry manifest_entry(const std::filesystem::path& root, const std::filesystem::path& file) {
    return {std::filesystem::relative(file, root).generic_string(), sha256_hex(read_file(file))};
}

json metrics_to_json(const Metrics& m) {
    return {{"graphs", m.graphs},
            {"nodes", m.nodes},
            {"pred_accuracy", m.pred_accuracy},
            {"reached_accuracy", m.reached_accuracy},
            {"reach_accuracy", m.reach_accuracy},
            {"dist_mae", m.dist_mae},
            {"exact_match", m.exact_match},
            {"postcondition_rate", m.postcondition_rate},
            {"chance_pred_accuracy", m.chance_pred_accuracy},
            {"loss_curve", m.loss_curve}};
}

}  // namespace nar
