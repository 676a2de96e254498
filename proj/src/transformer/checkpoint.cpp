#include "codesum/transformer/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "codesum/errors.hpp"

namespace codesum {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

constexpr char kMagic[8] = {'C', 'S', 'U', 'M', 'C', 'K', 'P', 'T'};

class Writer {
  public:
    template <typename T>
    void put(T v) {
        const auto* p = reinterpret_cast<const char*>(&v);
        bytes_.append(p, sizeof v);
    }
    void put_string(const std::string& s) {
        put(static_cast<std::uint32_t>(s.size()));
        bytes_ += s;
    }
    void put_floats(std::span<const double> values) {
        for (double v : values) {
            put(static_cast<float>(v));
        }
    }
    std::string& bytes() { return bytes_; }

  private:
    std::string bytes_;
};

class Reader {
  public:
    Reader(const std::string& bytes, std::string path) : bytes_(bytes), path_(std::move(path)) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof v);
        pos_ += sizeof v;
        return v;
    }
    std::string get_string() {
        const auto n = get<std::uint32_t>();
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    [[noreturn]] void fail(const std::string& what) const { throw FormatError(path_ + ": " + what); }

  private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) {
            fail("truncated checkpoint");
        }
    }
    const std::string& bytes_;
    std::string path_;
    std::size_t pos_ = 0;
};

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

struct Record {
    Shape shape;
    std::vector<float> values;
};

struct Contents {
    ModelConfig config;
    std::uint64_t config_hash = 0;
    nlohmann::json metadata;
    std::map<std::string, Record> records;
};

Contents read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot read checkpoint " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string bytes = buffer.str();
    Reader r(bytes, path.string());
    if (bytes.size() < sizeof kMagic + sizeof(std::uint64_t) || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
        r.fail("not a checkpoint file");
    }
    std::uint64_t stored_sum = 0;
    std::memcpy(&stored_sum, bytes.data() + bytes.size() - sizeof stored_sum, sizeof stored_sum);
    if (fnv1a(std::string_view(bytes).substr(0, bytes.size() - sizeof stored_sum)) != stored_sum) {
        r.fail("checksum mismatch, file is corrupt");
    }
    for (std::size_t i = 0; i < sizeof kMagic; ++i) {
        r.get<char>();
    }
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
        r.fail("checkpoint version " + std::to_string(version) + " is not supported (expected " +
               std::to_string(kCheckpointVersion) + ")");
    }
    Contents c;
    try {
        c.config = nlohmann::json::parse(r.get_string()).get<ModelConfig>();
        c.config_hash = r.get<std::uint64_t>();
        c.metadata = nlohmann::json::parse(r.get_string());
    } catch (const nlohmann::json::exception& e) {
        r.fail(std::string("bad header: ") + e.what());
    }
    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.get_string();
        Record rec;
        const auto rank = r.get<std::uint32_t>();
        for (std::uint32_t a = 0; a < rank; ++a) {
            rec.shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
        }
        rec.values.resize(numel(rec.shape));
        for (float& v : rec.values) {
            v = r.get<float>();
        }
        c.records.emplace(name, std::move(rec));
    }
    return c;
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model, const nlohmann::json& metadata) {
    if (model.params().precision() != Precision::standard32) {
        throw ContractError("only standard32 models can be checkpointed");
    }
    Writer w;
    for (char c : kMagic) {
        w.put(c);
    }
    w.put(kCheckpointVersion);
    w.put_string(nlohmann::json(model.config()).dump());
    w.put(config_hash(model.config()));
    nlohmann::json meta = metadata.is_null() ? nlohmann::json::object() : metadata;
    nlohmann::json steps = nlohmann::json::object();
    for (const Parameter& p : model.params().all()) {
        steps[p.name] = p.step_count;
    }
    meta["adam_steps"] = steps;
    w.put_string(meta.dump());
    w.put(static_cast<std::uint32_t>(3 * model.params().all().size()));
    auto record = [&w](const std::string& name, const Shape& shape, std::span<const double> values) {
        w.put_string(name);
        w.put(static_cast<std::uint32_t>(shape.size()));
        for (std::size_t d : shape) {
            w.put(static_cast<std::uint64_t>(d));
        }
        w.put_floats(values);
    };
    for (const Parameter& p : model.params().all()) {
        record(p.name, p.value.shape(), p.value.data());
        record(p.name + "@adam_m", p.value.shape(), p.adam_m);
        record(p.name + "@adam_v", p.value.shape(), p.adam_v);
    }
    w.put(fnv1a(w.bytes()));

    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) {
            throw FormatError("cannot write checkpoint " + tmp.string());
        }
        out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
        if (!out) {
            throw FormatError("failed writing checkpoint " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

ModelConfig read_checkpoint_config(const std::filesystem::path& path) { return read_file(path).config; }

nlohmann::json load_checkpoint(const std::filesystem::path& path, Model& model) {
    Contents c = read_file(path);
    const std::uint64_t expected = config_hash(model.config());
    if (c.config_hash != expected || config_hash(c.config) != c.config_hash) {
        std::ostringstream msg;
        msg << path.string() << ": checkpoint config hash " << std::hex << c.config_hash
            << " does not match model config hash " << expected;
        throw ConfigError(msg.str());
    }
    auto take = [&](const std::string& name, const Shape& shape) -> const Record& {
        const auto it = c.records.find(name);
        if (it == c.records.end()) {
            throw FormatError(path.string() + ": missing record " + name);
        }
        if (it->second.shape != shape) {
            throw FormatError(path.string() + ": record " + name + " has shape " + shape_to_string(it->second.shape) +
                              ", expected " + shape_to_string(shape));
        }
        return it->second;
    };
    const nlohmann::json& steps = c.metadata.at("adam_steps");
    for (Parameter& p : model.params().all()) {
        const Record& value = take(p.name, p.value.shape());
        const Record& m = take(p.name + "@adam_m", p.value.shape());
        const Record& v = take(p.name + "@adam_v", p.value.shape());
        auto data = p.value.mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            data[i] = value.values[i];
            p.adam_m[i] = m.values[i];
            p.adam_v[i] = v.values[i];
        }
        p.step_count = steps.at(p.name).get<std::int64_t>();
        p.value.clear_grad();
    }
    c.metadata.erase("adam_steps");
    return c.metadata;
}

} // namespace codesum
