#include "cogan/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cogan/errors.hpp"

namespace cogan {

namespace {

constexpr char kMagic[4] = {'C', 'O', 'G', '1'};

template <typename T>
void write_le(std::ostream& out, T v) {
    unsigned char buf[sizeof(T)];
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::filesystem::path& path) {
    unsigned char buf[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(buf), sizeof(T)))
        throw IoError("truncated tensor file: " + path.string());
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    T v;
    std::memcpy(&v, &bits, sizeof(T));
    return v;
}

}  // namespace

void save_tensor_file(const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(kMagic, 4);
    write_le<std::uint64_t>(out, tensors.size());
    for (const auto& [name, t] : tensors) {
        write_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        out.put(0);  // dtype tag: f64
        write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t->shape().size()));
        for (std::size_t d : t->shape()) write_le<std::uint64_t>(out, d);
        for (std::size_t j = 0; j < t->size(); ++j) write_le<double>(out, (*t)[j]);
    }
    if (!out) throw IoError("write failed: " + path.string());
}

std::map<std::string, Tensor> load_tensor_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("bad magic in tensor file: " + path.string());
    auto count = read_le<std::uint64_t>(in, path);
    std::map<std::string, Tensor> out;
    for (std::uint64_t i = 0; i < count; ++i) {
        auto name_len = read_le<std::uint32_t>(in, path);
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) throw IoError("truncated tensor file: " + path.string());
        int tag = in.get();
        if (tag != 0) throw IoError("unsupported dtype tag in " + path.string());
        auto rank = read_le<std::uint32_t>(in, path);
        Shape shape(rank);
        for (auto& d : shape) d = static_cast<std::size_t>(read_le<std::uint64_t>(in, path));
        Tensor t(shape);
        for (std::size_t j = 0; j < t.size(); ++j) t[j] = read_le<double>(in, path);
        out.emplace(std::move(name), std::move(t));
    }
    return out;
}

void save_sidecar(const std::filesystem::path& path, const std::map<std::string, std::string>& meta) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    for (const auto& [k, v] : meta) out << k << '=' << v << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

std::map<std::string, std::string> load_sidecar(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path.string());
    std::map<std::string, std::string> meta;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw IoError("malformed sidecar line in " + path.string() + ": " + line);
        meta[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return meta;
}

namespace {

void collect_net(const std::string& prefix, const Network& net,
                 std::vector<std::pair<std::string, const Tensor*>>& out) {
    for (std::size_t i = 0; i < net.size(); ++i) {
        // buffers() is non-const (some layers build the handle list lazily).
        Layer& layer = const_cast<Network&>(net).layer(i);
        for (const Param& p : layer.params())
            out.emplace_back(prefix + "." + std::to_string(i) + "." + p.name, p.value.get());
        for (const Buffer& b : layer.buffers())
            out.emplace_back(prefix + "." + std::to_string(i) + "." + b.name, b.value.get());
    }
}

void restore_net(const std::string& prefix, Network& net, const std::map<std::string, Tensor>& tensors,
                 const std::filesystem::path& path) {
    for (std::size_t i = 0; i < net.size(); ++i) {
        Layer& layer = net.layer(i);
        auto restore = [&](const std::string& name, Tensor& dst) {
            std::string key = prefix + "." + std::to_string(i) + "." + name;
            auto it = tensors.find(key);
            if (it == tensors.end()) throw IoError("missing tensor '" + key + "' in " + path.string());
            if (it->second.shape() != dst.shape())
                throw IoError("shape mismatch for '" + key + "' in " + path.string() + ": stored " +
                              shape_to_string(it->second.shape()) + ", model " + shape_to_string(dst.shape()));
            dst = it->second;
        };
        for (Param& p : layer.params()) restore(p.name, *p.value);
        for (Buffer& b : layer.buffers()) restore(b.name, *b.value);
    }
}

}  // namespace

std::vector<std::pair<std::string, const Tensor*>> model_tensors(const CoGANModel& model) {
    std::vector<std::pair<std::string, const Tensor*>> out;
    collect_net("g1", model.g1, out);
    collect_net("g2", model.g2, out);
    collect_net("f1", model.f1, out);
    collect_net("f2", model.f2, out);
    return out;
}

void save_cogan(const std::filesystem::path& base, const CoGANModel& model,
                std::map<std::string, std::string> extra_meta) {
    std::filesystem::path bin = base;
    bin += ".cog";
    std::filesystem::path meta_path = base;
    meta_path += ".meta";

    save_tensor_file(bin, model_tensors(model));

    std::map<std::string, std::string> meta = std::move(extra_meta);
    meta["preset"] = model.preset.name;
    std::ostringstream width;
    width.precision(17);
    width << model.preset.width;
    meta["width"] = width.str();
    meta["k"] = std::to_string(model.k);
    meta["l"] = std::to_string(model.l);
    meta["z_dim"] = std::to_string(model.preset.z_dim);
    meta["iteration"] = std::to_string(model.iteration);
    meta["seed"] = std::to_string(model.seed);
    save_sidecar(meta_path, meta);
}

CoGANModel load_cogan(const std::filesystem::path& base) {
    std::filesystem::path bin = base;
    bin += ".cog";
    std::filesystem::path meta_path = base;
    meta_path += ".meta";

    auto meta = load_sidecar(meta_path);
    auto need = [&](const std::string& key) -> const std::string& {
        auto it = meta.find(key);
        if (it == meta.end()) throw IoError("sidecar " + meta_path.string() + " missing key '" + key + "'");
        return it->second;
    };

    ArchPreset preset = make_preset(need("preset"), std::stod(need("width")));
    int k = std::stoi(need("k"));
    int l = std::stoi(need("l"));

    Rng rng(std::stoull(need("seed")));  // overwritten below; seeds structure only
    CoGANModel model = build_cogan(preset, k, l, rng);
    model.iteration = std::stoull(need("iteration"));
    model.seed = std::stoull(need("seed"));

    auto tensors = load_tensor_file(bin);
    restore_net("g1", model.g1, tensors, bin);
    restore_net("g2", model.g2, tensors, bin);
    restore_net("f1", model.f1, tensors, bin);
    restore_net("f2", model.f2, tensors, bin);

    TieReport report = verify_ties(model);
    if (!report.ok())
        throw IoError("checkpoint " + bin.string() + " violates the tying constraint on '" +
                      report.discrepancies.front().name + "'");
    return model;
}

}  // namespace cogan
