#include "tsdn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace tsdn {

namespace {

using Kind = FormatError::Kind;

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

template <typename T>
void put(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::string& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw FormatError(Kind::Truncated, path + ": checkpoint truncated");
    return v;
}

void put_floats(std::ofstream& out, const float* data, std::size_t n) {
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(n * sizeof(float)));
}

void get_floats(std::ifstream& in, float* data, std::size_t n, const std::string& path) {
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw FormatError(Kind::Truncated, path + ": checkpoint truncated");
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams<float>& params,
                     const AdamState<float>* adam, std::uint64_t iteration,
                     std::uint64_t rng_seed) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);

    out.write(Checkpoint::kMagic, 4);
    put<std::uint32_t>(out, Checkpoint::kVersion);
    put<std::uint32_t>(out, adam ? 1u : 0u);
    put<std::uint64_t>(out, iteration);
    put<std::uint64_t>(out, rng_seed);

    const ModelConfig& cfg = params.config;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.modules_per_stage));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.sampling_pairs));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.base_width));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.image_channels));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.growth));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.attention_ratio));
    put<std::uint32_t>(out, cfg.scale_policy == ScalePolicy::Double ? 0u : 1u);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.dilations.size()));
    for (int r : cfg.dilations) put<std::uint32_t>(out, static_cast<std::uint32_t>(r));

    std::uint32_t count = 0;
    for_each_param(params, [&count](const std::string&, const Tensor<float>&) { ++count; });
    put<std::uint32_t>(out, count);
    for_each_param(params, [&out](const std::string& name, const Tensor<float>& t) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.n));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.c));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.h));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.w));
        put_floats(out, t.data->data(), static_cast<std::size_t>(t.numel()));
    });

    if (adam) {
        if (adam->m.size() != count || adam->v.size() != count)
            throw ShapeError("save_checkpoint: optimizer state size " +
                             std::to_string(adam->m.size()) + " vs " +
                             std::to_string(count) + " parameters");
        put<std::uint64_t>(out, adam->t);
        for (std::uint32_t i = 0; i < count; ++i) {
            put_floats(out, adam->m[i].data(), static_cast<std::size_t>(adam->m[i].size()));
            put_floats(out, adam->v[i].data(), static_cast<std::size_t>(adam->v[i].size()));
        }
    }
    if (!out) throw IoError("short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);

    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, Checkpoint::kMagic, 4) != 0)
        throw FormatError(Kind::BadMagic, path + ": not a checkpoint file");
    const auto version = get<std::uint32_t>(in, path);
    if (version != Checkpoint::kVersion)
        throw FormatError(Kind::VersionMismatch,
                          path + ": checkpoint version " + std::to_string(version) +
                              ", expected " + std::to_string(Checkpoint::kVersion));

    Checkpoint ckpt;
    ckpt.has_optimizer = get<std::uint32_t>(in, path) != 0;
    ckpt.iteration = get<std::uint64_t>(in, path);
    ckpt.rng_seed = get<std::uint64_t>(in, path);

    ModelConfig& cfg = ckpt.config;
    cfg.modules_per_stage = static_cast<int>(get<std::uint32_t>(in, path));
    cfg.sampling_pairs = static_cast<int>(get<std::uint32_t>(in, path));
    cfg.base_width = static_cast<int>(get<std::uint32_t>(in, path));
    cfg.image_channels = static_cast<int>(get<std::uint32_t>(in, path));
    cfg.growth = static_cast<int>(get<std::uint32_t>(in, path));
    cfg.attention_ratio = static_cast<int>(get<std::uint32_t>(in, path));
    cfg.scale_policy =
        get<std::uint32_t>(in, path) == 0 ? ScalePolicy::Double : ScalePolicy::Constant;
    const auto n_dil = get<std::uint32_t>(in, path);
    if (n_dil != cfg.dilations.size())
        throw FormatError(Kind::CorruptHeader,
                          path + ": unexpected dilation count " + std::to_string(n_dil));
    for (auto& r : cfg.dilations) r = static_cast<int>(get<std::uint32_t>(in, path));

    const auto count = get<std::uint32_t>(in, path);
    ckpt.params.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Checkpoint::NamedArray arr;
        const auto name_len = get<std::uint32_t>(in, path);
        if (name_len > 4096)
            throw FormatError(Kind::CorruptHeader, path + ": implausible name length");
        arr.name.resize(name_len);
        in.read(arr.name.data(), name_len);
        if (!in) throw FormatError(Kind::Truncated, path + ": checkpoint truncated");
        arr.shape.n = get<std::uint32_t>(in, path);
        arr.shape.c = get<std::uint32_t>(in, path);
        arr.shape.h = get<std::uint32_t>(in, path);
        arr.shape.w = get<std::uint32_t>(in, path);
        arr.values.resize(static_cast<std::size_t>(arr.shape.numel()));
        get_floats(in, arr.values.data(), arr.values.size(), path);
        ckpt.params.push_back(std::move(arr));
    }

    if (ckpt.has_optimizer) {
        ckpt.adam_t = get<std::uint64_t>(in, path);
        ckpt.adam_m.resize(count);
        ckpt.adam_v.resize(count);
        for (std::uint32_t i = 0; i < count; ++i) {
            const std::size_t n = ckpt.params[i].values.size();
            ckpt.adam_m[i].resize(n);
            ckpt.adam_v[i].resize(n);
            get_floats(in, ckpt.adam_m[i].data(), n, path);
            get_floats(in, ckpt.adam_v[i].data(), n, path);
        }
    }
    return ckpt;
}

ModelParams<float> restore_model(const Checkpoint& ckpt) {
    ModelParams<float> params = build<float>(ckpt.config, /*seed=*/0);
    std::size_t idx = 0;
    for_each_param(params, [&](const std::string& name, Tensor<float>& t) {
        if (idx >= ckpt.params.size())
            throw FormatError(Kind::CorruptHeader, "checkpoint: missing parameter " + name);
        const auto& arr = ckpt.params[idx++];
        if (arr.name != name || arr.shape != t.shape)
            throw FormatError(Kind::CorruptHeader,
                              "checkpoint: parameter mismatch, expected " + name + " " +
                                  t.shape.str() + ", found " + arr.name + " " +
                                  arr.shape.str());
        for (Index i = 0; i < t.numel(); ++i)
            (*t.data)[i] = arr.values[static_cast<std::size_t>(i)];
    });
    if (idx != ckpt.params.size())
        throw FormatError(Kind::CorruptHeader, "checkpoint: extra parameter arrays");
    return params;
}

AdamState<float> restore_adam(const Checkpoint& ckpt, const ModelParams<float>& params) {
    AdamState<float> st = make_adam_state(params);
    if (!ckpt.has_optimizer) return st;
    if (ckpt.adam_m.size() != st.m.size())
        throw FormatError(Kind::CorruptHeader, "checkpoint: optimizer state count mismatch");
    st.t = ckpt.adam_t;
    for (std::size_t i = 0; i < st.m.size(); ++i) {
        if (static_cast<std::size_t>(st.m[i].size()) != ckpt.adam_m[i].size())
            throw FormatError(Kind::CorruptHeader, "checkpoint: optimizer shape mismatch");
        for (Index j = 0; j < st.m[i].size(); ++j) {
            st.m[i][j] = ckpt.adam_m[i][static_cast<std::size_t>(j)];
            st.v[i][j] = ckpt.adam_v[i][static_cast<std::size_t>(j)];
        }
    }
    return st;
}

}  // namespace tsdn
