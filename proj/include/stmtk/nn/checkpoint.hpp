#ifndef STMTK_NN_CHECKPOINT_HPP
#define STMTK_NN_CHECKPOINT_HPP

// RUNP checkpoint: magic, version, the full network config, then every
// parameter and batch-norm running buffer as a named float32 blob. Loading
// rebuilds the network from the embedded config, so a checkpoint alone is
// enough to run inference.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stmtk/binio.hpp"
#include "stmtk/nn/resunet.hpp"

namespace stmtk::nn {

constexpr char kCheckpointMagic[4] = {'R', 'U', 'N', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointBlob {
    std::string name;
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<float> data;
};

struct Checkpoint {
    NetConfig config;
    std::vector<CheckpointBlob> blobs;
};

template <typename T>
Checkpoint snapshot(ResUNet<T>& net) {
    Checkpoint ck;
    ck.config = net.config();
    for (const auto& p : net.params()) {
        CheckpointBlob b;
        b.name = p.name;
        b.n = p.value->n;
        b.c = p.value->c;
        b.h = p.value->h;
        b.w = p.value->w;
        b.data.reserve(p.value->v.size());
        for (const T v : p.value->v) b.data.push_back(static_cast<float>(v));
        ck.blobs.push_back(std::move(b));
    }
    return ck;
}

inline void write_checkpoint(const std::string& path, const Checkpoint& ck) {
    binio::Writer w(path);
    w.magic(kCheckpointMagic);
    w.u32(kCheckpointVersion);
    const NetConfig& c = ck.config;
    w.u32(static_cast<std::uint32_t>(c.levels));
    w.u32(static_cast<std::uint32_t>(c.tile));
    w.u32(static_cast<std::uint32_t>(c.classes));
    w.u32(static_cast<std::uint32_t>(c.in_channels));
    w.f64(c.learning_rate);
    w.f64(c.momentum);
    w.u32(static_cast<std::uint32_t>(c.batch_size));
    w.u32(static_cast<std::uint32_t>(c.max_epochs));
    w.u64(c.seed);
    w.u32(static_cast<std::uint32_t>(c.channels.size()));
    for (const int ch : c.channels) w.u32(static_cast<std::uint32_t>(ch));
    w.u32(static_cast<std::uint32_t>(c.class_weights.size()));
    for (const double cw : c.class_weights) w.f64(cw);
    w.u32(static_cast<std::uint32_t>(ck.blobs.size()));
    for (const auto& b : ck.blobs) {
        w.str(b.name);
        w.u32(static_cast<std::uint32_t>(b.n));
        w.u32(static_cast<std::uint32_t>(b.c));
        w.u32(static_cast<std::uint32_t>(b.h));
        w.u32(static_cast<std::uint32_t>(b.w));
        for (const float v : b.data) w.f32(v);
    }
    w.close();
}

inline Checkpoint read_checkpoint(const std::string& path) {
    binio::Reader r(path);
    r.expect_magic(kCheckpointMagic, "checkpoint");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw ParseError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    NetConfig& c = ck.config;
    c.levels = static_cast<int>(r.u32());
    c.tile = static_cast<int>(r.u32());
    c.classes = static_cast<int>(r.u32());
    c.in_channels = static_cast<int>(r.u32());
    c.learning_rate = r.f64();
    c.momentum = r.f64();
    c.batch_size = static_cast<int>(r.u32());
    c.max_epochs = static_cast<int>(r.u32());
    c.seed = r.u64();
    c.channels.assign(r.u32(), 0);
    for (auto& ch : c.channels) ch = static_cast<int>(r.u32());
    ck.config.class_weights.assign(r.u32(), 0.0);
    for (auto& cw : ck.config.class_weights) cw = r.f64();
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointBlob b;
        b.name = r.str();
        b.n = static_cast<int>(r.u32());
        b.c = static_cast<int>(r.u32());
        b.h = static_cast<int>(r.u32());
        b.w = static_cast<int>(r.u32());
        const std::size_t len = static_cast<std::size_t>(b.n) * b.c * b.h * b.w;
        b.data.resize(len);
        for (auto& v : b.data) v = r.f32();
        ck.blobs.push_back(std::move(b));
    }
    return ck;
}

// Fill a constructed network from a checkpoint. The blob set must cover the
// network's parameters exactly; anything missing, extra, or misshapen is an
// error rather than a silent partial load.
template <typename T>
void apply_checkpoint(ResUNet<T>& net, const Checkpoint& ck) {
    std::map<std::string, const CheckpointBlob*> by_name;
    for (const auto& b : ck.blobs)
        if (!by_name.emplace(b.name, &b).second)
            throw ParseError("duplicate checkpoint blob: " + b.name);
    auto params = net.params();
    if (params.size() != ck.blobs.size())
        throw ParseError("checkpoint blob count does not match the network");
    for (auto& p : params) {
        const auto it = by_name.find(p.name);
        if (it == by_name.end()) throw ParseError("checkpoint is missing " + p.name);
        const CheckpointBlob& b = *it->second;
        if (b.n != p.value->n || b.c != p.value->c || b.h != p.value->h || b.w != p.value->w)
            throw ParseError("checkpoint blob shape mismatch for " + p.name);
        for (std::size_t i = 0; i < b.data.size(); ++i)
            p.value->v[i] = static_cast<T>(b.data[i]);
    }
}

template <typename T>
ResUNet<T> net_from_checkpoint(const Checkpoint& ck) {
    ResUNet<T> net(ck.config);
    apply_checkpoint(net, ck);
    return net;
}

}  // namespace stmtk::nn

#endif
