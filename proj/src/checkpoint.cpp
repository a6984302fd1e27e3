#include "shapenet/checkpoint.hpp"

#include <fstream>
#include <iterator>

#include "shapenet/binary_io.hpp"

namespace shapenet {

namespace {

enum : std::uint8_t { kConv = 0, kDense = 1, kTop = 2, kHead = 3 };

void put(ByteWriter& w, const std::vector<float>& xs) {
    for (float x : xs) w.f32(x);
}

// Translates the reader's generic truncation error into a checkpoint error.
class Reader {
public:
    explicit Reader(std::vector<char> bytes) : r_(std::move(bytes)) {}

    template <typename Fn>
    auto guard(Fn&& fn) {
        try {
            return fn();
        } catch (const CheckpointError&) {
            throw;
        } catch (const DataError& e) {
            throw CheckpointError(CheckpointError::Code::Truncated, std::string("truncated checkpoint: ") + e.what());
        }
    }
    std::string bytes(std::size_t n) { return guard([&] { return r_.bytes(n); }); }
    std::uint8_t u8() { return guard([&] { return r_.u8(); }); }
    std::uint32_t u32() { return guard([&] { return r_.u32(); }); }
    int dim() {
        const auto v = u32();
        if (v == 0 || v > (1u << 24)) throw CheckpointError(CheckpointError::Code::ShapeInconsistent, "implausible layer dimension");
        return static_cast<int>(v);
    }
    void fill(std::vector<float>& xs) {
        if (r_.remaining() < 4 * xs.size())
            throw CheckpointError(CheckpointError::Code::Truncated, "truncated checkpoint parameters");
        for (auto& x : xs) x = r_.f32();
    }
    bool at_end() const { return r_.at_end(); }

private:
    ByteReader r_;
};

template <typename Fn>
auto shape_checked(Fn&& fn) {
    try {
        return fn();
    } catch (const InvalidArgument& e) {
        throw CheckpointError(CheckpointError::Code::ShapeInconsistent, e.what());
    }
}

} // namespace

std::vector<char> encode_checkpoint(const NetworkParams& net) {
    net.validate();
    ByteWriter w;
    w.bytes("CDB1");
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(net.convs.size() + 2 + (net.head ? 1 : 0)));
    for (const auto& c : net.convs) {
        w.u8(kConv);
        for (int v : {c.out_channels, c.in_channels, c.kernel, c.stride, c.visible_extent})
            w.u32(static_cast<std::uint32_t>(v));
        put(w, c.filters);
        put(w, c.hidden_bias);
        put(w, c.visible_bias);
    }
    w.u8(kDense);
    w.u32(static_cast<std::uint32_t>(net.dense.hidden));
    w.u32(static_cast<std::uint32_t>(net.dense.visible));
    put(w, net.dense.weights);
    put(w, net.dense.hidden_bias);
    put(w, net.dense.visible_bias);
    const auto& t = net.top;
    w.u8(kTop);
    for (int v : {t.hidden, t.feature_visible, t.classes, t.dup}) w.u32(static_cast<std::uint32_t>(v));
    put(w, t.feature_weights);
    put(w, t.label_weights);
    put(w, t.hidden_bias);
    put(w, t.feature_bias);
    put(w, t.label_bias);
    if (net.head) {
        w.u8(kHead);
        w.u32(static_cast<std::uint32_t>(net.head->classes));
        w.u32(static_cast<std::uint32_t>(net.head->inputs));
        put(w, net.head->weights);
        put(w, net.head->bias);
    }
    w.u32(static_cast<std::uint32_t>(t.classes));
    w.u32(static_cast<std::uint32_t>(t.dup));
    return w.data();
}

NetworkParams decode_checkpoint(std::vector<char> bytes) {
    Reader r(std::move(bytes));
    if (r.bytes(4) != "CDB1") throw CheckpointError(CheckpointError::Code::BadMagic, "not a checkpoint: magic mismatch");
    const auto version = r.u32();
    if (version != kCheckpointVersion)
        throw CheckpointError(CheckpointError::Code::VersionMismatch,
                              "checkpoint version " + std::to_string(version) + " is not supported (expected " +
                                  std::to_string(kCheckpointVersion) + ")");
    const auto layers = r.u32();
    NetworkParams net;
    bool have_dense = false, have_top = false;
    for (std::uint32_t i = 0; i < layers; ++i) {
        switch (r.u8()) {
        case kConv: {
            const int F = r.dim(), C = r.dim(), k = r.dim(), s = r.dim(), n = r.dim();
            auto c = shape_checked([&] { return ConvLayerParams(F, C, k, s, n); });
            r.fill(c.filters);
            r.fill(c.hidden_bias);
            r.fill(c.visible_bias);
            net.convs.push_back(std::move(c));
            break;
        }
        case kDense: {
            const int H = r.dim(), V = r.dim();
            net.dense = shape_checked([&] { return DenseLayerParams(H, V); });
            r.fill(net.dense.weights);
            r.fill(net.dense.hidden_bias);
            r.fill(net.dense.visible_bias);
            have_dense = true;
            break;
        }
        case kTop: {
            const int H = r.dim(), V = r.dim(), K = r.dim(), D = r.dim();
            net.top = shape_checked([&] { return TopLayerParams(H, V, K, D); });
            r.fill(net.top.feature_weights);
            r.fill(net.top.label_weights);
            r.fill(net.top.hidden_bias);
            r.fill(net.top.feature_bias);
            r.fill(net.top.label_bias);
            have_top = true;
            break;
        }
        case kHead: {
            ClassifierHead h;
            h.classes = r.dim();
            h.inputs = r.dim();
            h.weights.resize(static_cast<std::size_t>(h.classes) * h.inputs);
            h.bias.resize(static_cast<std::size_t>(h.classes));
            r.fill(h.weights);
            r.fill(h.bias);
            net.head = std::move(h);
            break;
        }
        default:
            throw CheckpointError(CheckpointError::Code::ShapeInconsistent, "unknown layer kind tag");
        }
    }
    if (!have_dense || !have_top)
        throw CheckpointError(CheckpointError::Code::ShapeInconsistent, "checkpoint lacks dense or top layer");
    const auto K = r.u32(), dup = r.u32();
    if (K != static_cast<std::uint32_t>(net.top.classes) || dup != static_cast<std::uint32_t>(net.top.dup))
        throw CheckpointError(CheckpointError::Code::ShapeInconsistent, "trailing class count disagrees with top layer");
    if (!r.at_end()) throw CheckpointError(CheckpointError::Code::ShapeInconsistent, "trailing bytes after checkpoint");
    shape_checked([&] {
        net.validate();
        return 0;
    });
    return net;
}

void save_checkpoint(const NetworkParams& net, const std::filesystem::path& path) {
    write_file_atomic(path, encode_checkpoint(net));
}

NetworkParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(CheckpointError::Code::Io, "cannot open checkpoint " + path.string());
    return decode_checkpoint({std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()});
}

} // namespace shapenet
