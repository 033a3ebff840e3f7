#include "harness/checkpoint.h"

#include <cstring>
#include <fstream>

#include "core/error.h"

namespace fatlab::harness {

namespace {

constexpr char kMagic[8] = {'F', 'A', 'T', 'L', 'A', 'B', '0', '1'};
constexpr uint16_t kEndianTag = 0x0102;

enum : uint8_t { kTensor = 0, kString = 1, kInt = 2, kReal = 3 };

struct Writer {
    std::ofstream out;
    explicit Writer(const std::string& path) : out(path, std::ios::binary) {
        if (!out) throw_io("cannot write container: " + path);
    }
    void raw(const void* p, size_t n) { out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
    template <class T>
    void pod(T v) { raw(&v, sizeof v); }
    void name(const std::string& s) {
        pod(static_cast<uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
};

struct Reader {
    std::vector<uint8_t> bytes;
    size_t pos = 0;
    std::string path;

    explicit Reader(const std::string& p) : path(p) {
        std::ifstream in(p, std::ios::binary);
        if (!in) throw_io("cannot read container: " + p);
        bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    void raw(void* out, size_t n) {
        if (pos + n > bytes.size())
            throw_format(path + ": truncated container at byte offset " + std::to_string(pos));
        std::memcpy(out, bytes.data() + pos, n);
        pos += n;
    }
    template <class T>
    T pod() {
        T v;
        raw(&v, sizeof v);
        return v;
    }
    std::string name() {
        const uint32_t n = pod<uint32_t>();
        if (n > 1u << 20)
            throw_format(path + ": implausible name length at byte offset " +
                         std::to_string(pos - 4));
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }
};

}  // namespace

const Tensor* Container::tensor(const std::string& n) const {
    for (const auto& [k, v] : tensors)
        if (k == n) return &v;
    return nullptr;
}
const std::string* Container::str(const std::string& n) const {
    for (const auto& [k, v] : strings)
        if (k == n) return &v;
    return nullptr;
}
const int64_t* Container::integer(const std::string& n) const {
    for (const auto& [k, v] : ints)
        if (k == n) return &v;
    return nullptr;
}
const double* Container::real(const std::string& n) const {
    for (const auto& [k, v] : reals)
        if (k == n) return &v;
    return nullptr;
}

void write_container(const std::string& path, const Container& c) {
    Writer w(path);
    w.raw(kMagic, sizeof kMagic);
    w.pod(kEndianTag);
    const uint32_t total = static_cast<uint32_t>(c.tensors.size() + c.strings.size() +
                                                 c.ints.size() + c.reals.size());
    w.pod(total);
    for (const auto& [k, v] : c.tensors) {
        w.pod<uint8_t>(kTensor);
        w.name(k);
        w.pod(static_cast<uint32_t>(v.ndim()));
        for (int64_t d : v.shape()) w.pod(d);
        w.raw(v.data(), static_cast<size_t>(v.numel()) * sizeof(float));
    }
    for (const auto& [k, v] : c.strings) {
        w.pod<uint8_t>(kString);
        w.name(k);
        w.name(v);
    }
    for (const auto& [k, v] : c.ints) {
        w.pod<uint8_t>(kInt);
        w.name(k);
        w.pod(v);
    }
    for (const auto& [k, v] : c.reals) {
        w.pod<uint8_t>(kReal);
        w.name(k);
        w.pod(v);
    }
    if (!w.out) throw_io("short write: " + path);
}

Container read_container(const std::string& path) {
    Reader r(path);
    char magic[8];
    r.raw(magic, sizeof magic);
    if (std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw_format(path + ": bad container magic at byte offset 0");
    const uint16_t endian = r.pod<uint16_t>();
    if (endian != kEndianTag)
        throw_format(path + ": endian marker mismatch at byte offset 8");
    const uint32_t total = r.pod<uint32_t>();
    Container c;
    for (uint32_t i = 0; i < total; ++i) {
        const size_t entry_off = r.pos;
        const uint8_t type = r.pod<uint8_t>();
        const std::string key = r.name();
        switch (type) {
            case kTensor: {
                const uint32_t rank = r.pod<uint32_t>();
                if (rank > 8)
                    throw_format(path + ": implausible tensor rank at byte offset " +
                                 std::to_string(entry_off));
                std::vector<int64_t> shape(rank);
                int64_t n = 1;
                for (uint32_t d = 0; d < rank; ++d) {
                    shape[d] = r.pod<int64_t>();
                    if (shape[d] < 0 || shape[d] > (1ll << 32))
                        throw_format(path + ": bad tensor dim at byte offset " +
                                     std::to_string(r.pos - 8));
                    n *= shape[d];
                }
                Tensor t(shape);
                r.raw(t.data(), static_cast<size_t>(n) * sizeof(float));
                c.tensors.emplace_back(key, std::move(t));
                break;
            }
            case kString:
                c.strings.emplace_back(key, r.name());
                break;
            case kInt:
                c.ints.emplace_back(key, r.pod<int64_t>());
                break;
            case kReal:
                c.reals.emplace_back(key, r.pod<double>());
                break;
            default:
                throw_format(path + ": unknown entry type " + std::to_string(type) +
                             " at byte offset " + std::to_string(entry_off));
        }
    }
    if (r.pos != r.bytes.size())
        throw_format(path + ": trailing bytes at offset " + std::to_string(r.pos));
    return c;
}

void save_checkpoint(const std::string& path, nn::Model& m, uint64_t rng_seed, int epoch) {
    Container c;
    std::vector<std::string> names;
    auto tensors = m.named_state(&names);
    for (size_t i = 0; i < tensors.size(); ++i) c.tensors.emplace_back(names[i], *tensors[i]);
    c.ints.emplace_back("rng_seed", static_cast<int64_t>(rng_seed));
    c.ints.emplace_back("epoch", epoch);
    c.ints.emplace_back("in_c", m.in_c());
    c.ints.emplace_back("in_h", m.in_h());
    c.ints.emplace_back("in_w", m.in_w());
    c.ints.emplace_back("classes", m.num_classes());
    c.ints.emplace_back("n_blocks", static_cast<int64_t>(m.widths().size()));
    for (size_t i = 0; i < m.widths().size(); ++i)
        c.ints.emplace_back("width" + std::to_string(i), m.widths()[i]);
    write_container(path, c);
}

CheckpointMeta load_checkpoint(const std::string& path, nn::Model* m) {
    const Container c = read_container(path);
    std::vector<std::string> names;
    auto tensors = m->named_state(&names);
    for (size_t i = 0; i < tensors.size(); ++i) {
        const Tensor* src = c.tensor(names[i]);
        if (!src) throw_format(path + ": missing tensor '" + names[i] + "'");
        if (!src->same_shape(*tensors[i]))
            throw_format(path + ": shape mismatch for '" + names[i] + "': stored " +
                         src->shape_str() + ", model wants " + tensors[i]->shape_str());
        *tensors[i] = *src;
    }
    CheckpointMeta meta;
    const int64_t* seed = c.integer("rng_seed");
    const int64_t* ep = c.integer("epoch");
    if (!seed || !ep) throw_format(path + ": missing rng_seed/epoch metadata");
    meta.rng_seed = static_cast<uint64_t>(*seed);
    meta.epoch = static_cast<int>(*ep);
    return meta;
}

std::unique_ptr<nn::Model> open_model_checkpoint(const std::string& path,
                                                 CheckpointMeta* meta) {
    const Container c = read_container(path);
    const int64_t* in_c = c.integer("in_c");
    const int64_t* in_h = c.integer("in_h");
    const int64_t* in_w = c.integer("in_w");
    const int64_t* classes = c.integer("classes");
    const int64_t* n_blocks = c.integer("n_blocks");
    if (!in_c || !in_h || !in_w || !classes || !n_blocks)
        throw_format(path + ": missing model geometry metadata");
    std::vector<int> widths;
    for (int64_t i = 0; i < *n_blocks; ++i) {
        const int64_t* w = c.integer("width" + std::to_string(i));
        if (!w) throw_format(path + ": missing width" + std::to_string(i) + " metadata");
        widths.push_back(static_cast<int>(*w));
    }
    auto m = std::make_unique<nn::Model>(static_cast<int>(*in_c), static_cast<int>(*in_h),
                                         static_cast<int>(*in_w), static_cast<int>(*classes),
                                         widths);
    CheckpointMeta local = load_checkpoint(path, m.get());
    if (meta) *meta = local;
    return m;
}

}  // namespace fatlab::harness
