#include "complora/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <stdexcept>

#include "complora/errors.hpp"
#include "complora/format.hpp"

namespace complora {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'C', 'L', 'R', 'A', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.append(buf, sizeof(T));
}

void put_name(std::string& out, const std::string& name) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
}

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

    std::string name() {
        const auto len = get<std::uint32_t>();
        need(len);
        std::string s(bytes_.substr(pos_, len));
        pos_ += len;
        return s;
    }

    void raw(void* dst, std::size_t n) {
        need(n);
        std::memcpy(dst, bytes_.data() + pos_, n);
        pos_ += n;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw std::runtime_error("checkpoint truncated");
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string Checkpoint::serialize() const {
    std::string out(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(scalars.size()));
    for (const auto& [name, value] : scalars) {
        put_name(out, name);
        put<double>(out, value);
    }
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, m] : tensors) {
        put_name(out, name);
        put<std::uint64_t>(out, m.rows());
        put<std::uint64_t>(out, m.cols());
        out.append(reinterpret_cast<const char*>(m.data().data()), m.size() * sizeof(double));
    }
    return out;
}

Checkpoint Checkpoint::deserialize(std::string_view bytes) {
    if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("not a checkpoint file (bad magic)");
    }
    Reader in(bytes.substr(sizeof(kMagic)));
    const auto version = in.get<std::uint32_t>();
    if (version != kVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));

    Checkpoint ckpt;
    const auto n_scalars = in.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n_scalars; ++i) {
        std::string name = in.name();
        ckpt.scalars[name] = in.get<double>();
    }
    const auto n_tensors = in.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        std::string name = in.name();
        const auto rows = in.get<std::uint64_t>();
        const auto cols = in.get<std::uint64_t>();
        Matrix m(rows, cols);
        in.raw(m.data().data(), m.size() * sizeof(double));
        ckpt.tensors.emplace(std::move(name), std::move(m));
    }
    if (!in.done()) throw std::runtime_error("trailing bytes after checkpoint payload");
    return ckpt;
}

void Checkpoint::save(const std::filesystem::path& path) const { write_file_atomic(path, serialize()); }

Checkpoint Checkpoint::load(const std::filesystem::path& path) { return deserialize(read_file(path)); }

double Checkpoint::scalar(const std::string& name) const {
    const auto it = scalars.find(name);
    if (it == scalars.end()) throw std::runtime_error("checkpoint missing scalar '" + name + "'");
    return it->second;
}

const Matrix& Checkpoint::tensor(const std::string& name) const {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw std::runtime_error("checkpoint missing tensor '" + name + "'");
    return it->second;
}

void store_adapter(Checkpoint& ckpt, const std::string& prefix, const Adapter& adapter) {
    if (const auto* l = std::get_if<LoraAdapter>(&adapter)) {
        ckpt.scalars[prefix + ".kind"] = 1;
        ckpt.scalars[prefix + ".r"] = static_cast<double>(l->rank());
        ckpt.scalars[prefix + ".eta"] = l->eta;
        ckpt.tensors[prefix + ".a"] = l->a;
        ckpt.tensors[prefix + ".b"] = l->b;
    } else if (const auto* c = std::get_if<CompLoraAdapter>(&adapter)) {
        ckpt.scalars[prefix + ".kind"] = 2;
        ckpt.scalars[prefix + ".r"] = static_cast<double>(c->rank());
        ckpt.scalars[prefix + ".c"] = static_cast<double>(c->comp_dim());
        ckpt.scalars[prefix + ".eta"] = c->eta;
        ckpt.tensors[prefix + ".a"] = c->a;
        ckpt.tensors[prefix + ".b"] = c->b;
        ckpt.tensors[prefix + ".proj_in"] = c->proj_in;
        ckpt.tensors[prefix + ".proj_out"] = c->proj_out;
    } else {
        ckpt.scalars[prefix + ".kind"] = 0;
    }
}

Adapter load_adapter(const Checkpoint& ckpt, const std::string& prefix) {
    const int kind = static_cast<int>(ckpt.scalar(prefix + ".kind"));
    if (kind == 0) return std::monostate{};
    if (kind == 1) {
        LoraAdapter l{ckpt.tensor(prefix + ".a"), ckpt.tensor(prefix + ".b"), ckpt.scalar(prefix + ".eta")};
        if (static_cast<double>(l.rank()) != ckpt.scalar(prefix + ".r")) throw ShapeError("adapter rank header mismatch");
        return l;
    }
    if (kind == 2) {
        CompLoraAdapter c{ckpt.tensor(prefix + ".proj_in"), ckpt.tensor(prefix + ".proj_out"),
                          ckpt.tensor(prefix + ".a"), ckpt.tensor(prefix + ".b"), ckpt.scalar(prefix + ".eta")};
        if (static_cast<double>(c.rank()) != ckpt.scalar(prefix + ".r") ||
            static_cast<double>(c.comp_dim()) != ckpt.scalar(prefix + ".c")) {
            throw ShapeError("adapter r/c header mismatch");
        }
        check_adapter_shape(c, c.proj_out.rows(), c.proj_in.cols());
        return c;
    }
    throw std::runtime_error("unknown adapter kind " + std::to_string(kind));
}

}  // namespace complora
