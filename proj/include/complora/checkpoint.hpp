#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "complora/adapters.hpp"
#include "complora/matrix.hpp"

namespace complora {

/// Named scalars and matrices in a little-endian binary container.
///
/// Layout:
///   "CLRACKPT" | u32 version (1)
///   u32 n_scalars  { u32 len | name bytes | f64 value }*
///   u32 n_tensors  { u32 len | name bytes | u64 rows | u64 cols | f64 data[rows*cols] }*
/// Entries are written in name order; f64 values are stored bit-exactly.
struct Checkpoint {
    std::map<std::string, double> scalars;
    std::map<std::string, Matrix> tensors;

    std::string serialize() const;
    static Checkpoint deserialize(std::string_view bytes);

    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);

    double scalar(const std::string& name) const;
    const Matrix& tensor(const std::string& name) const;

    bool operator==(const Checkpoint&) const = default;
};

/// Stores kind (0 none, 1 lora, 2 comp_lora), r, c, eta and the matrices
/// under `prefix`.
void store_adapter(Checkpoint& ckpt, const std::string& prefix, const Adapter& adapter);
Adapter load_adapter(const Checkpoint& ckpt, const std::string& prefix);

}  // namespace complora
