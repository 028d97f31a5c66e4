#pragma once
// Binary field snapshots and trajectory manifests.
// Snapshot layout (little-endian): magic "WFLD", u32 version, u32 d, u32 n,
// u32 rank, f64 time, then component planes as f64 in row-major order.

#include <filesystem>
#include <string>

#include "wildflow/field.hpp"

namespace wildflow {

void write_snapshot(const std::filesystem::path& path, const Field& f);
Field read_snapshot(const std::filesystem::path& path);

}  // namespace wildflow
