#pragma once

#include <filesystem>
#include <iosfwd>

#include "blindspot/stage1.hpp"

namespace blindspot {

struct StudentParams;
struct RealModel;

// Binary layout: 4-byte magic, u32 version, model header fields, u32 record
// count, then records of (u32 length + name, tensor). Floats are stored as
// little-endian float32. Loading validates names and shapes against a model
// built from the header and raises IoError on any mismatch.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_stage1(std::ostream& out, const Stage1Model& model);
Stage1Model read_stage1(std::istream& in);
void save_stage1(const std::filesystem::path& path, const Stage1Model& model);
Stage1Model load_stage1(const std::filesystem::path& path);

void write_student(std::ostream& out, const StudentParams& params);
StudentParams read_student(std::istream& in);
void save_student(const std::filesystem::path& path, const StudentParams& params);
StudentParams load_student(const std::filesystem::path& path);

// Per-group models of the sub-image pipeline ("g<k>/" name prefixes).
void write_real_model(std::ostream& out, const RealModel& model);
RealModel read_real_model(std::istream& in);
void save_real_model(const std::filesystem::path& path, const RealModel& model);
RealModel load_real_model(const std::filesystem::path& path);

}  // namespace blindspot
