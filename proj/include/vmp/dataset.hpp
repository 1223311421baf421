#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vmp/isa.hpp"
#include "vmp/virtualize.hpp"

namespace vmp {

enum class SizeClass { Straightline, Loop };

// A random integer function: pseudo-C text plus its hand-lowered
// native program.  Loop trip counts are immediate constants, so
// every generated program halts well inside the step limit.
struct GeneratedFunction {
    std::string source_text;
    NativeProgram native;
};

GeneratedFunction gen_program(std::uint64_t seed, SizeClass size_class);

// "# This is the source code with <level-name> protection: <source>"
std::string render_prompt(const std::string& source_text, int protection_level);

struct DatasetRecord {
    std::string function_id;
    std::string opt_level;    // "O0".."O2"
    int protection_level = 0; // 0..3
    std::string source_text;
    std::string normalized_vm_text;
    std::string prompt;
};

struct Dataset {
    int version = 1;
    std::uint64_t seed = 0;
    std::size_t n_functions = 0;
    std::vector<OptLevel> opt_levels;
    std::vector<int> protection_levels;
    std::vector<DatasetRecord> records; // n_functions * |opts| * |levels|
};

// Deterministic in all arguments; records are grouped by function,
// then optimization level, then protection level.
Dataset build_dataset(std::size_t n_functions, const std::vector<OptLevel>& opts,
                      const std::vector<int>& protection_levels, std::uint64_t seed);

// Per-function generation seed; exposed so consumers can rebuild
// the native program a record came from.
std::uint64_t function_seed(std::uint64_t dataset_seed, std::size_t index);
SizeClass function_size_class(std::uint64_t dataset_seed, std::size_t index);
std::uint64_t poly_seed_for(std::uint64_t dataset_seed, std::size_t index, OptLevel opt,
                            int protection_level);

// JSON-lines file: a versioned header object on the first line,
// then one record object per line with a fixed field order.
std::string dataset_to_text(const Dataset& ds);
Dataset dataset_from_text(const std::string& text);
void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);

} // namespace vmp
