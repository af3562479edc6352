#ifndef KPX_SCENARIO_DATASET_IO_HPP_
#define KPX_SCENARIO_DATASET_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "kpx/scenario/generator.hpp"
#include "kpx/scenario/scene.hpp"
#include "kpx/skeleton/skeleton.hpp"

namespace kpx::scenario {

inline constexpr int kDatasetVersion = 1;
inline constexpr const char* kDatasetFormat = "kpx-scenes";

/// File could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File content is malformed.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Well-formed header, but the format tag, version or horizons do not match
/// this build.
class IncompatibleDataset : public FormatError {
 public:
  using FormatError::FormatError;
};

struct Dataset {
  skeleton::SkeletonSpec skeleton = skeleton::SkeletonSpec::default13();
  std::vector<Scene> scenes;
};

/// Newline-delimited JSON: a header record followed by one record per scene.
/// Every real number is printed with exactly six decimals.
void write_dataset(std::ostream& out, const Dataset& dataset);
void write_dataset_file(const std::filesystem::path& path, const Dataset& dataset);

Dataset read_dataset(std::istream& in);
Dataset read_dataset_file(const std::filesystem::path& path);

std::string scene_to_json(const Scene& scene);
Scene scene_from_json(const std::string& line, const skeleton::SkeletonSpec& spec);

/// Generates n scenes and writes them to `path`.
void generate_dataset(std::size_t n, const KindMix& mix, std::uint64_t seed,
                      const std::filesystem::path& path);

}  // namespace kpx::scenario

#endif  // KPX_SCENARIO_DATASET_IO_HPP_
