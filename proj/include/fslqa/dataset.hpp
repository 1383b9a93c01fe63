#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fslqa/image.hpp"

namespace fslqa {

inline constexpr const char* kLabelG1 = "G1";
inline constexpr const char* kLabelG2 = "G2";

struct ImageRecord {
  std::string id;
  std::string stack_id;
  int index_in_stack = 0;
  GrayImage image;
  std::map<std::string, BinaryMask> labels;  // exactly {"G1", "G2"}

  const BinaryMask& g1() const { return labels.at(kLabelG1); }
  const BinaryMask& g2() const { return labels.at(kLabelG2); }
};

struct StackSplit {
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

inline constexpr int kMaxTrainImages = 5;

// Reads `<id>.img.png`, `<id>.G1.png`, `<id>.G2.png`. The id order comes from
// `stack.json` when present, otherwise from the sorted `*.img.png` names.
std::vector<ImageRecord> load_stack(const std::filesystem::path& dir);

// Writes the same layout plus `stack.json`. `extra_masks` maps id -> (suffix -> mask),
// e.g. the synthetic ground truth under suffix "GT".
void save_stack(const std::filesystem::path& dir, const std::string& stack_id,
                const std::vector<ImageRecord>& records,
                const std::map<std::string, std::map<std::string, BinaryMask>>& extra_masks = {});

// Train on indices {0, 1, 2, N/2, N/2 + 1}; a midpoint index that is already
// taken advances to the next unused index.
StackSplit make_split(const std::vector<ImageRecord>& records);

struct AnnotatedRecords {
  std::vector<ImageRecord> kept;
  std::vector<std::string> dropped_ids;
};
// Drops records whose G1 and G2 are both blank.
AnnotatedRecords drop_unannotated(std::vector<ImageRecord> records);

const ImageRecord& find_record(const std::vector<ImageRecord>& records, const std::string& id);

}  // namespace fslqa
