#include "fslqa/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "fslqa/png_io.hpp"
#include "json.hpp"

namespace fslqa {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kImageSuffix = ".img.png";

std::vector<std::string> discover_ids(const fs::path& dir) {
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > kImageSuffix.size() &&
        name.compare(name.size() - kImageSuffix.size(), kImageSuffix.size(), kImageSuffix) == 0) {
      ids.push_back(name.substr(0, name.size() - kImageSuffix.size()));
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

std::vector<ImageRecord> load_stack(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error("stack directory not found: " + dir.string());

  std::string stack_id = dir.filename().string();
  std::vector<std::string> ids;
  const fs::path manifest = dir / "stack.json";
  if (fs::exists(manifest)) {
    std::ifstream in(manifest);
    json j;
    try {
      in >> j;
      stack_id = j.at("stack_id").get<std::string>();
      ids = j.at("ids").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      throw Error("malformed stack manifest " + manifest.string() + ": " + e.what());
    }
  } else {
    ids = discover_ids(dir);
  }

  std::vector<std::string> missing;
  for (const auto& id : ids) {
    for (const char* suffix : {".img.png", ".G1.png", ".G2.png"}) {
      if (!fs::exists(dir / (id + suffix))) missing.push_back(id + suffix);
    }
  }
  if (!missing.empty()) {
    std::string msg = "stack " + dir.string() + " is incomplete; missing:";
    for (const auto& m : missing) msg += " " + m;
    throw Error(msg);
  }

  std::vector<ImageRecord> records;
  records.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    ImageRecord rec;
    rec.id = ids[i];
    rec.stack_id = stack_id;
    rec.index_in_stack = static_cast<int>(i);
    rec.image = read_gray_png(dir / (rec.id + ".img.png"));
    for (const char* label : {kLabelG1, kLabelG2}) {
      BinaryMask m = read_mask_png(dir / (rec.id + "." + label + ".png"));
      if (!m.same_shape(rec.image)) {
        throw Error("image " + rec.id + ": label " + label + " dimensions differ from the image");
      }
      rec.labels.emplace(label, std::move(m));
    }
    records.push_back(std::move(rec));
  }
  std::sort(records.begin(), records.end(),
            [](const ImageRecord& a, const ImageRecord& b) { return a.index_in_stack < b.index_in_stack; });
  return records;
}

void save_stack(const fs::path& dir, const std::string& stack_id,
                const std::vector<ImageRecord>& records,
                const std::map<std::string, std::map<std::string, BinaryMask>>& extra_masks) {
  fs::create_directories(dir);
  json ids = json::array();
  for (const auto& rec : records) {
    ids.push_back(rec.id);
    write_gray_png(dir / (rec.id + ".img.png"), rec.image);
    for (const char* label : {kLabelG1, kLabelG2})
      write_mask_png(dir / (rec.id + "." + label + ".png"), rec.labels.at(label));
    if (auto it = extra_masks.find(rec.id); it != extra_masks.end()) {
      for (const auto& [suffix, mask] : it->second)
        write_mask_png(dir / (rec.id + "." + suffix + ".png"), mask);
    }
  }
  std::ofstream out(dir / "stack.json");
  out << json{{"stack_id", stack_id}, {"ids", ids}}.dump(2) << "\n";
  if (!out) throw Error("cannot write stack manifest in " + dir.string());
}

StackSplit make_split(const std::vector<ImageRecord>& records) {
  const int n = static_cast<int>(records.size());
  if (n < kMaxTrainImages) {
    throw Error("make_split needs at least 5 records, got " + std::to_string(n));
  }
  std::vector<ImageRecord const*> ordered;
  for (const auto& r : records) ordered.push_back(&r);
  std::sort(ordered.begin(), ordered.end(),
            [](auto* a, auto* b) { return a->index_in_stack < b->index_in_stack; });

  std::set<int> train{0, 1, 2};
  for (int wanted : {n / 2, n / 2 + 1}) {
    int idx = wanted % n;
    while (train.count(idx)) idx = (idx + 1) % n;
    train.insert(idx);
  }

  StackSplit split;
  for (int i = 0; i < n; ++i) {
    (train.count(i) ? split.train_ids : split.test_ids).push_back(ordered[i]->id);
  }
  return split;
}

AnnotatedRecords drop_unannotated(std::vector<ImageRecord> records) {
  AnnotatedRecords out;
  for (auto& rec : records) {
    if (count(rec.g1()) == 0 && count(rec.g2()) == 0) {
      out.dropped_ids.push_back(rec.id);
    } else {
      out.kept.push_back(std::move(rec));
    }
  }
  return out;
}

const ImageRecord& find_record(const std::vector<ImageRecord>& records, const std::string& id) {
  for (const auto& r : records)
    if (r.id == id) return r;
  throw Error("unknown image id: " + id);
}

}  // namespace fslqa
