#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "fslqa/png_io.hpp"
#include "fslqa/proposals.hpp"
#include "json.hpp"

namespace fslqa {

enum class ReviewChoice { G1, G2, RejectBoth };
std::string to_string(ReviewChoice c);
ReviewChoice review_choice_from_string(const std::string& s);

struct QueueItem {
  std::string id;
  std::string image_uri;
  std::string labels_uri;
  std::string rps_uri;
  nlohmann::json tlsa;  // the decisions.jsonl record
  bool decided = false;
};

struct ReviewDecision {
  std::string id;
  ReviewChoice choice = ReviewChoice::G1;
  std::string reviewer;
  std::string note;
  std::string timestamp;  // RFC 3339, UTC
};

nlohmann::json to_json(const QueueItem& item);
nlohmann::json to_json(const ReviewDecision& d);
ReviewDecision review_decision_from_json(const nlohmann::json& j);

// Labels: G1 red, G2 blue, overlap white. Proposals: P1/P2/P3 in the red/green/blue channels.
RgbImage render_label_overlay(const BinaryMask& g1, const BinaryMask& g2);
RgbImage render_proposal_overlay(const RegionalProposals& rps);

// Manual-review items with pre-rendered media under `<dir>/media/<id>/`.
class QueueStore {
 public:
  static QueueStore load(const std::filesystem::path& queue_json);

  const std::filesystem::path& root() const { return root_; }
  const std::vector<QueueItem>& items() const { return items_; }
  std::vector<QueueItem> pending() const;
  const QueueItem* find(const std::string& id) const;
  // Marks the item decided; false for an unknown id.
  bool mark_decided(const std::string& id);
  std::optional<std::filesystem::path> media_path(const std::string& id, const std::string& kind) const;
  nlohmann::json to_json() const;

 private:
  friend QueueStore build_queue(const std::filesystem::path&, const std::filesystem::path&,
                                const std::filesystem::path&, const std::filesystem::path&);
  std::filesystem::path root_;
  std::vector<QueueItem> items_;  // sorted by id
};

// Every Manual record in `decisions_file` becomes a pending item. Images and
// labels come from `stack_dir` (resized to the proposal size), proposals from
// `<proposals_dir>/<id>.P{1,2,3}.png`. Writes `<out_dir>/queue.json` and media.
QueueStore build_queue(const std::filesystem::path& decisions_file, const std::filesystem::path& stack_dir,
                       const std::filesystem::path& proposals_dir, const std::filesystem::path& out_dir);

// Append-only JSON-lines log; each append is flushed and fsynced.
class DecisionLog {
 public:
  explicit DecisionLog(std::filesystem::path path);
  std::vector<ReviewDecision> replay() const;
  void append(const ReviewDecision& d);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Applies the last logged decision per id to the store.
void replay_into(QueueStore& store, const DecisionLog& log);

std::string rfc3339_now();

class ReviewServer {
 public:
  // The log lives at `<queue root>/review_log.jsonl` unless given; it is replayed on construction.
  explicit ReviewServer(QueueStore store, std::optional<std::filesystem::path> log_path = std::nullopt,
                        std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~ReviewServer();
  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  // Binds and serves on a background thread; port 0 picks a free port. Returns the bound port.
  int start(const std::string& host, int port);
  void stop();
  // Blocks until the server stops.
  void wait();

  std::vector<QueueItem> pending() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

inline constexpr int kDefaultReviewPort = 8713;

}  // namespace fslqa
