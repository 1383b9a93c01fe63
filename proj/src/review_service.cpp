#include "fslqa/review_service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "fslqa/dataset.hpp"
#include "fslqa/preprocess.hpp"
#include "httplib.h"

namespace fs = std::filesystem;

namespace fslqa {

namespace {

constexpr std::array<const char*, 3> kChoiceNames{"G1", "G2", "reject_both"};
constexpr std::array<const char*, 3> kMediaKinds{"image", "labels", "rps"};

std::string media_uri(const std::string& id, const std::string& kind) {
  return "/media/" + id + "/" + kind + ".png";
}

BinaryMask fit_mask(const BinaryMask& m, int width, int height) {
  if (m.width() == width && m.height() == height) return m;
  return threshold_above(resize_bilinear(to_gray(m), width, height), 0.5 - 1e-12);
}

QueueItem item_from_json(const nlohmann::json& j) {
  QueueItem it;
  it.id = j.at("id").get<std::string>();
  it.image_uri = j.at("image_uri").get<std::string>();
  it.labels_uri = j.at("overlay_uris").at("labels").get<std::string>();
  it.rps_uri = j.at("overlay_uris").at("rps").get<std::string>();
  it.tlsa = j.at("tlsa");
  it.decided = j.at("status").get<std::string>() == "decided";
  return it;
}

}  // namespace

std::string to_string(ReviewChoice c) { return kChoiceNames[static_cast<int>(c)]; }

ReviewChoice review_choice_from_string(const std::string& s) {
  for (std::size_t i = 0; i < kChoiceNames.size(); ++i)
    if (s == kChoiceNames[i]) return static_cast<ReviewChoice>(i);
  throw Error("invalid choice '" + s + "' (expected G1, G2 or reject_both)");
}

nlohmann::json to_json(const QueueItem& item) {
  return {{"id", item.id},
          {"image_uri", item.image_uri},
          {"overlay_uris", {{"labels", item.labels_uri}, {"rps", item.rps_uri}}},
          {"tlsa", item.tlsa},
          {"status", item.decided ? "decided" : "pending"}};
}

nlohmann::json to_json(const ReviewDecision& d) {
  return {{"id", d.id}, {"choice", to_string(d.choice)}, {"reviewer", d.reviewer},
          {"note", d.note}, {"timestamp", d.timestamp}};
}

ReviewDecision review_decision_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error("decision must be a JSON object");
  ReviewDecision d;
  try {
    d.id = j.at("id").get<std::string>();
    d.choice = review_choice_from_string(j.at("choice").get<std::string>());
    d.reviewer = j.value("reviewer", "");
    d.note = j.value("note", "");
    d.timestamp = j.value("timestamp", "");
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed decision: ") + e.what());
  }
  return d;
}

RgbImage render_label_overlay(const BinaryMask& g1, const BinaryMask& g2) {
  require_same_shape(g1, g2, "label overlay");
  RgbImage out{g1.width(), g1.height(), std::vector<std::array<std::uint8_t, 3>>(g1.size())};
  for (std::size_t i = 0; i < g1.size(); ++i) {
    if (g1[i] && g2[i]) {
      out.pixels[i] = {255, 255, 255};
    } else if (g1[i]) {
      out.pixels[i] = {255, 0, 0};
    } else if (g2[i]) {
      out.pixels[i] = {0, 0, 255};
    }
  }
  return out;
}

RgbImage render_proposal_overlay(const RegionalProposals& rps) {
  rps.validate();
  RgbImage out{rps[0].width(), rps[0].height(), std::vector<std::array<std::uint8_t, 3>>(rps[0].size())};
  for (std::size_t i = 0; i < rps[0].size(); ++i)
    for (int c = 0; c < 3; ++c) out.pixels[i][c] = rps[c][i] ? 255 : 0;
  return out;
}

// ---------------------------------------------------------------------------

std::vector<QueueItem> QueueStore::pending() const {
  std::vector<QueueItem> out;
  for (const auto& it : items_)
    if (!it.decided) out.push_back(it);
  return out;
}

const QueueItem* QueueStore::find(const std::string& id) const {
  const auto it = std::lower_bound(items_.begin(), items_.end(), id,
                                   [](const QueueItem& a, const std::string& b) { return a.id < b; });
  return it != items_.end() && it->id == id ? &*it : nullptr;
}

bool QueueStore::mark_decided(const std::string& id) {
  auto* item = const_cast<QueueItem*>(find(id));
  if (!item) return false;
  item->decided = true;
  return true;
}

std::optional<fs::path> QueueStore::media_path(const std::string& id, const std::string& kind) const {
  if (!find(id)) return std::nullopt;
  if (std::find(kMediaKinds.begin(), kMediaKinds.end(), kind) == kMediaKinds.end()) return std::nullopt;
  return root_ / "media" / id / (kind + ".png");
}

nlohmann::json QueueStore::to_json() const {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& it : items_) items.push_back(fslqa::to_json(it));
  return {{"items", items}};
}

QueueStore QueueStore::load(const fs::path& queue_json) {
  std::ifstream in(queue_json);
  if (!in) throw Error("cannot open queue: " + queue_json.string());
  QueueStore store;
  store.root_ = queue_json.parent_path();
  try {
    const auto j = nlohmann::json::parse(in);
    for (const auto& item : j.at("items")) store.items_.push_back(item_from_json(item));
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed queue " + queue_json.string() + ": " + e.what());
  }
  std::sort(store.items_.begin(), store.items_.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return store;
}

QueueStore build_queue(const fs::path& decisions_file, const fs::path& stack_dir, const fs::path& proposals_dir,
                       const fs::path& out_dir) {
  std::ifstream in(decisions_file);
  if (!in) throw Error("cannot read decisions file: " + decisions_file.string());
  std::vector<nlohmann::json> manual;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
      if (rec.at("tau").get<std::string>() == "Manual") rec.at("id").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(decisions_file.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (rec["tau"] == "Manual") manual.push_back(std::move(rec));
  }
  std::sort(manual.begin(), manual.end(),
            [](const auto& a, const auto& b) { return a["id"].template get<std::string>() < b["id"].template get<std::string>(); });

  QueueStore store;
  store.root_ = out_dir;
  std::vector<ImageRecord> records;
  if (!manual.empty()) records = load_stack(stack_dir);
  for (const auto& rec : manual) {
    const std::string id = rec["id"].get<std::string>();
    const ImageRecord& r = find_record(records, id);
    RegionalProposals rps;
    for (int k = 0; k < 3; ++k) {
      const fs::path p = proposals_dir / (id + ".P" + std::to_string(k + 1) + ".png");
      if (!fs::exists(p)) throw Error("missing proposal for queued id " + id + ": " + p.string());
      rps[k] = read_mask_png(p);
    }
    rps.validate();
    const int w = rps[0].width(), h = rps[0].height();
    const fs::path media = out_dir / "media" / id;
    fs::create_directories(media);
    const GrayImage img = r.image.width() == w && r.image.height() == h ? r.image : resize_bilinear(r.image, w, h);
    write_gray_png(media / "image.png", img);
    write_rgb_png(media / "labels.png", render_label_overlay(fit_mask(r.g1(), w, h), fit_mask(r.g2(), w, h)));
    write_rgb_png(media / "rps.png", render_proposal_overlay(rps));

    QueueItem item;
    item.id = id;
    item.image_uri = media_uri(id, "image");
    item.labels_uri = media_uri(id, "labels");
    item.rps_uri = media_uri(id, "rps");
    item.tlsa = rec;
    store.items_.push_back(std::move(item));
  }
  fs::create_directories(out_dir);
  std::ofstream out(out_dir / "queue.json", std::ios::binary);
  out << store.to_json().dump(2) << "\n";
  if (!out) throw Error("cannot write " + (out_dir / "queue.json").string());
  return store;
}

// ---------------------------------------------------------------------------

DecisionLog::DecisionLog(fs::path path) : path_(std::move(path)) {}

std::vector<ReviewDecision> DecisionLog::replay() const {
  std::vector<ReviewDecision> out;
  std::ifstream in(path_);
  if (!in) return out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(review_decision_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw Error(path_.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void DecisionLog::append(const ReviewDecision& d) {
  if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
  const std::string line = to_json(d).dump() + "\n";
  const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) throw Error("cannot open review log: " + path_.string());
  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t n = ::write(fd, line.data() + written, line.size() - written);
    if (n < 0) {
      ::close(fd);
      throw Error("cannot write review log: " + path_.string());
    }
    written += static_cast<std::size_t>(n);
  }
  const bool synced = ::fsync(fd) == 0;
  ::close(fd);
  if (!synced) throw Error("fsync failed for review log: " + path_.string());
}

void replay_into(QueueStore& store, const DecisionLog& log) {
  for (const auto& d : log.replay()) store.mark_decided(d.id);
}

std::string rfc3339_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm utc{};
  gmtime_r(&tt, &utc);
  std::ostringstream o;
  o << std::put_time(&utc, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << ms << 'Z';
  return o.str();
}

// ---------------------------------------------------------------------------

struct ReviewServer::Impl {
  QueueStore store;
  DecisionLog log;
  std::optional<fs::path> static_dir;
  mutable std::shared_mutex store_mutex;
  std::mutex write_mutex;
  httplib::Server server;
  std::thread thread;

  Impl(QueueStore s, fs::path log_path, std::optional<fs::path> stat)
      : store(std::move(s)), log(std::move(log_path)), static_dir(std::move(stat)) {}

  static void send_json(httplib::Response& res, int status, const nlohmann::json& j) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, {{"error", message}});
  }

  void routes() {
    server.Get("/api/queue", [this](const httplib::Request&, httplib::Response& res) {
      std::shared_lock lock(store_mutex);
      nlohmann::json items = nlohmann::json::array();
      for (const auto& it : store.pending()) items.push_back(to_json(it));
      send_json(res, 200, {{"items", items}, {"total", store.items().size()}});
    });

    server.Get(R"(/api/item/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      std::shared_lock lock(store_mutex);
      const QueueItem* it = store.find(req.matches[1]);
      if (!it) return send_error(res, 404, "unknown id: " + std::string(req.matches[1]));
      send_json(res, 200, to_json(*it));
    });

    server.Get(R"(/media/([^/]+)/(image|labels|rps)\.png)", [this](const httplib::Request& req, httplib::Response& res) {
      std::optional<fs::path> path;
      {
        std::shared_lock lock(store_mutex);
        path = store.media_path(req.matches[1], req.matches[2]);
      }
      if (!path) return send_error(res, 404, "unknown id: " + std::string(req.matches[1]));
      std::ifstream in(*path, std::ios::binary);
      if (!in) return send_error(res, 404, "missing media: " + path->filename().string());
      std::ostringstream buf;
      buf << in.rdbuf();
      res.set_content(buf.str(), "image/png");
    });

    server.Post("/api/decision", [this](const httplib::Request& req, httplib::Response& res) {
      ReviewDecision d;
      try {
        d = review_decision_from_json(nlohmann::json::parse(req.body));
      } catch (const std::exception& e) {
        return send_error(res, 400, e.what());
      }
      {
        std::shared_lock lock(store_mutex);
        if (!store.find(d.id)) return send_error(res, 404, "unknown id: " + d.id);
      }
      d.timestamp = rfc3339_now();
      std::lock_guard write_lock(write_mutex);
      try {
        log.append(d);
      } catch (const std::exception& e) {
        return send_error(res, 500, e.what());
      }
      {
        std::unique_lock lock(store_mutex);
        store.mark_decided(d.id);
      }
      send_json(res, 200, {{"ok", true}, {"decision", to_json(d)}});
    });

    if (static_dir && !server.set_mount_point("/", static_dir->string()))
      throw Error("static directory not found: " + static_dir->string());
  }
};

ReviewServer::ReviewServer(QueueStore store, std::optional<fs::path> log_path, std::optional<fs::path> static_dir) {
  const fs::path log = log_path ? *log_path : store.root() / "review_log.jsonl";
  impl_ = std::make_unique<Impl>(std::move(store), log, std::move(static_dir));
  // httplib's default sets SO_REUSEPORT, which would let a second server share a busy port.
  impl_->server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  replay_into(impl_->store, impl_->log);
  impl_->routes();
}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error("cannot bind review service on " + host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    throw Error("cannot bind review service to " + host + ":" + std::to_string(port) + " (port busy?)");
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void ReviewServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void ReviewServer::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::vector<QueueItem> ReviewServer::pending() const {
  std::shared_lock lock(impl_->store_mutex);
  return impl_->store.pending();
}

}  // namespace fslqa
