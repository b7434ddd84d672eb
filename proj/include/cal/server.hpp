#pragma once

#include "cal/data.hpp"
#include "cal/learner.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

namespace httplib {
class Server;
}

namespace cal {

struct ApiResponse {
    int status = 200;
    nlohmann::json body;
    std::string text;  // non-JSON payload (run records), sent when set
};

// Labeling sessions over the datasets of one directory. Every method is safe to
// call concurrently; calls on one session are serialized.
class SessionService {
  public:
    // A dataset is `<id>.csv` next to `<id>.schema.json`. With a journal
    // directory every session is persisted and replayed on construction.
    explicit SessionService(std::filesystem::path data_dir,
                            std::optional<std::filesystem::path> journal_dir = std::nullopt);
    ~SessionService();

    ApiResponse datasets() const;
    ApiResponse create(const nlohmann::json& body);
    ApiResponse query(const std::string& id);
    ApiResponse label(const std::string& id, const nlohmann::json& body);
    ApiResponse status(const std::string& id);
    ApiResponse stop(const std::string& id);
    // JSONL run record of a finished session.
    ApiResponse record(const std::string& id);

    [[nodiscard]] std::size_t size() const;

  private:
    struct Session;
    std::shared_ptr<Session> find(const std::string& id) const;
    std::shared_ptr<Session> build(const std::string& id, const nlohmann::json& body);
    void replay(const std::filesystem::path& journal);
    Dataset dataset(const std::string& id);

    std::filesystem::path data_dir_;
    std::optional<std::filesystem::path> journal_dir_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::mutex data_mutex_;
    std::map<std::string, Dataset> datasets_;
    std::uint64_t counter_ = 0;
};

// Routes under /api/v1.
void mount_api(httplib::Server& server, SessionService& service);

struct ServeOptions {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::filesystem::path data_dir = ".";
    std::optional<std::filesystem::path> journal_dir;
    std::optional<std::filesystem::path> static_dir;  // served at /
};

// Blocks until the server is stopped. Returns false if the port cannot be bound.
bool serve(const ServeOptions& opt);

}  // namespace cal
