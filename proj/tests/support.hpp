#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "evsent/corpus.hpp"
#include "evsent/io.hpp"
#include "evsent/time.hpp"

namespace evtest {
using namespace evsent;

inline std::filesystem::path data_dir() { return EVSENT_DATA_DIR; }
inline std::filesystem::path fixture_dir() { return EVSENT_FIXTURE_DIR; }

class temp_dir {
public:
    temp_dir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("evsent-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~temp_dir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    temp_dir(const temp_dir&) = delete;
    temp_dir& operator=(const temp_dir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

    std::filesystem::path write(const std::string& name, const std::string& content) const {
        auto p = path_ / name;
        std::filesystem::create_directories(p.parent_path());
        io::write_file_atomic(p, content);
        return p;
    }

private:
    std::filesystem::path path_;
};

inline timestamp at(const char* iso) { return parse_iso8601(iso); }

inline user_profile user(std::string id, std::optional<std::string> location = std::nullopt,
                         std::optional<std::string> description = std::nullopt, bool is_protected = false) {
    user_profile u;
    u.id = id;
    u.handle = "h_" + id;
    u.display_name = "User " + id;
    u.location = std::move(location);
    u.description = std::move(description);
    u.is_protected = is_protected;
    return u;
}

inline list_record list(std::string id, std::string label, std::vector<std::string> members, std::string owner = "owner") {
    return {std::move(id), std::move(label), std::move(owner), std::move(members)};
}

inline tweet post(std::string id, std::string user_id, std::string text, const char* iso) {
    tweet t;
    t.id = std::move(id);
    t.user_id = std::move(user_id);
    t.text = std::move(text);
    t.created_at = parse_iso8601(iso);
    return t;
}

} // namespace evtest
