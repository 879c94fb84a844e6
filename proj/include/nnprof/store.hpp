#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace nnprof {

struct StoredRecord {
    std::uint64_t key = 0;
    std::string payload;  // JSON object text
};

// Append-only record log. Layout: 4-byte magic, little-endian u32 format
// version, then self-delimiting records of
//   [u32 payload length][u64 content key][u32 crc32 of payload][payload].
// An interrupted write can only damage the tail, so opening scans forward
// and stops at the first short or corrupt record; a writable open trims
// that tail off before appending.
class ResultStore {
public:
    ResultStore() = default;
    ~ResultStore();
    ResultStore(ResultStore&& other) noexcept;
    ResultStore& operator=(ResultStore&& other) noexcept;
    ResultStore(const ResultStore&) = delete;
    ResultStore& operator=(const ResultStore&) = delete;

    // Opens the store, creating it when writable and missing. A writable
    // handle takes an exclusive lock so there is a single writer per file;
    // read-only handles skip the lock and may coexist with the writer.
    static ResultStore open(const std::string& path, bool read_only = false);

    bool contains(std::uint64_t key) const { return index_.count(key) != 0; }

    // Appends unless the key is already present; a duplicate leaves the
    // file byte-length unchanged and returns false.
    bool append(std::uint64_t key, const std::string& payload);

    const std::vector<StoredRecord>& records() const { return records_; }
    const std::string& path() const { return path_; }
    bool read_only() const { return read_only_; }
    std::int64_t byte_length() const;

    static constexpr char kMagic[4] = {'N', 'P', 'R', 'S'};
    static constexpr std::uint32_t kFormatVersion = 1;

private:
    void close();

    int fd_ = -1;
    bool read_only_ = true;
    std::string path_;
    std::vector<StoredRecord> records_;
    std::unordered_map<std::uint64_t, std::size_t> index_;  // key -> records_ slot
};

}  // namespace nnprof
