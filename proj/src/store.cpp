#include "nnprof/store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <sys/stat.h>
#include <unistd.h>
#include <zlib.h>

#include <cerrno>
#include <cstring>
#include <utility>

#include "nnprof/errors.hpp"

namespace nnprof {

namespace {

constexpr std::size_t kHeaderBytes = 8;         // magic + version
constexpr std::size_t kRecordHeaderBytes = 16;  // len + key + crc
constexpr std::uint32_t kMaxPayloadBytes = 64u << 20;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

std::uint32_t payload_crc(const std::string& payload) {
    return static_cast<std::uint32_t>(
        crc32(0, reinterpret_cast<const Bytef*>(payload.data()), payload.size()));
}

std::string read_whole(int fd, const std::string& path) {
    struct stat st{};
    if (fstat(fd, &st) != 0)
        throw FormatError("store stat failed: " + path + ": " + std::strerror(errno), 0);
    std::string buf(static_cast<std::size_t>(st.st_size), '\0');
    std::size_t done = 0;
    while (done < buf.size()) {
        const ssize_t n = pread(fd, buf.data() + done, buf.size() - done,
                                static_cast<off_t>(done));
        if (n < 0) {
            if (errno == EINTR) continue;
            throw FormatError("store read failed: " + path + ": " + std::strerror(errno),
                              done);
        }
        if (n == 0) break;  // raced a concurrent truncate; parse what we have
        done += static_cast<std::size_t>(n);
    }
    buf.resize(done);
    return buf;
}

void write_all(int fd, const char* data, std::size_t size, const std::string& path) {
    std::size_t done = 0;
    while (done < size) {
        const ssize_t n = write(fd, data + done, size - done);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw ConfigurationError("store write failed: " + path + ": " +
                                     std::strerror(errno));
        }
        done += static_cast<std::size_t>(n);
    }
}

}  // namespace

ResultStore::~ResultStore() { close(); }

ResultStore::ResultStore(ResultStore&& other) noexcept { *this = std::move(other); }

ResultStore& ResultStore::operator=(ResultStore&& other) noexcept {
    if (this != &other) {
        close();
        fd_ = std::exchange(other.fd_, -1);
        read_only_ = other.read_only_;
        path_ = std::move(other.path_);
        records_ = std::move(other.records_);
        index_ = std::move(other.index_);
    }
    return *this;
}

void ResultStore::close() {
    if (fd_ >= 0) {
        ::close(fd_);  // releases the flock
        fd_ = -1;
    }
}

ResultStore ResultStore::open(const std::string& path, bool read_only) {
    ResultStore st;
    st.path_ = path;
    st.read_only_ = read_only;

    const int flags = read_only ? O_RDONLY : (O_RDWR | O_CREAT);
    st.fd_ = ::open(path.c_str(), flags | O_CLOEXEC, 0644);
    if (st.fd_ < 0)
        throw ConfigurationError("cannot open store " + path + ": " + std::strerror(errno));

    if (!read_only && flock(st.fd_, LOCK_EX | LOCK_NB) != 0)
        throw ConfigurationError("store " + path + " is locked by another writer");

    std::string buf = read_whole(st.fd_, path);
    if (buf.empty()) {
        if (read_only) throw FormatError("store " + path + " is empty", 0);
        std::string header(kMagic, sizeof(kMagic));
        put_u32(header, kFormatVersion);
        write_all(st.fd_, header.data(), header.size(), path);
        fdatasync(st.fd_);
        return st;
    }

    if (buf.size() < kHeaderBytes || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
        throw FormatError("store " + path + " has no record-log magic", 0);
    const std::uint32_t version =
        get_u32(reinterpret_cast<const unsigned char*>(buf.data()) + 4);
    if (version != kFormatVersion)
        throw FormatError("store " + path + " has unsupported format version " +
                              std::to_string(version),
                          4);

    // Scan records until the data runs short or a checksum fails; anything
    // past that point is a torn tail from an interrupted write.
    std::size_t off = kHeaderBytes;
    std::size_t good_end = off;
    const auto* base = reinterpret_cast<const unsigned char*>(buf.data());
    while (off + kRecordHeaderBytes <= buf.size()) {
        const std::uint32_t len = get_u32(base + off);
        const std::uint64_t key = get_u64(base + off + 4);
        const std::uint32_t crc = get_u32(base + off + 12);
        if (len > kMaxPayloadBytes) break;
        if (off + kRecordHeaderBytes + len > buf.size()) break;
        std::string payload = buf.substr(off + kRecordHeaderBytes, len);
        if (payload_crc(payload) != crc) break;
        if (!st.index_.count(key)) {
            st.index_.emplace(key, st.records_.size());
            st.records_.push_back({key, std::move(payload)});
        }
        off += kRecordHeaderBytes + len;
        good_end = off;
    }

    if (!read_only && good_end < buf.size()) {
        if (ftruncate(st.fd_, static_cast<off_t>(good_end)) != 0)
            throw ConfigurationError("store tail trim failed: " + path + ": " +
                                     std::strerror(errno));
    }
    if (!read_only && lseek(st.fd_, 0, SEEK_END) < 0)
        throw ConfigurationError("store seek failed: " + path + ": " + std::strerror(errno));
    return st;
}

bool ResultStore::append(std::uint64_t key, const std::string& payload) {
    if (fd_ < 0) throw ConfigurationError("store is not open");
    if (read_only_) throw ConfigurationError("store " + path_ + " is open read-only");
    if (payload.size() > kMaxPayloadBytes)
        throw ValidationError("store payload exceeds the size limit");
    if (contains(key)) return false;

    std::string rec;
    rec.reserve(kRecordHeaderBytes + payload.size());
    put_u32(rec, static_cast<std::uint32_t>(payload.size()));
    put_u64(rec, key);
    put_u32(rec, payload_crc(payload));
    rec += payload;
    write_all(fd_, rec.data(), rec.size(), path_);
    fdatasync(fd_);

    index_.emplace(key, records_.size());
    records_.push_back({key, payload});
    return true;
}

std::int64_t ResultStore::byte_length() const {
    if (fd_ < 0) throw ConfigurationError("store is not open");
    struct stat stbuf{};
    if (fstat(fd_, &stbuf) != 0)
        throw ConfigurationError("store stat failed: " + path_ + ": " + std::strerror(errno));
    return static_cast<std::int64_t>(stbuf.st_size);
}

}  // namespace nnprof
