#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "nnprof/fetch.hpp"

#include <openssl/evp.h>
#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "httplib.h"
#include "nnprof/errors.hpp"

namespace nnprof {

namespace fs = std::filesystem;

const FetchManifest& default_manifest() {
    static const FetchManifest manifest = [] {
        FetchManifest m;
        const std::string mnist_base = "https://yann.lecun.com/exdb/mnist/";
        // Content digests computed from verified genuine copies; archive
        // digests are left unpinned because gzip output is not canonical
        // across mirrors.
        m.datasets["mnist"] = {
            {mnist_base + "train-images-idx3-ubyte.gz", "", false,
             "train-images-idx3-ubyte",
             "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db",
             {}},
            {mnist_base + "train-labels-idx1-ubyte.gz", "", false,
             "train-labels-idx1-ubyte",
             "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5",
             {}},
            {mnist_base + "t10k-images-idx3-ubyte.gz", "", false,
             "t10k-images-idx3-ubyte",
             "0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7",
             {}},
            {mnist_base + "t10k-labels-idx1-ubyte.gz", "", false,
             "t10k-labels-idx1-ubyte",
             "ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2",
             {}},
        };
        const std::string fashion_base =
            "https://fashion-mnist.s3-website.eu-central-1.amazonaws.com/";
        m.datasets["fashion_mnist"] = {
            {fashion_base + "train-images-idx3-ubyte.gz", "", false,
             "train-images-idx3-ubyte", "", {}},
            {fashion_base + "train-labels-idx1-ubyte.gz", "", false,
             "train-labels-idx1-ubyte", "", {}},
            {fashion_base + "t10k-images-idx3-ubyte.gz", "", false,
             "t10k-images-idx3-ubyte", "", {}},
            {fashion_base + "t10k-labels-idx1-ubyte.gz", "", false,
             "t10k-labels-idx1-ubyte", "", {}},
        };
        m.datasets["cifar10"] = {
            {"https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz", "", true, "", "",
             {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin",
              "data_batch_5.bin", "test_batch.bin"}},
        };
        return m;
    }();
    return manifest;
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw ConfigurationError("sha256 computation failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::string gunzip(const std::string& bytes) {
    z_stream strm{};
    if (inflateInit2(&strm, 15 + 16) != Z_OK)
        throw ConfigurationError("zlib initialization failed");
    strm.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(bytes.data()));
    strm.avail_in = static_cast<uInt>(bytes.size());

    std::string out;
    char buf[1 << 16];
    int rc = Z_OK;
    do {
        strm.next_out = reinterpret_cast<Bytef*>(buf);
        strm.avail_out = sizeof(buf);
        rc = inflate(&strm, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            const auto offset = static_cast<std::uint64_t>(strm.total_in);
            inflateEnd(&strm);
            throw FormatError("gzip stream is damaged", offset);
        }
        out.append(buf, sizeof(buf) - strm.avail_out);
    } while (rc != Z_STREAM_END);
    inflateEnd(&strm);
    return out;
}

namespace {

std::size_t octal_field(const char* p, std::size_t n) {
    std::size_t v = 0;
    for (std::size_t i = 0; i < n && p[i] != '\0' && p[i] != ' '; ++i) {
        if (p[i] < '0' || p[i] > '7') return v;
        v = v * 8 + static_cast<std::size_t>(p[i] - '0');
    }
    return v;
}

std::string basename_of(const std::string& path) {
    const auto pos = path.find_last_of('/');
    return pos == std::string::npos ? path : path.substr(pos + 1);
}

}  // namespace

std::map<std::string, std::string> untar(const std::string& bytes,
                                         const std::vector<std::string>& members) {
    std::map<std::string, std::string> out;
    std::size_t off = 0;
    while (off + 512 <= bytes.size()) {
        const char* hdr = bytes.data() + off;
        bool all_zero = true;
        for (int i = 0; i < 512 && all_zero; ++i) all_zero = hdr[i] == '\0';
        if (all_zero) break;  // end-of-archive marker

        char name_buf[101] = {};
        std::memcpy(name_buf, hdr, 100);
        const std::string name(name_buf);
        const std::size_t size = octal_field(hdr + 124, 12);
        const char type = hdr[156];
        off += 512;
        if (off + size > bytes.size())
            throw FormatError("tar member '" + name + "' runs past the archive end", off);
        if (type == '0' || type == '\0') {
            const std::string base = basename_of(name);
            for (const auto& want : members)
                if (base == want) out.emplace(base, bytes.substr(off, size));
        }
        off += (size + 511) / 512 * 512;  // data is padded to whole blocks
    }
    for (const auto& want : members)
        if (!out.count(want))
            throw FormatError("tar archive is missing member '" + want + "'", off);
    return out;
}

namespace {

std::string http_get(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw ValidationError("fetch url has no scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    const std::string base = path_start == std::string::npos ? url : url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client client(base);
    client.set_follow_location(true);
    client.set_connection_timeout(30);
    client.set_read_timeout(120);
    auto res = client.Get(path);
    if (!res)
        throw ConfigurationError("download failed: " + url + ": " +
                                 httplib::to_string(res.error()));
    if (res->status != 200)
        throw ConfigurationError("download failed: " + url + ": HTTP " +
                                 std::to_string(res->status));
    return std::move(res->body);
}

void check_digest(const std::string& what, const std::string& bytes,
                  const std::string& expected) {
    const std::string got = sha256_hex(bytes);
    if (got != expected)
        throw FormatError("sha256 mismatch for " + what + ": expected " + expected +
                              ", got " + got,
                          0);
}

void write_file_atomic(const fs::path& target, const std::string& bytes) {
    const fs::path tmp = target.string() + ".part";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigurationError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw ConfigurationError("short write to " + tmp.string());
    }
    fs::rename(tmp, target);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

int fetch_datasets(const std::vector<std::string>& names, const FetchOptions& opt,
                   const FetchManifest& manifest) {
    const auto log = [&](const std::string& line) {
        if (opt.log) opt.log(line);
    };
    int downloaded = 0;

    for (const auto& name : names) {
        const auto it = manifest.datasets.find(name);
        if (it == manifest.datasets.end())
            throw ValidationError("no fetch manifest entry for dataset '" + name + "'");
        const fs::path dir = fs::path(opt.data_dir) / name;
        fs::create_directories(dir);

        for (const FetchFile& f : it->second) {
            // already cached and verifiable -> skip without touching the net
            if (f.tar) {
                bool have_all = true;
                for (const auto& m : f.members)
                    if (!fs::exists(dir / m)) have_all = false;
                if (have_all) {
                    log("already cached " + name + " (" +
                        std::to_string(f.members.size()) + " files)");
                    continue;
                }
            } else if (fs::exists(dir / f.file_name)) {
                if (f.raw_sha256.empty() ||
                    sha256_hex(read_file(dir / f.file_name)) == f.raw_sha256) {
                    log("already cached " + name + "/" + f.file_name);
                    continue;
                }
                log("cached copy of " + name + "/" + f.file_name +
                    " fails verification; fetching again");
            }

            if (!f.pinned() && !opt.allow_unverified)
                throw ValidationError("no trusted digest is pinned for " + f.url +
                                      "; pass --allow-unverified to fetch anyway");

            log("downloading " + f.url);
            const std::string archive = http_get(f.url);
            if (!f.archive_sha256.empty())
                check_digest(f.url, archive, f.archive_sha256);
            else
                log("archive sha256 " + sha256_hex(archive) + "  " + f.url);

            const std::string raw = gunzip(archive);
            if (f.tar) {
                // verify the whole extraction before any file lands
                auto extracted = untar(raw, f.members);
                for (const auto& [base, bytes] : extracted)
                    write_file_atomic(dir / base, bytes);
                log("fetched " + name + " (" + std::to_string(extracted.size()) + " files)");
            } else {
                if (!f.raw_sha256.empty())
                    check_digest(name + "/" + f.file_name, raw, f.raw_sha256);
                else
                    log("content sha256 " + sha256_hex(raw) + "  " + name + "/" + f.file_name);
                write_file_atomic(dir / f.file_name, raw);
                log("fetched " + name + "/" + f.file_name);
            }
            ++downloaded;
        }
    }
    return downloaded;
}

}  // namespace nnprof
