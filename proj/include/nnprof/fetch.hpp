#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace nnprof {

// One downloadable archive and how to verify and unpack it. A plain .gz
// yields file_name; a .tar.gz yields the listed member basenames. Digest
// fields hold lowercase hex SHA-256 and may be empty when no trustworthy
// value is known; fetching such entries needs an explicit opt-in.
struct FetchFile {
    std::string url;
    std::string archive_sha256;  // digest of the downloaded bytes
    bool tar = false;
    std::string file_name;            // .gz output name
    std::string raw_sha256;           // digest of the extracted bytes
    std::vector<std::string> members;  // .tar.gz member basenames to extract

    bool pinned() const { return !archive_sha256.empty() || !raw_sha256.empty(); }
};

struct FetchManifest {
    std::map<std::string, std::vector<FetchFile>> datasets;
};

// Canonical sources for mnist, fashion_mnist, and cifar10. MNIST carries
// content digests computed from verified genuine files; the other datasets
// have no digest pinned and require allow_unverified.
const FetchManifest& default_manifest();

std::string sha256_hex(const std::string& bytes);

// Decompresses one gzip stream; FormatError on damaged input.
std::string gunzip(const std::string& bytes);

// Extracts the named member basenames from an uncompressed ustar archive.
std::map<std::string, std::string> untar(const std::string& bytes,
                                         const std::vector<std::string>& members);

struct FetchOptions {
    std::string data_dir = "data";
    bool allow_unverified = false;
    std::function<void(const std::string&)> log;  // per-file progress lines
};

// Downloads, verifies, and unpacks every file the named datasets need,
// skipping files already cached and verified. Returns how many archives
// were actually downloaded. A digest mismatch raises FormatError and leaves
// no new file behind.
int fetch_datasets(const std::vector<std::string>& names, const FetchOptions& opt,
                   const FetchManifest& manifest = default_manifest());

}  // namespace nnprof
