#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "nnprof/fetch.hpp"

#include <doctest.h>
#include <zlib.h>

#include <atomic>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "nnprof/errors.hpp"
#include "test_util.hpp"

using namespace nnprof;
namespace fs = std::filesystem;

namespace {

std::string gzip_compress(const std::string& bytes) {
    z_stream strm{};
    REQUIRE(deflateInit2(&strm, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 15 + 16, 8,
                         Z_DEFAULT_STRATEGY) == Z_OK);
    strm.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(bytes.data()));
    strm.avail_in = static_cast<uInt>(bytes.size());
    std::string out;
    char buf[1 << 15];
    int rc = Z_OK;
    do {
        strm.next_out = reinterpret_cast<Bytef*>(buf);
        strm.avail_out = sizeof(buf);
        rc = deflate(&strm, Z_FINISH);
        REQUIRE(rc != Z_STREAM_ERROR);
        out.append(buf, sizeof(buf) - strm.avail_out);
    } while (rc != Z_STREAM_END);
    deflateEnd(&strm);
    return out;
}

// Hand-built ustar member: header block per the POSIX layout, data padded
// to whole 512-byte blocks.
std::string tar_member(const std::string& name, const std::string& body) {
    std::string hdr(512, '\0');
    std::memcpy(hdr.data(), name.data(), name.size());
    std::snprintf(hdr.data() + 100, 8, "%07o", 0644);
    std::snprintf(hdr.data() + 108, 8, "%07o", 0);
    std::snprintf(hdr.data() + 116, 8, "%07o", 0);
    std::snprintf(hdr.data() + 124, 13, "%011llo",
                  static_cast<unsigned long long>(body.size()));
    std::snprintf(hdr.data() + 136, 13, "%011o", 0);
    std::memset(hdr.data() + 148, ' ', 8);
    hdr[156] = '0';
    std::memcpy(hdr.data() + 257, "ustar", 6);
    hdr[263] = '0';
    hdr[264] = '0';
    unsigned sum = 0;
    for (unsigned char c : hdr) sum += c;
    std::snprintf(hdr.data() + 148, 7, "%06o", sum);
    hdr[155] = ' ';
    std::string out = std::move(hdr);
    out += body;
    out.resize(512 + (body.size() + 511) / 512 * 512, '\0');
    return out;
}

std::string end_of_archive() { return std::string(1024, '\0'); }

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Loopback fixture server handing out canned bodies and counting hits.
struct FixtureServer {
    httplib::Server srv;
    std::map<std::string, std::string> responses;
    std::atomic<int> hits{0};
    int port = 0;
    std::thread thread;

    FixtureServer() {
        srv.Get(R"(/.*)", [this](const httplib::Request& req, httplib::Response& res) {
            ++hits;
            const auto it = responses.find(req.path);
            if (it == responses.end()) {
                res.status = 404;
                return;
            }
            res.set_content(it->second, "application/octet-stream");
        });
        port = srv.bind_to_any_port("127.0.0.1");
        REQUIRE(port > 0);
        thread = std::thread([this] { srv.listen_after_bind(); });
        srv.wait_until_ready();
    }
    ~FixtureServer() {
        srv.stop();
        thread.join();
    }
    std::string url(const std::string& path) const {
        return "http://127.0.0.1:" + std::to_string(port) + path;
    }
};

}  // namespace

TEST_CASE("sha256 matches the published test vectors") {
    CHECK(sha256_hex("") ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST_CASE("gunzip inverts gzip compression") {
    SUBCASE("round trip, including data larger than one inflate buffer") {
        std::string raw;
        raw.reserve(200000);
        for (int i = 0; i < 200000; ++i)
            raw.push_back(static_cast<char>((i * 31 + i / 97) & 0xff));
        CHECK(gunzip(gzip_compress(raw)) == raw);
        CHECK(gunzip(gzip_compress("")) == "");
    }
    SUBCASE("damaged stream is rejected") {
        std::string gz = gzip_compress("the quick brown fox jumps over the lazy dog");
        gz[gz.size() / 2] ^= 0x5a;
        CHECK_THROWS_AS(gunzip(gz), FormatError);
    }
    SUBCASE("truncated stream is rejected") {
        std::string gz = gzip_compress("the quick brown fox jumps over the lazy dog");
        gz.resize(gz.size() / 2);
        CHECK_THROWS_AS(gunzip(gz), FormatError);
    }
    SUBCASE("non-gzip bytes are rejected") {
        CHECK_THROWS_AS(gunzip("plainly not a gzip stream"), FormatError);
    }
}

TEST_CASE("untar extracts the requested members of a ustar archive") {
    const std::string tar = tar_member("dir/first.bin", "alpha-bytes") +
                            tar_member("dir/skip.txt", "unwanted") +
                            tar_member("second.bin", std::string(1300, 'q')) +
                            end_of_archive();

    SUBCASE("wanted members come back keyed by basename") {
        const auto files = untar(tar, {"first.bin", "second.bin"});
        REQUIRE(files.size() == 2);
        CHECK(files.at("first.bin") == "alpha-bytes");
        CHECK(files.at("second.bin") == std::string(1300, 'q'));
    }
    SUBCASE("a missing member is an error") {
        CHECK_THROWS_WITH_AS(untar(tar, {"first.bin", "absent.bin"}),
                             doctest::Contains("absent.bin"), FormatError);
    }
    SUBCASE("a member running past the end is an error") {
        std::string cut = tar.substr(0, 512 + 5);  // header intact, body cut short
        CHECK_THROWS_AS(untar(cut, {"first.bin"}), FormatError);
    }
}

TEST_CASE("default manifest pins content digests for mnist") {
    const FetchManifest& m = default_manifest();
    REQUIRE(m.datasets.count("mnist") == 1);
    REQUIRE(m.datasets.count("fashion_mnist") == 1);
    REQUIRE(m.datasets.count("cifar10") == 1);
    REQUIRE(m.datasets.at("mnist").size() == 4);
    for (const FetchFile& f : m.datasets.at("mnist")) {
        CHECK(f.pinned());
        CHECK(f.raw_sha256.size() == 64);
        CHECK(f.url.substr(0, 8) == "https://");
    }
}

TEST_CASE("fetch_datasets downloads, verifies, and caches") {
    FixtureServer server;
    testutil::TempDir tmp("fetch");

    const std::string raw_a = "idx-content-of-file-a, long enough to compress";
    const std::string gz_a = gzip_compress(raw_a);
    const std::string tar_raw = tar_member("payload/m1.bin", "member-one-bytes") +
                                tar_member("payload/m2.bin", "member-two-bytes") +
                                end_of_archive();
    const std::string gz_tar = gzip_compress(tar_raw);
    server.responses["/a.gz"] = gz_a;
    server.responses["/b.tar.gz"] = gz_tar;

    FetchManifest manifest;
    manifest.datasets["toyset"] = {
        {server.url("/a.gz"), "", false, "a.idx", sha256_hex(raw_a), {}},
        {server.url("/b.tar.gz"), sha256_hex(gz_tar), true, "", "", {"m1.bin", "m2.bin"}},
    };

    FetchOptions opt;
    opt.data_dir = tmp.file("data");
    std::vector<std::string> log;
    opt.log = [&](const std::string& line) { log.push_back(line); };

    SUBCASE("verified fetch lands every file, and a rerun skips the network") {
        CHECK(fetch_datasets({"toyset"}, opt, manifest) == 2);
        CHECK(read_file(tmp.file("data/toyset/a.idx")) == raw_a);
        CHECK(read_file(tmp.file("data/toyset/m1.bin")) == "member-one-bytes");
        CHECK(read_file(tmp.file("data/toyset/m2.bin")) == "member-two-bytes");

        const int hits_after_first = server.hits.load();
        log.clear();
        CHECK(fetch_datasets({"toyset"}, opt, manifest) == 0);
        CHECK(server.hits.load() == hits_after_first);
        REQUIRE(log.size() == 2);
        CHECK(log[0].find("already cached") != std::string::npos);
        CHECK(log[1].find("already cached") != std::string::npos);
    }

    SUBCASE("a cached file that fails verification is fetched again") {
        REQUIRE(fetch_datasets({"toyset"}, opt, manifest) == 2);
        std::ofstream(tmp.file("data/toyset/a.idx"), std::ios::binary) << "tampered";
        CHECK(fetch_datasets({"toyset"}, opt, manifest) == 1);
        CHECK(read_file(tmp.file("data/toyset/a.idx")) == raw_a);
    }

    SUBCASE("content digest mismatch persists nothing") {
        manifest.datasets["toyset"][0].raw_sha256.assign(64, 'f');
        CHECK_THROWS_WITH_AS(fetch_datasets({"toyset"}, opt, manifest),
                             doctest::Contains("sha256 mismatch"), FormatError);
        CHECK_FALSE(fs::exists(tmp.file("data/toyset/a.idx")));
    }

    SUBCASE("archive digest mismatch keeps all tar members out") {
        manifest.datasets["toyset"][1].archive_sha256.assign(64, '0');
        // entry order within the dataset is fixed, so a.idx lands first
        CHECK_THROWS_AS(fetch_datasets({"toyset"}, opt, manifest), FormatError);
        CHECK_FALSE(fs::exists(tmp.file("data/toyset/m1.bin")));
        CHECK_FALSE(fs::exists(tmp.file("data/toyset/m2.bin")));
    }

    SUBCASE("a served body that is not gzip fails cleanly") {
        server.responses["/a.gz"] = "not gzip at all";
        manifest.datasets["toyset"][0].raw_sha256.clear();
        manifest.datasets["toyset"][0].archive_sha256 = sha256_hex("not gzip at all");
        CHECK_THROWS_AS(fetch_datasets({"toyset"}, opt, manifest), FormatError);
        CHECK_FALSE(fs::exists(tmp.file("data/toyset/a.idx")));
    }

    SUBCASE("unpinned files need an explicit opt-in") {
        FetchManifest loose;
        loose.datasets["loose"] = {
            {server.url("/a.gz"), "", false, "a.idx", "", {}},
        };
        CHECK_THROWS_WITH_AS(fetch_datasets({"loose"}, opt, loose),
                             doctest::Contains("allow-unverified"), ValidationError);
        CHECK_FALSE(fs::exists(tmp.file("data/loose/a.idx")));

        opt.allow_unverified = true;
        log.clear();
        CHECK(fetch_datasets({"loose"}, opt, loose) == 1);
        CHECK(read_file(tmp.file("data/loose/a.idx")) == raw_a);
        bool logged_digest = false;
        for (const auto& line : log)
            if (line.find(sha256_hex(raw_a)) != std::string::npos) logged_digest = true;
        CHECK(logged_digest);
    }

    SUBCASE("unknown dataset names are rejected") {
        CHECK_THROWS_WITH_AS(fetch_datasets({"nonexistent"}, opt, manifest),
                             doctest::Contains("nonexistent"), ValidationError);
    }

    SUBCASE("http errors surface as configuration errors") {
        manifest.datasets["toyset"][0].url = server.url("/no-such-file.gz");
        CHECK_THROWS_WITH_AS(fetch_datasets({"toyset"}, opt, manifest),
                             doctest::Contains("404"), ConfigurationError);
    }
}
