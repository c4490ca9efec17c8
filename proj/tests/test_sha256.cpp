#include <doctest.h>

#include "entk/sha256.hpp"

using namespace entk;

TEST_CASE("sha256 known vectors") {
    CHECK(digest_hex(Sha256::of("", 0)) ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(digest_hex(Sha256::of("abc", 3)) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    const char* msg = "abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq";
    CHECK(digest_hex(Sha256::of(msg, 56)) ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST_CASE("sha256 incremental equals one-shot") {
    const std::string data(1000, 'x');
    Sha256 h;
    h.update(data.data(), 300);
    h.update(data.data() + 300, 700);
    CHECK(h.finish() == Sha256::of(data.data(), data.size()));
}
