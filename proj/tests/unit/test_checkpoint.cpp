#include <fstream>

#include "doctest.h"
#include "rankft/checkpoint.hpp"
#include "rankft/errors.hpp"
#include "rankft/hashing.hpp"
#include "support.hpp"

using namespace rankft;

TEST_SUITE("checkpoint") {
  TEST_CASE("sha256 known answer") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  }

  TEST_CASE("round trip and corruption") {
    testing::TempDir tmp;
    CheckpointBlob b;
    b.config_json = R"({"kind":"x"})";
    b.vocabulary = {"a", "bb", ""};
    b.parameters = {1.5, -0.0, 1e-300};
    write_checkpoint(tmp / "c.ckpt", b);
    const auto back = read_checkpoint(tmp / "c.ckpt");
    CHECK(back.config_json == b.config_json);
    CHECK(back.vocabulary == b.vocabulary);
    CHECK(back.parameters == b.parameters);

    auto bytes = read_file(tmp / "c.ckpt");
    auto corrupt = bytes;
    corrupt[0] = 'X';
    std::ofstream(tmp / "bad1.ckpt", std::ios::binary) << corrupt;
    CHECK_THROWS_AS(read_checkpoint(tmp / "bad1.ckpt"), ParseError);
    corrupt = bytes;
    corrupt[bytes.find("kind") ] = 'K';
    std::ofstream(tmp / "bad2.ckpt", std::ios::binary) << corrupt;
    CHECK_THROWS_AS(read_checkpoint(tmp / "bad2.ckpt"), ParseError);
    std::ofstream(tmp / "bad3.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
    CHECK_THROWS_AS(read_checkpoint(tmp / "bad3.ckpt"), ParseError);
  }
}
