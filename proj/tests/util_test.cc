#include "vf/util.h"

#include <atomic>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

namespace vf {
namespace {

TEST(Sha256Test, KnownVector) {
  EXPECT_EQ(to_hex(sha256(std::string_view("abc"))),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(to_hex(sha256(std::string_view(""))),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Sha256Test, IncrementalMatchesOneShot) {
  Sha256 h;
  h.update(std::string_view("ab"));
  h.update(std::string_view("c"));
  EXPECT_EQ(h.finish(), sha256(std::string_view("abc")));
}

TEST(ByteIoTest, RoundTrip) {
  ByteWriter w;
  w.u8(7);
  w.u32(0xDEADBEEF);
  w.f32(-1.25f);
  w.str("mel");
  ByteReader r(w.buffer(), "blob");
  EXPECT_EQ(r.u8(), 7);
  EXPECT_EQ(r.u32(), 0xDEADBEEFu);
  EXPECT_EQ(r.f32(), -1.25f);
  EXPECT_EQ(r.str(), "mel");
  EXPECT_EQ(r.remaining(), 0u);
}

TEST(ByteIoTest, LittleEndianLayout) {
  ByteWriter w;
  w.u32(0x01020304);
  ASSERT_EQ(w.buffer().size(), 4u);
  EXPECT_EQ(w.buffer()[0], 0x04);
  EXPECT_EQ(w.buffer()[3], 0x01);
}

TEST(ByteIoTest, TruncationIsDataError) {
  const std::vector<std::uint8_t> three = {1, 2, 3};
  ByteReader r(three, "header");
  try {
    r.u32();
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("header truncated"), std::string::npos);
  }
}

TEST(ErrorTest, KindsAreDistinct) {
  // The CLI dispatches on these types, so none may be caught as another.
  EXPECT_FALSE((std::is_base_of_v<DataError, NumericalError>));
  EXPECT_FALSE((std::is_base_of_v<NumericalError, DataError>));
  EXPECT_FALSE((std::is_base_of_v<std::runtime_error, UsageError>));
}

TEST(ParallelForTest, VisitsEveryIndexOnce) {
  for (int threads : {1, 3, 8}) {
    std::vector<std::atomic<int>> hits(101);
    parallel_for(hits.size(), threads, [&](std::size_t i) { hits[i]++; });
    for (auto& h : hits) EXPECT_EQ(h.load(), 1);
  }
}

TEST(ParallelForTest, RethrowsWorkerException) {
  EXPECT_THROW(parallel_for(10, 4,
                            [](std::size_t i) {
                              if (i == 6) throw DataError("bad item");
                            }),
               DataError);
}

}  // namespace
}  // namespace vf
