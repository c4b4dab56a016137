#include <gtest/gtest.h>

#include <cstring>

#include "opdlab/checkpoint.hpp"
#include "support/paths.hpp"

using namespace opdlab;

namespace {

Policy trained_looking_policy() {
  WorldSpec s;
  s.num_prompts = 4;
  s.answer_vocab_size = 3;
  s.answer_length = 2;
  s.prompt_id_offset = 40;
  const auto w = World::build(s);
  auto p = Policy::from_world(w);
  // Values whose shortest decimal form is long, plus signed zero and tiny magnitudes.
  auto& logits = p.parameters().logits;
  logits[0] = 0.1 + 0.2;
  logits[1] = -0.0;
  logits[2] = 5e-324;
  logits[3] = -1.7976931348623157e308;
  p.set_bias({0.2, 4.0});
  return p;
}

bool bit_identical(const Policy& a, const Policy& b) {
  const auto& x = a.parameters().logits;
  const auto& y = b.parameters().logits;
  return a.layout() == b.layout() && a.bias() == b.bias() && a.grid() == b.grid() && x.size() == y.size() &&
         std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
}

}  // namespace

TEST(Checkpoint, BinaryRoundTripIsBitExact) {
  const auto p = trained_looking_policy();
  const auto bytes = encode_checkpoint(p);
  EXPECT_TRUE(bit_identical(decode_checkpoint(bytes), p));
  EXPECT_EQ(encode_checkpoint(decode_checkpoint(bytes)), bytes);
}

TEST(Checkpoint, JsonRoundTripIsBitExact) {
  const auto p = trained_looking_policy();
  EXPECT_TRUE(bit_identical(checkpoint_from_json(checkpoint_to_json(p)), p));
}

TEST(Checkpoint, FileRoundTripChoosesFormatByExtension) {
  const auto dir = testing_paths::scratch("checkpoint");
  const auto p = trained_looking_policy();
  save_checkpoint(p, dir / "a.opdck");
  save_checkpoint(p, dir / "a.json");
  EXPECT_TRUE(bit_identical(load_checkpoint(dir / "a.opdck"), p));
  EXPECT_TRUE(bit_identical(load_checkpoint(dir / "a.json"), p));
  EXPECT_THROW(load_checkpoint(dir / "missing.opdck"), InvalidArgument);
}

TEST(Checkpoint, RejectsCorruptInput) {
  const auto bytes = encode_checkpoint(trained_looking_policy());
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), InvalidArgument);
  EXPECT_THROW(decode_checkpoint(bytes + "x"), InvalidArgument);
  auto bad_magic = bytes;
  bad_magic[0] ^= 0x5a;
  EXPECT_THROW(decode_checkpoint(bad_magic), InvalidArgument);
  EXPECT_THROW(decode_checkpoint(""), InvalidArgument);
  EXPECT_THROW(checkpoint_from_json("{\"format\": \"other\"}"), InvalidArgument);
  EXPECT_THROW(checkpoint_from_json("not json"), InvalidArgument);
}
