#include <sstream>

#include <gtest/gtest.h>

#include "rlr/param_io.hpp"

using namespace rlr;

TEST(ParamBlob, HeaderLayout) {
  const Backbone bb = Backbone::mlp(2, 4, true, 5);
  std::ostringstream os;
  write_params_binary(os, bb, init_params(bb, 0));
  const std::string s = os.str();
  ASSERT_EQ(s.size(), kParamHeaderSize + 8 * std::size_t(bb.param_count()));
  EXPECT_EQ(s.substr(0, 8), "RLRPARAM");
  EXPECT_EQ(s[8], 2);   // mlp-tanh
  EXPECT_EQ(s[9], 1);   // time conditioning
  EXPECT_EQ(s[10], 2);  // d, little-endian
  EXPECT_EQ(s[11], 0);
  EXPECT_EQ(s[12], 4);  // m
  EXPECT_EQ(s[14], 5);  // horizon
}

TEST(ParamBlob, PayloadIsLittleEndianFloat64) {
  const Backbone bb = Backbone::linear(1);
  ParamVector p(2);
  p << 1.0, -2.0;
  std::ostringstream os;
  write_params_binary(os, bb, p);
  const std::string s = os.str();
  // 1.0 = 0x3FF0000000000000
  EXPECT_EQ(static_cast<unsigned char>(s[16 + 7]), 0x3F);
  EXPECT_EQ(static_cast<unsigned char>(s[16 + 6]), 0xF0);
  EXPECT_EQ(static_cast<unsigned char>(s[16 + 0]), 0x00);
}

// flatten/unflatten round trip over random shapes and values.
TEST(ParamBlobProperty, RoundTripIsIdentity) {
  for (int seed = 0; seed < 40; ++seed) {
    const int d = 1 + seed % 3, m = 1 + seed % 5;
    const bool tc = seed % 2 == 0;
    const Backbone bb = seed % 4 < 2 ? Backbone::mlp(d, m, tc, 7) : Backbone::linear(d, tc, 7);
    const ParamVector p = init_params(bb, std::uint64_t(seed), 3.0);
    std::stringstream bin;
    write_params_binary(bin, bb, p);
    const ParamBlob back = read_params_binary(bin);
    EXPECT_EQ(back.params, p);
    EXPECT_EQ(back.backbone.kind, bb.kind);
    EXPECT_EQ(back.backbone.latent_dim, bb.latent_dim);
    EXPECT_EQ(back.backbone.time_conditioning, bb.time_conditioning);
    EXPECT_EQ(back.backbone.param_count(), bb.param_count());

    std::stringstream txt;
    write_params_text(txt, p);
    EXPECT_EQ(read_params_text(txt), p);
  }
}

TEST(ParamBlob, RejectsCorruptInput) {
  const Backbone bb = Backbone::linear(2);
  std::ostringstream os;
  write_params_binary(os, bb, init_params(bb, 1));
  const std::string good = os.str();

  std::string bad_magic = good;
  bad_magic[0] = 'X';
  std::istringstream a(bad_magic);
  EXPECT_THROW(read_params_binary(a), ContractViolation);

  std::istringstream b(good.substr(0, good.size() - 3));
  EXPECT_THROW(read_params_binary(b), ContractViolation);

  std::istringstream c(good + "x");
  EXPECT_THROW(read_params_binary(c), ContractViolation);

  std::string bad_kind = good;
  bad_kind[8] = 9;
  std::istringstream d(bad_kind);
  EXPECT_THROW(read_params_binary(d), ContractViolation);
}

TEST(ParamText, RejectsGarbage) {
  std::istringstream is("1.5\nabc\n");
  EXPECT_THROW(read_params_text(is), ContractViolation);
}
