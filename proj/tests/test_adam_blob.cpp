// Optimizer update identities plus blob serialization round trips.

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "spectracast/adam.hpp"
#include "spectracast/blob.hpp"
#include "spectracast/ops.hpp"
#include "support/test_util.hpp"

using namespace spectracast;
namespace fs = std::filesystem;

namespace {

ParameterSet<double> one_param(std::vector<double> values) {
  ParameterSet<double> p;
  const std::size_t n = values.size();
  auto t = Tensor<double>::from_data({n}, std::move(values));
  t.set_requires_grad(true);
  p.emplace("w", std::move(t));
  return p;
}

void set_grad(ParameterSet<double>& p, const std::string& name, std::vector<double> g) {
  auto& t = p.at(name);
  t.zero_grad();
  const std::size_t n = g.size();
  auto loss = sum(mul(t, Tensor<double>::from_data({n}, std::move(g))));
  backward(loss);
}

}  // namespace

TEST_CASE("adam leaves parameters alone when gradients are zero") {
  auto params = one_param({1.0, -2.0, 3.0});
  params.at("w").zero_grad();
  AdamState<double> st;
  adam_step(params, st);
  CHECK(params.at("w").data()[0] == 1.0);
  CHECK(params.at("w").data()[1] == -2.0);
  CHECK(params.at("w").data()[2] == 3.0);
  CHECK(st.step == 1);
}

TEST_CASE("first adam step with unit gradient moves by about -lr") {
  auto params = one_param({0.0});
  set_grad(params, "w", {1.0});
  AdamState<double> st;
  st.cfg.lr = 0.001;
  adam_step(params, st);
  // m_hat = v_hat = 1 after bias correction, so the update is -lr/(1+eps).
  CHECK(params.at("w").data()[0] == doctest::Approx(-0.001).epsilon(1e-6));
}

TEST_CASE("updates always oppose a persistent constant gradient") {
  auto params = one_param({0.5, -0.5});
  AdamState<double> st;
  double prev0 = 0.5, prev1 = -0.5;
  for (int i = 0; i < 25; ++i) {
    set_grad(params, "w", {2.0, -3.0});
    adam_step(params, st);
    CHECK(params.at("w").data()[0] < prev0);  // positive gradient -> decrease
    CHECK(params.at("w").data()[1] > prev1);  // negative gradient -> increase
    prev0 = params.at("w").data()[0];
    prev1 = params.at("w").data()[1];
  }
  CHECK(st.step == 25);
}

TEST_CASE("lr zero is the identity on parameters") {
  auto params = one_param({1.0, 2.0});
  AdamState<double> st;
  st.cfg.lr = 0.0;
  for (int i = 0; i < 5; ++i) {
    set_grad(params, "w", {0.7, -0.3});
    adam_step(params, st);
  }
  CHECK(params.at("w").data()[0] == 1.0);
  CHECK(params.at("w").data()[1] == 2.0);
}

TEST_CASE("moment buffers must match parameter extents") {
  auto params = one_param({1.0, 2.0});
  AdamState<double> st;
  st.m["w"] = {0.0};  // wrong length
  st.v["w"] = {0.0};
  set_grad(params, "w", {1.0, 1.0});
  CHECK_THROWS_AS(adam_step(params, st), DimensionError);
}

TEST_CASE("blob write/read round trip preserves every scalar") {
  Rng rng(77);
  BlobMap tensors;
  for (int i = 0; i < 3; ++i) {
    BlobTensor t;
    t.shape = {2, std::size_t(i + 1), 3};
    t.data.resize(shape_numel(t.shape));
    for (auto& v : t.data) v = static_cast<float>(rng.normal());
    tensors.emplace("tensor" + std::to_string(i), std::move(t));
  }
  const auto path = fs::temp_directory_path() / "spectracast_blob_test.blob";
  blob_write(path, tensors, R"({"step":42})");
  auto back = blob_read(path);
  REQUIRE(back.tensors.size() == 3);
  for (const auto& [name, t] : tensors) {
    REQUIRE(back.tensors.count(name) == 1);
    CHECK(back.tensors.at(name).shape == t.shape);
    CHECK(back.tensors.at(name).data == t.data);
  }
  CHECK(back.extra_json.find("42") != std::string::npos);
  fs::remove(path);
}

TEST_CASE("blob reader rejects truncation and manifest lies") {
  const auto path = fs::temp_directory_path() / "spectracast_blob_bad.blob";
  BlobMap tensors;
  BlobTensor t;
  t.shape = {4};
  t.data = {1, 2, 3, 4};
  tensors.emplace("w", t);
  blob_write(path, tensors);

  // truncate payload
  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 6));
  }
  CHECK_THROWS_AS(blob_read(path), FormatError);
  fs::remove(path);
}
