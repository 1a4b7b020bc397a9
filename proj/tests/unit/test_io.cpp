#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cptar/error.hpp"
#include "cptar/io.hpp"
#include "oracles.hpp"

using namespace cptar;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "cptar_test_io";
  fs::create_directories(dir);
  return dir / name;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::invalid_argument;
}

std::string u64_bytes(std::uint64_t v) {
  std::string s(8, '\0');
  for (int i = 0; i < 8; ++i) s[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xff);
  return s;
}

ModelDocument sample_model(Rng& rng, bool with_sparse) {
  std::vector<Matrix> u{oracle::unit_columns(oracle::gaussian(2, 2, rng)),
                        oracle::unit_columns(oracle::gaussian(3, 2, rng))};
  std::vector<Matrix> v{oracle::unit_columns(oracle::gaussian(2, 1, rng)),
                        oracle::unit_columns(oracle::gaussian(3, 1, rng))};
  ModelDocument doc;
  doc.lowrank = LowRankCoef(CPLoadingSet(u), CPLoadingSet(v), oracle::gaussian(2, 2, rng), 2);
  if (with_sparse) {
    SparseCoef s(Shape{2, 3}, 2);
    s.set({1, 1, 4}, 0.1 / 3.0);
    s.set({5, 0, 0}, -1e-300);
    doc.sparse = s;
  }
  doc.metadata.final_loss = 1.0 / 7.0;
  doc.metadata.iterations = 17;
  doc.metadata.converged = true;
  doc.metadata.seed = 18446744073709551615ULL;
  doc.metadata.config = {{"rank_y", "2"}, {"tol", "1e-6"}};
  return doc;
}

}  // namespace

TEST_CASE("series binary round trip is exact") {
  Rng rng = make_stream(91);
  const TensorSeries s = TensorSeries::from_columns(Shape{2, 3, 1}, oracle::gaussian(6, 5, rng));
  const auto bytes = encode_series(s);
  CHECK(bytes.size() == 8 + 8 + 3 * 8 + 8 + 30 * 8);
  CHECK(bytes.substr(0, 8) == "TSERIES1");
  const TensorSeries back = decode_series(bytes);
  CHECK(back.dims() == s.dims());
  CHECK(back.as_columns() == s.as_columns());

  const auto path = temp_path("round.tsr");
  write_series(s, path);
  CHECK(read_series(path).as_columns() == s.as_columns());
}

TEST_CASE("series header layout is little-endian and first-index-fastest") {
  DenseTensor t(Shape{2, 2}, {1, 2, 3, 4});
  const auto bytes = encode_series(TensorSeries({t}));
  CHECK(bytes.substr(8, 8) == u64_bytes(2));
  CHECK(bytes.substr(16, 8) == u64_bytes(2));
  CHECK(bytes.substr(32, 8) == u64_bytes(1));
  double second = 0.0;
  std::memcpy(&second, bytes.data() + 40 + 8, 8);
  CHECK(second == 2.0);
}

TEST_CASE("malformed series payloads are rejected with specific codes") {
  Rng rng = make_stream(92);
  const auto good = encode_series(TensorSeries::from_columns(Shape{2}, oracle::gaussian(2, 3, rng)));
  CHECK(code_of([&] { decode_series(good.substr(0, good.size() - 1)); }) == ErrorCode::truncated_payload);
  CHECK(code_of([&] { decode_series(good.substr(0, 12)); }) == ErrorCode::truncated_payload);
  std::string bad = good;
  bad[0] = 'X';
  CHECK(code_of([&] { decode_series(bad); }) == ErrorCode::bad_magic);
  CHECK(code_of([&] { decode_series(good + "x"); }) == ErrorCode::parse_error);

  const std::string overflow = std::string(kSeriesMagic) + u64_bytes(2) + u64_bytes(1ULL << 40) +
                               u64_bytes(1ULL << 40) + u64_bytes(1);
  CHECK(code_of([&] { decode_series(overflow); }) == ErrorCode::dim_overflow);
  const std::string zero_dim = std::string(kSeriesMagic) + u64_bytes(1) + u64_bytes(0) + u64_bytes(1);
  CHECK(code_of([&] { decode_series(zero_dim); }) == ErrorCode::parse_error);

  CHECK(code_of([&] { write_series(TensorSeries(), temp_path("empty.tsr")); }) == ErrorCode::invalid_argument);
  CHECK(code_of([&] { read_series(temp_path("missing.tsr")); }) == ErrorCode::io_failure);
}

TEST_CASE("CSV series input") {
  const auto path = temp_path("series.csv");
  write_text(path, "# header\n1,2,3,4\n\n5,6,7,8\n");
  const TensorSeries s = read_series_csv(path, Shape{2, 2});
  CHECK(s.length() == 2);
  CHECK(s[1].at({1, 1}) == 8.0);
  write_text(path, "1,2,3\n");
  CHECK_THROWS_AS(read_series_csv(path, Shape{2, 2}), Error);
}

TEST_CASE("model JSON round trip is bit-exact") {
  Rng rng = make_stream(93);
  for (bool sparse : {false, true}) {
    const ModelDocument doc = sample_model(rng, sparse);
    const auto text = model_to_json(doc);
    const ModelDocument back = model_from_json(text);
    CHECK(back.lowrank.core() == doc.lowrank.core());
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(back.lowrank.response_loadings().factors()[i] == doc.lowrank.response_loadings().factors()[i]);
      CHECK(back.lowrank.covariate_loadings().factors()[i] == doc.lowrank.covariate_loadings().factors()[i]);
    }
    CHECK(back.lowrank.lag_order() == 2);
    CHECK(back.sparse.has_value() == sparse);
    if (sparse) CHECK(back.sparse->entries() == doc.sparse->entries());
    CHECK(back.metadata.final_loss == doc.metadata.final_loss);
    CHECK(back.metadata.seed == doc.metadata.seed);
    CHECK(back.metadata.config == doc.metadata.config);
    CHECK(back.coef() == doc.coef());
    CHECK(model_to_json(back) == text);
  }
}

TEST_CASE("model JSON rejects bad documents") {
  Rng rng = make_stream(94);
  const auto text = model_to_json(sample_model(rng, false));
  CHECK_THROWS_AS(model_from_json("{not json"), Error);
  std::string wrong = text;
  wrong.replace(wrong.find("cptar.model.v1"), 14, "cptar.model.v9");
  CHECK_THROWS_AS(model_from_json(wrong), Error);
}

TEST_CASE("config parsing") {
  const Config c = Config::parse(
      "# comment\n[section]\nrank-y = 3\ndims = \"4,4,4\"\ntol=1e-6  # trailing\nflag = true\nlist = [0.1, 0.2]\n");
  CHECK(*c.get_size("rank_y") == 3);
  CHECK(*c.get_shape("dims") == Shape{4, 4, 4});
  CHECK(*c.get_double("tol") == 1e-6);
  CHECK(*c.get_bool("flag"));
  CHECK(*c.get_list("list") == std::vector<double>{0.1, 0.2});
  CHECK_FALSE(c.get_string("missing"));
  CHECK(code_of([] { Config::parse("a = 1\na = 2\n"); }) == ErrorCode::config_error);
  CHECK(code_of([] { Config::parse("novalue\n"); }) == ErrorCode::parse_error);
  const Config bad = Config::parse("n = -3\nx = abc\n");
  CHECK(code_of([&] { bad.get_size("n"); }) == ErrorCode::parse_error);
  CHECK(code_of([&] { bad.get_double("x"); }) == ErrorCode::parse_error);
  CHECK(parse_number_list("1, 2,3") == std::vector<double>{1, 2, 3});
}

TEST_CASE("CSV tables start with a schema row") {
  HoldoutResult r;
  ScoreRow row;
  row.lag_order = 1;
  row.rank_y = 2;
  row.rank_x = 1;
  row.msfe = 0.5;
  r.scores = {row};
  const auto path = temp_path("scores.csv");
  write_score_table(r, path);
  std::istringstream in(read_text(path));
  std::string first;
  std::getline(in, first);
  CHECK(first == "# schema: " + std::string(kScoreSchema));
  std::string header;
  std::getline(in, header);
  CHECK(header.find("msfe") != std::string::npos);

  RateDiagnostics diag;
  diag.records.push_back({});
  diag.cells.push_back({});
  write_experiment_records(diag, path);
  CHECK(read_text(path).rfind("# schema: " + std::string(kRecordSchema), 0) == 0);
  write_experiment_summary(diag, path);
  CHECK(read_text(path).rfind("# schema: " + std::string(kSummarySchema), 0) == 0);
}
