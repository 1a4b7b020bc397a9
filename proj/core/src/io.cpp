#include "cptar/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "cptar/error.hpp"

namespace cptar {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

template <typename T>
void put(std::string& out, T v) {
  v = to_little(v);
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.append(b, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  template <typename T>
  T take(const char* what) {
    if (remaining() < sizeof(T)) {
      throw Error(ErrorCode::truncated_payload, std::string("file ends inside ") + what, "read_series");
    }
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return to_little(v);
  }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::string trim_ws(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

double parse_double(std::string_view text, std::string_view context) {
  const std::string t = trim_ws(text);
  double v = 0.0;
  const char* first = t.data();
  if (!t.empty() && t.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw Error(ErrorCode::parse_error, "not a number: '" + t + "'", std::string(context));
  }
  return v;
}

std::uint64_t parse_u64(std::string_view text, std::string_view context) {
  const std::string t = trim_ws(text);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw Error(ErrorCode::parse_error, "not a non-negative integer: '" + t + "'", std::string(context));
  }
  return v;
}

}  // namespace

// ---------------------------------------------------------------- files

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_failure, "cannot open for writing", path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.close();
  if (!out) throw Error(ErrorCode::io_failure, "write failed", path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_failure, "cannot open for reading", path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::io_failure, "read failed", path.string());
  return ss.str();
}

// ---------------------------------------------------------------- series

std::string encode_series(const TensorSeries& series) {
  if (series.length() == 0) {
    throw Error(ErrorCode::invalid_argument, "refusing to write an empty series", "write_series");
  }
  const Shape& dims = series.dims();
  const std::size_t q = series.total_dim();
  std::string out;
  out.reserve(kSeriesMagic.size() + 8 * (dims.size() + 2) + 8 * q * series.length());
  out.append(kSeriesMagic);
  put<std::uint64_t>(out, dims.size());
  for (auto d : dims) put<std::uint64_t>(out, d);
  put<std::uint64_t>(out, series.length());
  for (const auto& obs : series.observations()) {
    for (Eigen::Index i = 0; i < obs.data().size(); ++i) put<double>(out, obs.data()[i]);
  }
  return out;
}

TensorSeries decode_series(std::string_view bytes) {
  if (bytes.size() < kSeriesMagic.size() || bytes.substr(0, kSeriesMagic.size()) != kSeriesMagic) {
    throw Error(ErrorCode::bad_magic, "not a series file (magic mismatch)", "read_series");
  }
  Reader r(bytes.substr(kSeriesMagic.size()));
  const auto order = r.take<std::uint64_t>("the header");
  if (order == 0) throw Error(ErrorCode::parse_error, "series order must be positive", "read_series");
  if (order > r.remaining() / 8) {
    throw Error(ErrorCode::truncated_payload, "file ends inside the dimension list", "read_series");
  }
  Shape dims;
  for (std::uint64_t i = 0; i < order; ++i) {
    const auto d = r.take<std::uint64_t>("the dimension list");
    if (d == 0) throw Error(ErrorCode::parse_error, "dimensions must be positive", "read_series");
    if (d > std::numeric_limits<std::size_t>::max()) throw Error(ErrorCode::dim_overflow, "dimension too large");
    dims.push_back(static_cast<std::size_t>(d));
  }
  const std::size_t q = shape_product(dims);
  const auto length = r.take<std::uint64_t>("the header");
  if (length == 0) throw Error(ErrorCode::parse_error, "series has no observations", "read_series");
  const std::size_t max_count = std::numeric_limits<std::size_t>::max() / 8;
  if (q > max_count / length) {
    throw Error(ErrorCode::dim_overflow, "payload size overflows", "read_series");
  }
  const std::size_t expected = 8 * q * static_cast<std::size_t>(length);
  if (r.remaining() < expected) {
    throw Error(ErrorCode::truncated_payload,
                "payload holds " + std::to_string(r.remaining()) + " bytes, expected " + std::to_string(expected),
                "read_series");
  }
  if (r.remaining() > expected) {
    throw Error(ErrorCode::parse_error, "trailing bytes after the payload", "read_series");
  }
  std::vector<DenseTensor> obs;
  obs.reserve(length);
  for (std::uint64_t t = 0; t < length; ++t) {
    Vector v(static_cast<Eigen::Index>(q));
    for (std::size_t i = 0; i < q; ++i) v[static_cast<Eigen::Index>(i)] = r.take<double>("the payload");
    obs.emplace_back(dims, std::move(v));
  }
  return TensorSeries(std::move(obs));
}

void write_series(const TensorSeries& series, const std::filesystem::path& path) {
  write_text(path, encode_series(series));
}

TensorSeries read_series(const std::filesystem::path& path) {
  try {
    return decode_series(read_text(path));
  } catch (const Error& e) {
    throw Error(e.code(), e.what(), path.string());
  }
}

TensorSeries read_series_csv(const std::filesystem::path& path, const Shape& dims) {
  const std::size_t q = shape_product(dims);
  std::istringstream in(read_text(path));
  std::string line;
  std::size_t line_no = 0;
  std::vector<DenseTensor> obs;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim_ws(line);
    if (t.empty() || t.front() == '#') continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    const auto values = parse_number_list(t);
    if (values.size() != q) {
      throw Error(ErrorCode::shape_mismatch,
                  "row has " + std::to_string(values.size()) + " values, expected " + std::to_string(q), where);
    }
    obs.emplace_back(dims, Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(q)));
  }
  if (obs.empty()) throw Error(ErrorCode::parse_error, "no observations", path.string());
  return TensorSeries(std::move(obs));
}

// ---------------------------------------------------------------- model

namespace {

json matrix_json(const Matrix& m) {
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || data.size() != static_cast<std::size_t>(rows * cols)) {
    throw Error(ErrorCode::parse_error, "matrix data does not match rows x cols", "read_model");
  }
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
  }
  return m;
}

json factors_json(const CPLoadingSet& set) {
  json out = json::array();
  for (const auto& f : set.factors()) out.push_back(matrix_json(f));
  return out;
}

std::vector<Matrix> factors_from_json(const json& j) {
  std::vector<Matrix> out;
  for (const auto& f : j) out.push_back(matrix_from_json(f));
  return out;
}

}  // namespace

Matrix ModelDocument::coef() const {
  Matrix a = assemble_coef(lowrank);
  if (sparse) a += sparse->to_matrix();
  return a;
}

std::string model_to_json(const ModelDocument& model) {
  const auto& lr = model.lowrank;
  json doc;
  doc["format"] = kModelFormat;
  doc["variant"] = variant_name(lr.variant());
  doc["lag_order"] = lr.lag_order();
  doc["ranks"] = {{"response", lr.rank_y()}, {"covariate", lr.rank_x()}};
  doc["dims"] = {{"response", lr.response_dims()}, {"covariate", lr.covariate_loadings().dims()}};
  doc["response_factors"] = factors_json(lr.response_loadings());
  doc["covariate_factors"] = factors_json(lr.covariate_loadings());
  doc["core"] = matrix_json(lr.core());
  if (model.sparse) {
    json entries = json::array();
    for (const auto& [idx, v] : model.sparse->entries()) {
      entries.push_back({{"index", model.sparse->multi_index(idx)}, {"value", v}});
    }
    doc["sparse"] = {{"entries", std::move(entries)}};
  }
  const auto& md = model.metadata;
  doc["fit"] = {{"final_loss", md.final_loss},
                {"iterations", md.iterations},
                {"converged", md.converged},
                {"seed", md.seed},
                {"config", md.config}};
  return doc.dump(2) + "\n";
}

ModelDocument model_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, e.what(), "read_model");
  }
  try {
    if (doc.at("format").get<std::string>() != kModelFormat) {
      throw Error(ErrorCode::parse_error, "unsupported model format", "read_model");
    }
    const auto variant = parse_variant(doc.at("variant").get<std::string>());
    const auto lag = doc.at("lag_order").get<std::size_t>();
    ModelDocument m;
    m.lowrank = LowRankCoef(CPLoadingSet(factors_from_json(doc.at("response_factors"))),
                            CPLoadingSet(factors_from_json(doc.at("covariate_factors"))),
                            matrix_from_json(doc.at("core")), lag, variant);
    if (m.lowrank.rank_y() != doc.at("ranks").at("response").get<std::size_t>() ||
        m.lowrank.rank_x() != doc.at("ranks").at("covariate").get<std::size_t>()) {
      throw Error(ErrorCode::parse_error, "ranks disagree with the factor matrices", "read_model");
    }
    if (doc.contains("sparse")) {
      SparseCoef s(m.lowrank.response_dims(), lag);
      for (const auto& e : doc.at("sparse").at("entries")) {
        const auto index = e.at("index").get<std::vector<std::size_t>>();
        s.set(s.from_multi_index(index), e.at("value").get<double>());
      }
      m.sparse = std::move(s);
    }
    if (doc.contains("fit")) {
      const auto& f = doc.at("fit");
      m.metadata.final_loss = f.value("final_loss", 0.0);
      m.metadata.iterations = f.value("iterations", std::size_t{0});
      m.metadata.converged = f.value("converged", false);
      m.metadata.seed = f.value("seed", std::uint64_t{0});
      if (f.contains("config")) m.metadata.config = f.at("config").get<std::map<std::string, std::string>>();
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, e.what(), "read_model");
  }
}

void write_model(const ModelDocument& model, const std::filesystem::path& path) {
  write_text(path, model_to_json(model));
}

ModelDocument read_model(const std::filesystem::path& path) {
  try {
    return model_from_json(read_text(path));
  } catch (const Error& e) {
    throw Error(e.code(), e.what(), path.string());
  }
}

// ---------------------------------------------------------------- config

std::vector<double> parse_number_list(std::string_view text) {
  std::string t = trim_ws(text);
  if (!t.empty() && t.front() == '[') {
    if (t.back() != ']') throw Error(ErrorCode::parse_error, "unterminated list '" + t + "'");
    t = t.substr(1, t.size() - 2);
  }
  std::vector<double> out;
  if (trim_ws(t).empty()) return out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = t.find(',', start);
    out.push_back(parse_double(std::string_view(t).substr(start, comma - start), "list"));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

Config Config::parse(std::string_view text, std::string_view origin) {
  Config cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = std::string(origin) + ":" + std::to_string(line_no);
    std::string body = line;
    bool quoted = false;
    for (std::size_t i = 0; i < body.size(); ++i) {
      if (body[i] == '"') quoted = !quoted;
      if (body[i] == '#' && !quoted) {
        body.resize(i);
        break;
      }
    }
    body = trim_ws(body);
    if (body.empty()) continue;
    if (body.front() == '[' && body.back() == ']') continue;  // section headers are ignored
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::parse_error, "expected key = value", where);
    std::string key = trim_ws(std::string_view(body).substr(0, eq));
    std::string value = trim_ws(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw Error(ErrorCode::parse_error, "empty key", where);
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    std::replace(key.begin(), key.end(), '-', '_');
    if (cfg.values_.contains(key)) throw Error(ErrorCode::config_error, "duplicate key '" + key + "'", where);
    cfg.values_.emplace(std::move(key), std::move(value));
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) { return parse(read_text(path), path.string()); }

std::optional<std::string> Config::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::optional<double> Config::get_double(const std::string& key) const {
  auto s = get_string(key);
  if (!s) return std::nullopt;
  return parse_double(*s, key);
}

std::optional<std::size_t> Config::get_size(const std::string& key) const {
  auto v = get_u64(key);
  if (!v) return std::nullopt;
  return static_cast<std::size_t>(*v);
}

std::optional<std::uint64_t> Config::get_u64(const std::string& key) const {
  auto s = get_string(key);
  if (!s) return std::nullopt;
  return parse_u64(*s, key);
}

std::optional<bool> Config::get_bool(const std::string& key) const {
  auto s = get_string(key);
  if (!s) return std::nullopt;
  if (*s == "true" || *s == "1" || *s == "yes") return true;
  if (*s == "false" || *s == "0" || *s == "no") return false;
  throw Error(ErrorCode::parse_error, "not a boolean: '" + *s + "'", key);
}

std::optional<std::vector<double>> Config::get_list(const std::string& key) const {
  auto s = get_string(key);
  if (!s) return std::nullopt;
  try {
    return parse_number_list(*s);
  } catch (const Error& e) {
    throw Error(e.code(), e.what(), key);
  }
}

std::optional<Shape> Config::get_shape(const std::string& key) const {
  auto s = get_string(key);
  if (!s) return std::nullopt;
  std::string t = trim_ws(*s);
  if (!t.empty() && t.front() == '[' && t.back() == ']') t = t.substr(1, t.size() - 2);
  Shape out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = t.find(',', start);
    const auto v = parse_u64(std::string_view(t).substr(start, comma - start), key);
    if (v == 0) throw Error(ErrorCode::config_error, "dimensions must be positive", key);
    out.push_back(static_cast<std::size_t>(v));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

// ---------------------------------------------------------------- CSV

namespace {

std::string csv_header(std::string_view schema, std::string_view columns) {
  std::string out = "# schema: ";
  out += schema;
  out += "\n";
  out += columns;
  out += "\n";
  return out;
}

std::string join_shape(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(s[i]);
  }
  return out;
}

std::string estimator_name(EstimatorKind k) { return k == EstimatorKind::lrs ? "lrs" : "lowrank"; }

}  // namespace

void write_score_table(const HoldoutResult& result, const std::filesystem::path& path) {
  std::string out = csv_header(kScoreSchema, "lag_order,rank_y,rank_x,lambda,d_ar,msfe,mafe,selected,error");
  for (const auto& row : result.scores) {
    const bool selected = row.lag_order == result.lag_order && row.rank_y == result.rank_y &&
                          row.rank_x == result.rank_x && row.lambda == result.lambda;
    std::string err = row.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out += std::to_string(row.lag_order) + "," + std::to_string(row.rank_y) + "," + std::to_string(row.rank_x) + "," +
           (row.lambda ? format_double(*row.lambda) : std::string()) + "," + format_double(row.complexity) + "," +
           format_double(row.msfe) + "," + format_double(row.mafe) + "," + (selected ? "1" : "0") + "," + err + "\n";
  }
  write_text(path, out);
}

void write_experiment_records(const RateDiagnostics& diag, const std::filesystem::path& path) {
  std::string out =
      csv_header(kRecordSchema, "design,estimator,cell,replication,error,squared_error,tpr,fpr,lambda,failure");
  for (const auto& r : diag.records) {
    std::string failure = r.failure;
    std::replace(failure.begin(), failure.end(), ',', ';');
    std::replace(failure.begin(), failure.end(), '\n', ' ');
    out += std::string(design_name(diag.design)) + "," + estimator_name(diag.estimator) + "," +
           std::to_string(r.cell) + "," + std::to_string(r.replication) + "," + format_double(r.error) + "," +
           format_double(r.squared_error) + "," + (r.support ? format_double(r.support->tpr) : std::string()) + "," +
           (r.support ? format_double(r.support->fpr) : std::string()) + "," + format_double(r.lambda) + "," +
           failure + "\n";
  }
  write_text(path, out);
}

void write_experiment_summary(const RateDiagnostics& diag, const std::filesystem::path& path) {
  std::string out = csv_header(kSummarySchema,
                               "design,estimator,cell,length,dims,rank_y,rank_x,alpha_l,d_ar,d_c,abscissa,mean_error,"
                               "mean_squared_error,mean_tpr,mean_fpr,successes,failures,correlation,slope,intercept");
  const std::string corr = diag.correlation ? format_double(*diag.correlation) : std::string("undefined");
  for (std::size_t i = 0; i < diag.cells.size(); ++i) {
    const auto& s = diag.cells[i];
    out += std::string(design_name(diag.design)) + "," + estimator_name(diag.estimator) + "," + std::to_string(i) +
           "," + std::to_string(s.cell.length) + "," + join_shape(s.cell.dims) + "," + std::to_string(s.cell.rank_y) +
           "," + std::to_string(s.cell.rank_x) + "," +
           (s.cell.alpha_l ? format_double(*s.cell.alpha_l) : std::string()) + "," + format_double(s.complexity) +
           "," + format_double(s.log_factor) + "," + format_double(s.abscissa) + "," + format_double(s.mean_error) +
           "," + format_double(s.mean_squared_error) + "," + format_double(s.mean_tpr) + "," +
           format_double(s.mean_fpr) + "," + std::to_string(s.successes) + "," + std::to_string(s.failures) + "," +
           corr + "," + format_double(diag.slope) + "," + format_double(diag.intercept) + "\n";
  }
  write_text(path, out);
}

}  // namespace cptar
