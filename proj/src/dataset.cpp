#include "coreset/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "coreset/random.hpp"

namespace coreset {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::gaussian_location: return "gaussian_location";
    case ModelKind::linear_reg: return "linear_reg";
    case ModelKind::logistic_reg: return "logistic_reg";
    case ModelKind::poisson_reg: return "poisson_reg";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "gaussian_location") return ModelKind::gaussian_location;
  if (name == "linear_reg" || name == "linear") return ModelKind::linear_reg;
  if (name == "logistic_reg" || name == "logistic") return ModelKind::logistic_reg;
  if (name == "poisson_reg" || name == "poisson") return ModelKind::poisson_reg;
  throw std::invalid_argument("unknown model kind: " + std::string(name));
}

std::size_t parameter_dim(ModelKind kind, std::size_t p) {
  switch (kind) {
    case ModelKind::gaussian_location: return p;
    case ModelKind::linear_reg: return p + 2;
    case ModelKind::logistic_reg:
    case ModelKind::poisson_reg: return p + 1;
  }
  return p;
}

std::vector<int> Dataset::class_labels() const {
  std::vector<int> labels(size());
  for (std::size_t n = 0; n < size(); ++n) labels[n] = responses[static_cast<Eigen::Index>(n)] > 0.5 ? 1 : 0;
  return labels;
}

namespace {

void check_response(ModelKind kind, double y, std::size_t row) {
  auto fail = [&](const char* what) {
    throw std::invalid_argument("row " + std::to_string(row) + ": " + what);
  };
  if (!std::isfinite(y)) fail("non-finite response");
  if (kind == ModelKind::logistic_reg && y != 0.0 && y != 1.0) fail("logistic response must be 0 or 1");
  if (kind == ModelKind::poisson_reg && (y < 0.0 || y != std::floor(y)))
    fail("Poisson response must be a nonnegative integer");
}

}  // namespace

void Dataset::validate() const {
  if (size() == 0) throw std::invalid_argument("dataset must have at least one observation");
  if (static_cast<std::size_t>(responses.size()) != size())
    throw std::invalid_argument("responses length does not match feature rows");
  if (!features.allFinite()) throw std::invalid_argument("features contain non-finite values");
  for (std::size_t n = 0; n < size(); ++n) check_response(kind, responses[static_cast<Eigen::Index>(n)], n);
}

Dataset generate_synthetic(ModelKind kind, std::size_t n, std::size_t p, std::uint64_t seed) {
  if (n == 0 || p == 0) throw std::invalid_argument("generate_synthetic: N and p must be positive");
  Rng rng = Rng::stream(seed, 0);
  Dataset data;
  data.kind = kind;
  data.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  data.responses = Vector::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < p; ++j) data.feature_names.push_back("x" + std::to_string(j + 1));

  const auto dim = static_cast<Eigen::Index>(parameter_dim(kind, p));
  Vector truth(dim);
  for (Eigen::Index i = 0; i < dim; ++i) truth[i] = rng.normal();
  if (kind == ModelKind::linear_reg) truth[dim - 1] = 0.0;  // log sigma^2

  for (Eigen::Index r = 0; r < data.features.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.features.cols(); ++c) data.features(r, c) = rng.normal();
    if (kind == ModelKind::gaussian_location) {
      data.features.row(r) += truth.transpose();
      continue;
    }
    const double eta = truth[0] + data.features.row(r).dot(truth.segment(1, static_cast<Eigen::Index>(p)));
    double y = 0.0;
    switch (kind) {
      case ModelKind::linear_reg: y = eta + std::exp(0.5 * truth[dim - 1]) * rng.normal(); break;
      case ModelKind::logistic_reg: y = rng.uniform() < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : 0.0; break;
      case ModelKind::poisson_reg: {
        const double rate = eta > 30.0 ? eta : std::log1p(std::exp(eta));
        std::poisson_distribution<long> pois(rate);
        y = static_cast<double>(pois(rng));
        break;
      }
      case ModelKind::gaussian_location: break;
    }
    data.responses[r] = y;
  }
  data.ground_truth = std::move(truth);
  return data;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    auto field = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) field.remove_suffix(1);
    out.push_back(field);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_cell(std::string_view cell, std::size_t line_no) {
  double value = 0.0;
  const auto* first = cell.data();
  const auto* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || cell.empty())
    throw std::runtime_error("line " + std::to_string(line_no) + ": cannot parse '" + std::string(cell) + "'");
  if (!std::isfinite(value))
    throw std::runtime_error("line " + std::to_string(line_no) + ": non-finite value '" + std::string(cell) + "'");
  return value;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": missing header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_fields(line);

  std::optional<std::size_t> response_col;
  std::vector<std::size_t> feature_cols;
  Dataset data;
  data.kind = schema.kind;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == schema.response_column) {
      if (response_col) throw std::runtime_error("duplicate response column '" + schema.response_column + "'");
      response_col = c;
    } else {
      feature_cols.push_back(c);
      data.feature_names.emplace_back(header[c]);
    }
  }
  if (!response_col && schema.kind != ModelKind::gaussian_location)
    throw std::runtime_error(path.string() + ": no response column '" + schema.response_column + "'");
  if (feature_cols.empty()) throw std::runtime_error(path.string() + ": no feature columns");

  std::vector<double> values;
  std::vector<double> responses;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size())
      throw std::runtime_error("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                               " fields, got " + std::to_string(fields.size()));
    for (auto c : feature_cols) values.push_back(parse_cell(fields[c], line_no));
    const double y = response_col ? parse_cell(fields[*response_col], line_no) : 0.0;
    try {
      check_response(schema.kind, y, responses.size());
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": " + e.what());
    }
    responses.push_back(y);
  }
  if (responses.empty()) throw std::runtime_error(path.string() + ": no data rows");

  const auto rows = static_cast<Eigen::Index>(responses.size());
  const auto cols = static_cast<Eigen::Index>(feature_cols.size());
  data.features = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), rows, cols);
  data.responses = Eigen::Map<const Vector>(responses.data(), rows);
  return data;
}

namespace {

void append_number(std::string& out, double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

}  // namespace

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  std::string buffer;
  for (std::size_t c = 0; c < data.num_features(); ++c) {
    buffer += c < data.feature_names.size() ? data.feature_names[c] : "x" + std::to_string(c + 1);
    buffer += ',';
  }
  buffer += "y\n";
  for (Eigen::Index r = 0; r < data.features.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.features.cols(); ++c) {
      append_number(buffer, data.features(r, c));
      buffer += ',';
    }
    append_number(buffer, data.responses[r]);
    buffer += '\n';
  }
  out << buffer;
}

std::string ground_truth_jsonl(const Dataset& data, std::uint64_t seed) {
  nlohmann::json j;
  j["kind"] = to_string(data.kind);
  j["N"] = data.size();
  j["p"] = data.num_features();
  j["seed"] = seed;
  if (data.ground_truth) j["theta"] = std::vector<double>(data.ground_truth->begin(), data.ground_truth->end());
  return j.dump();
}

}  // namespace coreset
