#include "klshc/klsh.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <fstream>
#include <sstream>

namespace klshc {

std::string HashCode::to_hex() const {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out((bits_ + 3) / 4, '0');
  for (std::size_t j = 0; j < bits_; ++j) {
    if (!bit(j)) continue;
    const std::size_t digit = j / 4;
    const int shift = 3 - static_cast<int>(j % 4);
    const int v = (out[digit] <= '9' ? out[digit] - '0' : out[digit] - 'a' + 10) | (1 << shift);
    out[digit] = kDigits[v];
  }
  return out;
}

HashCode HashCode::from_hex(std::string_view hex, std::size_t bits) {
  require(hex.size() == (bits + 3) / 4, ErrorKind::format, "hex code has the wrong width");
  HashCode code(bits);
  for (std::size_t digit = 0; digit < hex.size(); ++digit) {
    const char c = hex[digit];
    int v;
    if (c >= '0' && c <= '9') v = c - '0';
    else if (c >= 'a' && c <= 'f') v = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F') v = c - 'A' + 10;
    else throw Error(ErrorKind::format, "bad hex digit");
    for (int b = 0; b < 4; ++b) {
      const std::size_t j = digit * 4 + static_cast<std::size_t>(b);
      const bool on = (v >> (3 - b)) & 1;
      if (j < bits) code.set(j, on);
      else require(!on, ErrorKind::format, "hex code sets padding bits");
    }
  }
  return code;
}

std::size_t hamming(const HashCode& a, const HashCode& b) {
  require(a.size() == b.size(), ErrorKind::parameter, "hash code width mismatch");
  std::size_t total = 0;
  for (std::size_t w = 0; w < a.words().size(); ++w)
    total += static_cast<std::size_t>(std::popcount(a.words()[w] ^ b.words()[w]));
  return total;
}

double kernel_value(const Vector& x, const Vector& y, const MetricMatrix& metric, double sigma) {
  require(sigma > 0, ErrorKind::parameter, "sigma must be > 0");
  const double dist = mahalanobis(x, y, metric);
  return std::exp(-(dist * dist) / (sigma * sigma));
}

KlshModel::KlshModel(Matrix anchors, std::vector<std::size_t> anchor_rows, double sigma,
                     Matrix weights, std::vector<std::vector<std::size_t>> selectors,
                     std::size_t selector_size, MetricMatrix metric, std::uint64_t seed,
                     bool centered)
    : anchors_(std::move(anchors)),
      anchor_rows_(std::move(anchor_rows)),
      sigma_(sigma),
      weights_(std::move(weights)),
      selectors_(std::move(selectors)),
      t_(selector_size),
      metric_(std::move(metric)),
      seed_(seed),
      centered_(centered) {
  const std::size_t p = anchor_count();
  require(p >= 1, ErrorKind::parameter, "model needs at least one anchor");
  require(t_ >= 1 && t_ <= p, ErrorKind::parameter, "selector size must be in [1, p]");
  require(weights_.rows() >= 1, ErrorKind::parameter, "model needs at least one bit");
  require(static_cast<std::size_t>(weights_.cols()) == p, ErrorKind::consistency,
          "weights width must equal anchor count");
  require(selectors_.size() == bits(), ErrorKind::consistency, "one selector per bit required");
  require(sigma_ > 0 && std::isfinite(sigma_), ErrorKind::parameter, "sigma must be > 0");
  require(metric_.dim() == dim(), ErrorKind::parameter, "metric dimension mismatch");
  for (const auto& s : selectors_) {
    require(s.size() == t_, ErrorKind::consistency, "selector has wrong cardinality");
    for (std::size_t i : s) require(i < p, ErrorKind::consistency, "selector index out of range");
  }
  if (metric_.is_diagonal()) {
    factor_ = metric_.matrix().diagonal().cwiseMax(0.0).cwiseSqrt().transpose();  // 1 x d
    mapped_anchors_ = anchors_ * factor_.row(0).transpose().asDiagonal();
  } else {
    factor_ = metric_.factor();
    mapped_anchors_ = anchors_ * factor_;
  }
}

Vector KlshModel::kernel_row(const Eigen::Ref<const Vector>& x) const {
  require(static_cast<std::size_t>(x.size()) == dim(), ErrorKind::parameter,
          "point dimension mismatch");
  Eigen::RowVectorXd z;
  if (metric_.is_diagonal()) z = x.transpose().cwiseProduct(factor_.row(0));
  else z = x.transpose() * factor_;
  const double inv = 1.0 / (sigma_ * sigma_);
  Vector k(mapped_anchors_.rows());
  for (Eigen::Index i = 0; i < k.size(); ++i)
    k(i) = std::exp(-(mapped_anchors_.row(i) - z).squaredNorm() * inv);
  return k;
}

namespace {

double median_anchor_distance(const Matrix& mapped) {
  std::vector<double> dist;
  const Eigen::Index p = mapped.rows();
  dist.reserve(static_cast<std::size_t>(p * (p - 1) / 2));
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = i + 1; j < p; ++j)
      dist.push_back(std::sqrt((mapped.row(i) - mapped.row(j)).squaredNorm()));
  if (dist.empty()) return 0.0;
  const std::size_t mid = dist.size() / 2;
  std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid), dist.end());
  const double upper = dist[mid];
  if (dist.size() % 2) return upper;
  const double lower = *std::max_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

}  // namespace

KlshModel build_klsh(const Dataset& ds, const MetricMatrix& metric, const KlshParams& params) {
  const std::size_t p = params.anchors, t = params.selector, m = params.bits;
  require(ds.n() >= 1, ErrorKind::parameter, "dataset is empty");
  require(p >= 1 && p <= ds.n(), ErrorKind::parameter,
          "anchor count p=" + std::to_string(p) + " must be in [1, n=" + std::to_string(ds.n()) + "]");
  require(t >= 1 && t <= p, ErrorKind::parameter, "selector size t must be in [1, p]");
  require(m >= 1, ErrorKind::parameter, "bit count must be >= 1");
  require(metric.dim() == ds.d(), ErrorKind::parameter, "metric dimension mismatch");

  Rng anchor_rng(Rng::derive(params.seed, 0));
  std::vector<std::size_t> rows = anchor_rng.sample_without_replacement(ds.n(), p);
  const Dataset anchor_ds = ds.select(rows);
  const Matrix mapped = transform(anchor_ds, metric).features();

  double sigma = params.sigma.value;
  if (params.sigma.kind == SigmaMode::Kind::median_heuristic) {
    sigma = median_anchor_distance(mapped);
    if (!(sigma > 0)) sigma = 1.0;  // p = 1 or all anchors identical
  }
  require(sigma > 0 && std::isfinite(sigma), ErrorKind::parameter, "sigma must be > 0");

  const auto pp = static_cast<Eigen::Index>(p);
  Eigen::MatrixXd kernel(pp, pp);
  for (Eigen::Index i = 0; i < pp; ++i) {
    kernel(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < pp; ++j) {
      const double v = std::exp(-(mapped.row(i) - mapped.row(j)).squaredNorm() / (sigma * sigma));
      kernel(i, j) = kernel(j, i) = v;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(kernel);
  require(es.info() == Eigen::Success, ErrorKind::numerical, "kernel eigensolver failed");
  Vector inv_root(pp);
  int clamped = 0;
  for (Eigen::Index i = 0; i < pp; ++i) {
    const double lambda = es.eigenvalues()(i);
    if (lambda < -1e-8) ++clamped;
    inv_root(i) = lambda > 1e-10 ? 1.0 / std::sqrt(lambda) : 0.0;
  }
  const Eigen::MatrixXd k_inv_sqrt =
      es.eigenvectors() * inv_root.asDiagonal() * es.eigenvectors().transpose();

  Matrix weights = Matrix::Zero(static_cast<Eigen::Index>(m), pp);
  std::vector<std::vector<std::size_t>> selectors(m);
  for (std::size_t j = 0; j < m; ++j) {
    Rng bit_rng(Rng::derive(params.seed, 1'000'003 + j));
    auto sel = bit_rng.sample_without_replacement(p, t);
    std::sort(sel.begin(), sel.end());
    Vector e = Vector::Constant(pp, params.centered ? -static_cast<double>(t) / static_cast<double>(p) : 0.0);
    for (std::size_t i : sel) e(static_cast<Eigen::Index>(i)) += 1.0;
    weights.row(static_cast<Eigen::Index>(j)) = (k_inv_sqrt * e).transpose();
    selectors[j] = std::move(sel);
  }

  KlshModel model(anchor_ds.features(), std::move(rows), sigma, std::move(weights),
                  std::move(selectors), t, metric, params.seed, params.centered);
  model.clamped_eigenvalues = clamped;
  return model;
}

HashCode hash_point(const KlshModel& model, const Eigen::Ref<const Vector>& x) {
  const Vector k = model.kernel_row(x);
  const Vector scores = model.weights() * k;
  HashCode code(model.bits());
  for (std::size_t j = 0; j < model.bits(); ++j)
    code.set(j, scores(static_cast<Eigen::Index>(j)) >= 0.0);
  return code;
}

std::size_t HashTable::find(const HashCode& code) const {
  auto it = index_.find(code);
  return it == index_.end() ? npos : it->second;
}

HashTable HashTable::from_codes(std::vector<HashCode> codes) {
  HashTable table;
  table.bits = codes.empty() ? 0 : codes.front().size();
  table.bucket_of.resize(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    require(codes[i].size() == table.bits, ErrorKind::parameter, "mixed code widths");
    auto [it, inserted] = table.index_.try_emplace(codes[i], table.keys.size());
    if (inserted) {
      table.keys.push_back(codes[i]);
      table.buckets.emplace_back();
    }
    table.buckets[it->second].push_back(i);
    table.bucket_of[i] = it->second;
  }
  table.code_of = std::move(codes);
  return table;
}

HashTable hash_dataset(const KlshModel& model, const Dataset& ds, unsigned threads) {
  require(ds.d() == model.dim(), ErrorKind::parameter, "dataset dimension mismatch");
  std::vector<HashCode> codes(ds.n());
  parallel_for(ds.n(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) codes[i] = hash_point(model, ds.row(i).transpose());
  });
  return HashTable::from_codes(std::move(codes));
}

namespace {

void write_row(std::ostream& out, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  std::array<char, 64> buf;
  for (Eigen::Index j = 0; j < row.size(); ++j) {
    if (j) out << ' ';
    auto r = std::to_chars(buf.data(), buf.data() + buf.size(), row(j));
    out.write(buf.data(), r.ptr - buf.data());
  }
  out << '\n';
}

Matrix read_matrix(std::istream& in, std::size_t rows, std::size_t cols) {
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::string tok;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      require(static_cast<bool>(in >> tok), ErrorKind::format, "truncated model file");
      double v;
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      require(ec == std::errc() && ptr == tok.data() + tok.size(), ErrorKind::format,
              "bad number '" + tok + "' in model file");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
  return m;
}

void expect_key(std::istream& in, const std::string& key) {
  std::string got;
  require(static_cast<bool>(in >> got) && got == key, ErrorKind::format,
          "model file: expected '" + key + "', got '" + got + "'");
}

}  // namespace

void save_model(const KlshModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
  std::array<char, 64> buf;
  auto r = std::to_chars(buf.data(), buf.data() + buf.size(), model.sigma());
  out << "klshc-model 1\n"
      << "dim " << model.dim() << '\n'
      << "anchors " << model.anchor_count() << '\n'
      << "bits " << model.bits() << '\n'
      << "selector " << model.selector_size() << '\n'
      << "seed " << model.seed() << '\n'
      << "centered " << (model.centered() ? 1 : 0) << '\n'
      << "sigma " << std::string_view(buf.data(), static_cast<std::size_t>(r.ptr - buf.data())) << '\n'
      << "metric\n";
  for (Eigen::Index i = 0; i < model.metric().matrix().rows(); ++i) write_row(out, model.metric().matrix().row(i));
  out << "anchor_rows\n";
  for (std::size_t i = 0; i < model.anchor_rows().size(); ++i)
    out << (i ? " " : "") << model.anchor_rows()[i];
  out << "\nanchor_points\n";
  for (Eigen::Index i = 0; i < model.anchors().rows(); ++i) write_row(out, model.anchors().row(i));
  out << "selectors\n";
  for (const auto& s : model.selectors()) {
    for (std::size_t i = 0; i < s.size(); ++i) out << (i ? " " : "") << s[i];
    out << '\n';
  }
  out << "weights\n";
  for (Eigen::Index i = 0; i < model.weights().rows(); ++i) write_row(out, model.weights().row(i));
  require(static_cast<bool>(out), ErrorKind::io, "write failed: " + path.string());
}

KlshModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
  int version = 0;
  expect_key(in, "klshc-model");
  in >> version;
  require(version == 1, ErrorKind::format, "unsupported model version");
  std::size_t d, p, m, t;
  std::uint64_t seed;
  std::string sigma_tok;
  expect_key(in, "dim"); in >> d;
  expect_key(in, "anchors"); in >> p;
  expect_key(in, "bits"); in >> m;
  expect_key(in, "selector"); in >> t;
  expect_key(in, "seed"); in >> seed;
  int centered = 1;
  expect_key(in, "centered"); in >> centered;
  expect_key(in, "sigma"); in >> sigma_tok;
  require(static_cast<bool>(in), ErrorKind::format, "truncated model header");
  double sigma;
  auto [ptr, ec] = std::from_chars(sigma_tok.data(), sigma_tok.data() + sigma_tok.size(), sigma);
  require(ec == std::errc(), ErrorKind::format, "bad sigma");
  expect_key(in, "metric");
  Matrix metric = read_matrix(in, d, d);
  expect_key(in, "anchor_rows");
  std::vector<std::size_t> rows(p);
  for (auto& r : rows) require(static_cast<bool>(in >> r), ErrorKind::format, "bad anchor rows");
  expect_key(in, "anchor_points");
  Matrix anchors = read_matrix(in, p, d);
  expect_key(in, "selectors");
  std::vector<std::vector<std::size_t>> selectors(m, std::vector<std::size_t>(t));
  for (auto& s : selectors)
    for (auto& i : s) require(static_cast<bool>(in >> i), ErrorKind::format, "bad selectors");
  expect_key(in, "weights");
  Matrix weights = read_matrix(in, m, p);
  return KlshModel(std::move(anchors), std::move(rows), sigma, std::move(weights),
                   std::move(selectors), t, MetricMatrix(std::move(metric)), seed, centered != 0);
}

void save_codes(const HashTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
  out << "instance_index,code\n";
  for (std::size_t i = 0; i < table.size(); ++i) out << i << ',' << table.code_of[i].to_hex() << '\n';
  require(static_cast<bool>(out), ErrorKind::io, "write failed: " + path.string());
}

}  // namespace klshc
