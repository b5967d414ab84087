#include "klshc/dataset.hpp"

#include <zlib.h>

#include <array>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string_view>

namespace klshc {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parameter: return "parameter";
    case ErrorKind::format: return "format";
    case ErrorKind::consistency: return "consistency";
    case ErrorKind::io: return "I/O";
    case ErrorKind::numerical: return "numerical";
    case ErrorKind::configuration: return "configuration";
    case ErrorKind::degenerate_constraints: return "degenerate-constraint";
    case ErrorKind::insufficient_data: return "insufficient-data";
    case ErrorKind::state: return "state";
    case ErrorKind::evaluation: return "evaluation";
  }
  return "unknown";
}

Dataset::Dataset(Matrix features, std::vector<int> labels)
    : features_(std::move(features)), labels_(std::move(labels)) {
  require(labels_.empty() || labels_.size() == n(), ErrorKind::consistency,
          "label count " + std::to_string(labels_.size()) + " does not match row count " +
              std::to_string(n()));
  require(features_.allFinite(), ErrorKind::parameter, "features must be finite");
  for (int l : labels_) {
    require(l >= 0 || l == kUnlabeled, ErrorKind::parameter, "labels must be >= 0 or unlabeled");
  }
}

Dataset Dataset::select(const std::vector<std::size_t>& rows) const {
  Matrix out(static_cast<Eigen::Index>(rows.size()), features_.cols());
  std::vector<int> labels;
  if (has_labels()) labels.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    require(rows[r] < n(), ErrorKind::parameter, "row index out of range");
    out.row(static_cast<Eigen::Index>(r)) = row(rows[r]);
    if (has_labels()) labels.push_back(labels_[rows[r]]);
  }
  return Dataset(std::move(out), std::move(labels));
}

void ConstraintSet::validate(std::size_t n) const {
  auto check = [n](const std::vector<IndexPair>& pairs) {
    for (const auto& [i, j] : pairs) {
      require(i != j, ErrorKind::parameter, "constraint pair (i,i)");
      require(i < n && j < n, ErrorKind::parameter, "constraint index out of range");
    }
  };
  check(similar);
  check(dissimilar);
  std::set<IndexPair> seen;
  for (auto [i, j] : similar) seen.emplace(std::min(i, j), std::max(i, j));
  for (auto [i, j] : dissimilar) {
    require(!seen.count({std::min(i, j), std::max(i, j)}), ErrorKind::consistency,
            "pair appears in both similar and dissimilar sets");
  }
}

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), ErrorKind::io, "no such file: " + path.string());
  std::vector<unsigned char> out;
  gzFile f = gzopen(path.c_str(), "rb");  // reads plain files unchanged
  require(f != nullptr, ErrorKind::io, "cannot open " + path.string());
  std::array<unsigned char, 1 << 16> buf;
  int got;
  while ((got = gzread(f, buf.data(), static_cast<unsigned>(buf.size()))) > 0) {
    out.insert(out.end(), buf.begin(), buf.begin() + got);
  }
  const bool failed = got < 0;
  gzclose(f);
  require(!failed, ErrorKind::io, "read failed: " + path.string());
  return out;
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto img = read_file(images);
  const auto lab = read_file(labels);
  require(img.size() >= 4 && lab.size() >= 4, ErrorKind::io, "truncated IDX header");
  require(be32(img, 0) == 2051, ErrorKind::format, "bad image magic in " + images.string());
  require(be32(lab, 0) == 2049, ErrorKind::format, "bad label magic in " + labels.string());
  require(img.size() >= 16 && lab.size() >= 8, ErrorKind::io, "truncated IDX header");

  const std::size_t count = be32(img, 4);
  const std::size_t rows = be32(img, 8);
  const std::size_t cols = be32(img, 12);
  require(count == be32(lab, 4), ErrorKind::consistency,
          "image count " + std::to_string(count) + " != label count " +
              std::to_string(be32(lab, 4)));
  const std::size_t d = rows * cols;
  require(img.size() >= 16 + count * d, ErrorKind::io, "truncated image data");
  require(lab.size() >= 8 + count, ErrorKind::io, "truncated label data");

  Matrix features(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned char* px = img.data() + 16 + i * d;
    for (std::size_t j = 0; j < d; ++j) {
      features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = px[j] / 255.0;
    }
  }
  std::vector<int> y(lab.begin() + 8, lab.begin() + 8 + static_cast<std::ptrdiff_t>(count));
  return Dataset(std::move(features), std::move(y));
}

Dataset load_csv(const std::filesystem::path& path, bool label_column) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
  std::vector<double> values;
  std::vector<int> labels;
  std::size_t d = 0, n = 0, lineno = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (;;) {
      auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    const std::size_t width = fields.size() - (label_column ? 1 : 0);
    require(width >= 1, ErrorKind::format, "line " + std::to_string(lineno) + ": no features");
    if (n == 0) d = width;
    require(width == d, ErrorKind::format,
            "line " + std::to_string(lineno) + ": expected " + std::to_string(d) + " features");
    for (std::size_t j = 0; j < width; ++j) {
      auto f = fields[j];
      while (!f.empty() && f.front() == ' ') f.remove_prefix(1);
      double v;
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      require(ec == std::errc() && ptr == f.data() + f.size(), ErrorKind::format,
              "line " + std::to_string(lineno) + ": bad number '" + std::string(f) + "'");
      values.push_back(v);
    }
    if (label_column) {
      auto f = fields.back();
      while (!f.empty() && f.front() == ' ') f.remove_prefix(1);
      int l;
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), l);
      require(ec == std::errc() && ptr == f.data() + f.size(), ErrorKind::format,
              "line " + std::to_string(lineno) + ": bad label '" + std::string(f) + "'");
      labels.push_back(l < 0 ? kUnlabeled : l);
    }
    ++n;
  }
  Matrix features = Eigen::Map<Matrix>(values.data(), static_cast<Eigen::Index>(n),
                                       static_cast<Eigen::Index>(d));
  return Dataset(std::move(features), std::move(labels));
}

void save_csv(const Dataset& ds, const std::filesystem::path& path, bool label_column) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
  std::array<char, 64> buf;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    for (std::size_t j = 0; j < ds.d(); ++j) {
      if (j) out << ',';
      auto r = std::to_chars(buf.data(), buf.data() + buf.size(),
                             ds.features()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      out.write(buf.data(), r.ptr - buf.data());
    }
    if (label_column) out << ',' << ds.label(i);
    out << '\n';
  }
  require(static_cast<bool>(out), ErrorKind::io, "write failed: " + path.string());
}

Dataset synth_blobs(int k, int n_per, int d, double spread, std::uint64_t seed) {
  require(k >= 1 && n_per >= 1 && d >= 1, ErrorKind::parameter, "k, n_per and d must be >= 1");
  require(spread > 0 && std::isfinite(spread), ErrorKind::parameter, "spread must be > 0");
  Rng centers_rng(Rng::derive(seed, 0));
  Matrix centers(k, d);
  for (int c = 0; c < k; ++c)
    for (int j = 0; j < d; ++j) centers(c, j) = -10.0 + 20.0 * centers_rng.uniform();

  Rng noise(Rng::derive(seed, 1));
  Matrix x(static_cast<Eigen::Index>(k) * n_per, d);
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(k) * n_per);
  for (int c = 0; c < k; ++c) {
    for (int i = 0; i < n_per; ++i) {
      const Eigen::Index r = static_cast<Eigen::Index>(c) * n_per + i;
      for (int j = 0; j < d; ++j) x(r, j) = centers(c, j) + spread * noise.normal();
      labels.push_back(c);
    }
  }
  return Dataset(std::move(x), std::move(labels));
}

ConstraintSet make_constraints(const Dataset& ds, const std::set<int>& labeled_classes,
                               std::size_t per_class, std::uint64_t seed) {
  require(!labeled_classes.empty(), ErrorKind::parameter, "labeled_classes is empty");
  require(ds.has_labels(), ErrorKind::insufficient_data, "dataset has no labels");
  std::map<int, std::vector<std::size_t>> rows_of;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    if (labeled_classes.count(ds.label(i))) rows_of[ds.label(i)].push_back(i);
  }
  std::vector<std::pair<int, std::vector<std::size_t>>> picked;
  for (int c : labeled_classes) {
    const auto& rows = rows_of[c];
    require(rows.size() >= per_class, ErrorKind::insufficient_data,
            "class " + std::to_string(c) + " has " + std::to_string(rows.size()) +
                " labeled rows, need " + std::to_string(per_class));
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(c)));
    std::vector<std::size_t> sample;
    for (std::size_t idx : rng.sample_without_replacement(rows.size(), per_class))
      sample.push_back(rows[idx]);
    picked.emplace_back(c, std::move(sample));
  }

  ConstraintSet cs;
  auto add = [](std::vector<IndexPair>& into, std::size_t a, std::size_t b) {
    into.emplace_back(std::min(a, b), std::max(a, b));
  };
  for (std::size_t ca = 0; ca < picked.size(); ++ca) {
    const auto& a = picked[ca].second;
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = i + 1; j < a.size(); ++j) add(cs.similar, a[i], a[j]);
    for (std::size_t cb = ca + 1; cb < picked.size(); ++cb)
      for (std::size_t i : a)
        for (std::size_t j : picked[cb].second) add(cs.dissimilar, i, j);
  }
  std::sort(cs.similar.begin(), cs.similar.end());
  std::sort(cs.dissimilar.begin(), cs.dissimilar.end());
  return cs;
}

Dataset subset_by_class(const Dataset& ds, const std::set<int>& classes, std::size_t n,
                        std::uint64_t seed) {
  require(ds.has_labels(), ErrorKind::insufficient_data, "dataset has no labels");
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const int l = ds.label(i);
    if (l != kUnlabeled && (classes.empty() || classes.count(l))) eligible.push_back(i);
  }
  require(eligible.size() >= n, ErrorKind::insufficient_data,
          "requested " + std::to_string(n) + " rows but only " +
              std::to_string(eligible.size()) + " match");
  Rng rng(seed);
  auto pick = rng.sample_without_replacement(eligible.size(), n);
  std::sort(pick.begin(), pick.end());
  std::vector<std::size_t> rows;
  rows.reserve(n);
  for (std::size_t p : pick) rows.push_back(eligible[p]);
  return ds.select(rows);
}

}  // namespace klshc
