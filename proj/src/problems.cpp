#include "rfextra/problems.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "rfextra/rng.hpp"

namespace rfextra {

double Problem::global_value(const Matrix& x) const {
  double sum = 0.0;
  for (int i = 0; i < agents(); ++i) sum += local_value(i, x);
  return sum / agents();
}

Matrix Problem::global_gradient(const Matrix& x) const {
  Matrix g = local_gradient(0, x);
  for (int i = 1; i < agents(); ++i) g += local_gradient(i, x);
  return g / agents();
}

LocalGradient Problem::local_gradient_fn(int agent) const {
  return [this, agent](const Matrix& x) { return local_gradient(agent, x); };
}

LocalGradient Problem::global_gradient_fn() const {
  return [this](const Matrix& x) { return global_gradient(x); };
}

// ---------------------------------------------------------------- PCA

double PcaProblem::local_value(int agent, const Matrix& x) const {
  return -0.5 * (x.transpose() * gram[agent] * x).trace();
}

Matrix PcaProblem::local_gradient(int agent, const Matrix& x) const {
  return -(gram[agent] * x);
}

Matrix PcaProblem::global_gradient(const Matrix& x) const {
  return -(pooled_gram * x) / n;
}

void PcaProblem::rebuild_gram_cache() {
  gram.clear();
  gram.reserve(blocks.size());
  for (const Matrix& a : blocks) {
    Matrix g = Matrix::Zero(d, d);
    g.selfadjointView<Eigen::Lower>().rankUpdate(a.transpose());
    gram.emplace_back(g.selfadjointView<Eigen::Lower>());
  }
  pooled_gram = Matrix::Zero(d, d);
  for (const Matrix& g : gram) pooled_gram += g;
}

PcaProblem generate_synthetic_pca(int n, int m_per_agent, int d, int r,
                                  double xi, std::uint64_t seed) {
  if (n < 1 || m_per_agent < 1 || d < 1 || r < 1 || r > d)
    throw std::invalid_argument("generate_synthetic_pca: bad dimensions");
  if (static_cast<long>(m_per_agent) * n < d)
    throw std::invalid_argument("generate_synthetic_pca: need n*m_per_agent >= d");
  if (!(xi > 0.0 && xi < 1.0))
    throw std::invalid_argument("generate_synthetic_pca: xi must lie in (0, 1)");

  const int m = n * m_per_agent;
  Rng rng(seed);
  const Matrix b = rng.gaussian_matrix(m, d);
  Eigen::JacobiSVD<Matrix> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);

  Vector damped = svd.singularValues();
  double factor = 1.0;
  for (int j = 0; j < d; ++j) {
    factor *= xi;  // Σ̃_j = Σ_j ξ^{j+1}, geometric decay of the spectrum
    damped(j) *= factor;
  }
  const Matrix a = svd.matrixU() * damped.asDiagonal() * svd.matrixV().transpose();

  PcaProblem p;
  p.n = n;
  p.d = d;
  p.r = r;
  p.alpha_den = m_per_agent;
  p.blocks.reserve(n);
  for (int i = 0; i < n; ++i)
    p.blocks.push_back(a.middleRows(static_cast<Eigen::Index>(i) * m_per_agent,
                                    m_per_agent));
  p.rebuild_gram_cache();
  p.ref = svd.matrixV().leftCols(r);
  return p;
}

// ---------------------------------------------------------------- IDX i/o

static std::uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error("idx: truncated header in '" + path + "'");
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

static void write_be32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

IdxImages read_idx_images(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("idx: cannot open '" + path + "'");
  const std::uint32_t magic = read_be32(in, path);
  if (magic != 0x00000803u)
    throw std::runtime_error("idx: bad magic number in '" + path + "'");
  IdxImages img;
  img.count = read_be32(in, path);
  img.rows = read_be32(in, path);
  img.cols = read_be32(in, path);
  const std::size_t total =
      std::size_t(img.count) * img.rows * img.cols;
  img.pixels.resize(total);
  if (total > 0 &&
      !in.read(reinterpret_cast<char*>(img.pixels.data()),
               static_cast<std::streamsize>(total)))
    throw std::runtime_error("idx: truncated pixel data in '" + path + "'");
  return img;
}

void write_idx_images(const std::string& path, const IdxImages& img) {
  if (img.pixels.size() != std::size_t(img.count) * img.rows * img.cols)
    throw std::invalid_argument("idx: pixel buffer does not match header");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("idx: cannot open '" + path + "' for writing");
  write_be32(out, 0x00000803u);
  write_be32(out, img.count);
  write_be32(out, img.rows);
  write_be32(out, img.cols);
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw std::runtime_error("idx: write failed for '" + path + "'");
}

PcaProblem load_mnist_pca(const std::string& images_path, int n, int r,
                          std::uint64_t seed) {
  const IdxImages img = read_idx_images(images_path);
  const int d = static_cast<int>(img.rows * img.cols);
  if (n < 1 || img.count == 0 || img.count % static_cast<std::uint32_t>(n) != 0)
    throw std::invalid_argument(
        "load_mnist_pca: sample count must be divisible by the agent count");
  if (r < 1 || r > d) throw std::invalid_argument("load_mnist_pca: bad rank");

  const int m = static_cast<int>(img.count) / n;
  std::vector<std::uint32_t> perm(img.count);
  std::iota(perm.begin(), perm.end(), 0u);
  Rng rng(seed);
  rng.shuffle(perm);

  PcaProblem p;
  p.n = n;
  p.d = d;
  p.r = r;
  p.alpha_den = static_cast<double>(img.count);
  p.blocks.assign(n, Matrix(m, d));
  for (int i = 0; i < n; ++i) {
    Matrix& block = p.blocks[i];
    for (int t = 0; t < m; ++t) {
      const std::size_t row = perm[std::size_t(i) * m + t];
      const std::uint8_t* px = img.pixels.data() + row * std::size_t(d);
      for (int j = 0; j < d; ++j) block(t, j) = px[j] / 255.0;
    }
  }
  p.rebuild_gram_cache();

  Eigen::SelfAdjointEigenSolver<Matrix> es(p.pooled_gram);
  Matrix ref(d, r);
  for (int j = 0; j < r; ++j) ref.col(j) = es.eigenvectors().col(d - 1 - j);
  p.ref = ref;
  return p;
}

// ---------------------------------------------------------------- LRMC

Matrix LrmcProblem::local_factor(int agent, const Matrix& x) const {
  const Matrix& a = blocks[agent];
  const Matrix& mask = masks[agent];
  const Eigen::Index ti = a.cols();
  Matrix v = Matrix::Zero(r, ti);
  Matrix g(r, r);
  Vector rhs(r);
  for (Eigen::Index t = 0; t < ti; ++t) {
    g.setZero();
    rhs.setZero();
    int observed = 0;
    for (int i = 0; i < d; ++i) {
      if (mask(i, t) > 0.5) {
        const auto xrow = x.row(i);
        g.selfadjointView<Eigen::Lower>().rankUpdate(xrow.transpose());
        rhs += a(i, t) * xrow.transpose();
        ++observed;
      }
    }
    if (observed == 0) continue;  // unobserved column contributes nothing
    g.diagonal().array() += ridge;
    v.col(t) = g.selfadjointView<Eigen::Lower>().ldlt().solve(rhs);
  }
  return v;
}

double LrmcProblem::local_value(int agent, const Matrix& x) const {
  const Matrix v = local_factor(agent, x);
  const Matrix res = (x * v - blocks[agent]).cwiseProduct(masks[agent]);
  return 0.5 * res.squaredNorm();
}

Matrix LrmcProblem::local_gradient(int agent, const Matrix& x) const {
  const Matrix v = local_factor(agent, x);
  const Matrix res = (x * v - blocks[agent]).cwiseProduct(masks[agent]);
  return res * v.transpose();
}

LrmcProblem generate_lrmc(int n, int d, int r, int T, double noise,
                          std::uint64_t seed, double ridge,
                          double mask_rate_override) {
  if (n < 1 || d < 1 || T < 1 || r < 1 || r > std::min(d, T))
    throw std::invalid_argument("generate_lrmc: bad dimensions");
  if (T % n != 0)
    throw std::invalid_argument("generate_lrmc: T must be divisible by n");
  if (noise < 0.0) throw std::invalid_argument("generate_lrmc: negative noise");

  Rng rng(seed);
  const Matrix l = rng.gaussian_matrix(d, r);
  const Matrix rr = rng.gaussian_matrix(r, T);
  Matrix a = l * rr;
  if (noise > 0.0) a += noise * rng.gaussian_matrix(d, T);

  const double mu = mask_rate_override > 0.0
                        ? mask_rate_override
                        : double(r) * (d + T - r) / (double(d) * T);
  Matrix mask(d, T);
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < d; ++i) mask(i, t) = rng.uniform() < mu ? 1.0 : 0.0;

  LrmcProblem p;
  p.n = n;
  p.d = d;
  p.r = r;
  p.T = T;
  p.ridge = ridge;
  p.mask_rate = mu;
  const int ti = T / n;
  for (int i = 0; i < n; ++i) {
    p.blocks.push_back(a.middleCols(static_cast<Eigen::Index>(i) * ti, ti));
    p.masks.push_back(mask.middleCols(static_cast<Eigen::Index>(i) * ti, ti));
  }
  return p;
}

}  // namespace rfextra
