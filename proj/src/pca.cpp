#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "clarify/synth.hpp"

namespace clarify::synth {
namespace {

using Matrix = std::vector<std::vector<double>>;

// Cyclic Jacobi eigen-decomposition of a symmetric matrix. On return a holds
// the eigenvalues on its diagonal and v the eigenvectors as columns.
void jacobi_eigen(Matrix& a, Matrix& v) {
    const std::size_t n = a.size();
    v.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;

    double scale = 0.0;
    for (const auto& row : a)
        for (double x : row) scale += x * x;
    if (scale == 0.0) return;

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
        if (off <= 1e-30 * scale) break;

        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (a[p][q] == 0.0) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v[k][p], vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
}

}  // namespace

PcaResult pca(std::span<const std::vector<double>> vectors, std::size_t k) {
    if (vectors.size() < 2) throw std::invalid_argument("pca: need at least two vectors");
    const std::size_t d = vectors.front().size();
    if (d == 0) throw std::invalid_argument("pca: vectors are empty");
    for (const auto& v : vectors)
        if (v.size() != d) throw std::invalid_argument("pca: vectors differ in dimension");
    if (k == 0 || k > d) throw std::invalid_argument("pca: k must be within [1, d]");

    const auto n = vectors.size();
    PcaResult r;
    r.mean.assign(d, 0.0);
    for (const auto& v : vectors)
        for (std::size_t j = 0; j < d; ++j) r.mean[j] += v[j];
    for (auto& m : r.mean) m /= static_cast<double>(n);

    Matrix centered(n, std::vector<double>(d));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) centered[i][j] = vectors[i][j] - r.mean[j];

    Matrix cov(d, std::vector<double>(d, 0.0));
    for (const auto& row : centered)
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = a; b < d; ++b) cov[a][b] += row[a] * row[b];
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = a; b < d; ++b) {
            cov[a][b] /= static_cast<double>(n - 1);
            cov[b][a] = cov[a][b];
        }

    Matrix eigvec;
    jacobi_eigen(cov, eigvec);

    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return cov[x][x] > cov[y][y]; });

    double trace = 0.0;
    for (std::size_t j = 0; j < d; ++j) trace += std::max(cov[j][j], 0.0);

    for (std::size_t c = 0; c < k; ++c) {
        const auto col = order[c];
        std::vector<double> comp(d);
        for (std::size_t j = 0; j < d; ++j) comp[j] = eigvec[j][col];
        std::size_t big = 0;
        for (std::size_t j = 1; j < d; ++j)
            if (std::abs(comp[j]) > std::abs(comp[big])) big = j;
        if (comp[big] < 0)
            for (auto& x : comp) x = -x;
        const double lambda = cov[col][col];
        r.eigenvalues.push_back(lambda);
        r.explained_variance.push_back(trace > 0 ? std::clamp(lambda / trace, 0.0, 1.0) : 0.0);
        r.components.push_back(std::move(comp));
    }

    r.projections.assign(n, std::vector<double>(k, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < k; ++c)
            for (std::size_t j = 0; j < d; ++j)
                r.projections[i][c] += centered[i][j] * r.components[c][j];
    return r;
}

}  // namespace clarify::synth
