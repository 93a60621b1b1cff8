#include "voxadv/embedding.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "voxadv/error.hpp"

namespace voxadv {

namespace fs = std::filesystem;

EmbeddingDump collect_embeddings(const BackboneParams<float>& student, const FusionParams<float>& fusion,
                                 const DatasetManifest& m, Preset preset, int n_per_class, std::uint64_t seed,
                                 std::vector<std::string>* warnings) {
    if (n_per_class <= 0) throw DomainError("n_per_class must be positive");
    EmbeddingDump d;
    std::size_t index = 0;
    for (Split split : {Split::labeled, Split::unlabeled}) {
        const Domain domain = split == Split::labeled ? Domain::labeled : Domain::unlabeled;
        for (const CaseEntry* c : m.with_split(split)) {
            const std::uint64_t case_seed = derive_seed(seed, {index++});
            if (!c->mask) {
                if (warnings) warnings->push_back("case " + c->id + ": no mask, skipped");
                continue;
            }
            const Volume v = preprocess(read_volume(m.resolve(c->volume)), preset);
            LabelMask truth = read_mask(m.resolve(*c->mask), m.num_classes);
            if (!(truth.extent == v.extent())) truth = resample_nearest(truth, v.extent());
            const auto samples = sample_voxel_positions(truth, n_per_class, case_seed);
            std::vector<char> seen(static_cast<std::size_t>(m.num_classes), 0);
            for (const auto& s : samples) seen[static_cast<std::size_t>(s.class_id)] = 1;
            for (int k = 0; k < m.num_classes; ++k)
                if (!seen[static_cast<std::size_t>(k)] && warnings)
                    warnings->push_back("case " + c->id + ": class " + std::to_string(k) + " empty, skipped");
            if (samples.empty()) continue;
            std::vector<std::size_t> pos;
            for (const auto& s : samples) pos.push_back(s.voxel);
            const auto out = backbone_forward(student, v);
            const Matrix<float> f = fuse_at(out.pyramid, fusion, pos);
            for (std::size_t i = 0; i < samples.size(); ++i) {
                std::vector<double> row(f.row(i).begin(), f.row(i).end());
                d.features.append_row(row);
                d.class_ids.push_back(samples[i].class_id);
                d.domains.push_back(domain);
                d.case_ids.push_back(c->id);
            }
        }
    }
    return d;
}

Projection2D fit_pca_2d(const Matrix<double>& x) {
    const auto n = static_cast<Eigen::Index>(x.rows());
    const auto dim = static_cast<Eigen::Index>(x.cols());
    if (n < 2 || dim < 2) throw ShapeError("PCA needs at least two rows and two columns");
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const RowMat X = Eigen::Map<const RowMat>(x.data(), n, dim);
    const Eigen::RowVectorXd mu = X.colwise().mean();
    const RowMat centered = X.rowwise() - mu;
    const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw DomainError("PCA eigen-decomposition failed");
    Projection2D p;
    p.mean.assign(mu.data(), mu.data() + dim);
    for (int a = 0; a < 2; ++a) {
        const Eigen::Index col = dim - 1 - a;
        Eigen::VectorXd v = eig.eigenvectors().col(col);
        for (Eigen::Index k = 0; k < dim; ++k) {
            if (v(k) != 0.0) {
                if (v(k) < 0.0) v = -v;
                break;
            }
        }
        p.axes[static_cast<std::size_t>(a)].assign(v.data(), v.data() + dim);
        p.variance[static_cast<std::size_t>(a)] = eig.eigenvalues()(col);
    }
    return p;
}

Matrix<double> project(const Projection2D& p, const Matrix<double>& x) {
    if (x.cols() != p.mean.size()) throw ShapeError("projection width mismatch");
    Matrix<double> out(x.rows(), 2);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t a = 0; a < 2; ++a) {
            double s = 0.0;
            for (std::size_t k = 0; k < x.cols(); ++k) s += (x(i, k) - p.mean[k]) * p.axes[a][k];
            out(i, a) = s;
        }
    return out;
}

double fisher_score(const Matrix<double>& x, const std::vector<int>& labels) {
    if (labels.size() != x.rows()) throw ShapeError("fisher_score: one label per row required");
    if (x.rows() == 0) throw ShapeError("fisher_score: empty input");
    const std::size_t dim = x.cols();
    std::vector<double> mu(dim, 0.0);
    std::map<int, std::pair<std::vector<double>, std::size_t>> cls;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto& [sum, count] = cls[labels[i]];
        if (sum.empty()) sum.assign(dim, 0.0);
        for (std::size_t k = 0; k < dim; ++k) {
            sum[k] += x(i, k);
            mu[k] += x(i, k);
        }
        ++count;
    }
    for (double& v : mu) v /= static_cast<double>(x.rows());
    for (auto& [c, sc] : cls)
        for (double& v : sc.first) v /= static_cast<double>(sc.second);
    double sb = 0.0, sw = 0.0;
    for (const auto& [c, sc] : cls)
        for (std::size_t k = 0; k < dim; ++k) sb += static_cast<double>(sc.second) * (sc.first[k] - mu[k]) * (sc.first[k] - mu[k]);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto& centroid = cls[labels[i]].first;
        for (std::size_t k = 0; k < dim; ++k) sw += (x(i, k) - centroid[k]) * (x(i, k) - centroid[k]);
    }
    if (sw == 0.0) return sb > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    return sb / sw;
}

std::string scatter_svg(const Matrix<double>& coords, const std::vector<int>& classes, const std::vector<Domain>& domains,
                        const std::string& title) {
    static const char* palette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3",
                                    "#937860", "#da8bc3", "#8c8c8c", "#ccb974", "#64b5cd"};
    constexpr double W = 640, H = 520, M = 40;
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (coords.rows() > 0) {
        x0 = x1 = coords(0, 0);
        y0 = y1 = coords(0, 1);
        for (std::size_t i = 0; i < coords.rows(); ++i) {
            x0 = std::min(x0, coords(i, 0));
            x1 = std::max(x1, coords(i, 0));
            y0 = std::min(y0, coords(i, 1));
            y1 = std::max(y1, coords(i, 1));
        }
    }
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1;
    auto sx = [&](double v) { return M + (v - x0) / (x1 - x0) * (W - 2 * M); };
    auto sy = [&](double v) { return H - M - (v - y0) / (y1 - y0) * (H - 2 * M - 20); };

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << ' '
        << H << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" << title
        << "</text>\n";
    out << "<rect x=\"" << M << "\" y=\"" << M + 20 << "\" width=\"" << W - 2 * M << "\" height=\"" << H - 2 * M - 20
        << "\" fill=\"none\" stroke=\"#999\"/>\n";
    char buf[160];
    for (std::size_t i = 0; i < coords.rows(); ++i) {
        const char* color = palette[static_cast<std::size_t>(classes[i]) % 10];
        const double px = sx(coords(i, 0)), py = sy(coords(i, 1));
        if (domains[i] == Domain::labeled)
            std::snprintf(buf, sizeof buf, "<path d=\"M%.1f %.1fl3 5h-6z\" fill=\"%s\" fill-opacity=\"0.6\"/>\n", px, py - 3, color);
        else
            std::snprintf(buf, sizeof buf, "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"2.5\" fill=\"%s\" fill-opacity=\"0.6\"/>\n", px, py, color);
        out << buf;
    }
    out << "<text x=\"" << M << "\" y=\"" << H - 12
        << "\" font-family=\"sans-serif\" font-size=\"11\">triangles: labeled, circles: unlabeled; colour: class</text>\n";
    out << "</svg>\n";
    return out.str();
}

void write_embedding_csv(const fs::path& path, const EmbeddingDump& d, const Matrix<double>& coords) {
    if (coords.rows() != d.size()) throw ShapeError("embedding coordinates do not match the dump");
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string());
    out << "case,domain,class,pc1,pc2";
    for (std::size_t k = 0; k < d.features.cols(); ++k) out << ",f" << k;
    out << '\n';
    char buf[40];
    for (std::size_t i = 0; i < d.size(); ++i) {
        out << d.case_ids[i] << ',' << to_string(d.domains[i]) << ',' << d.class_ids[i];
        for (std::size_t a = 0; a < 2; ++a) {
            std::snprintf(buf, sizeof buf, ",%.17g", coords(i, a));
            out << buf;
        }
        for (std::size_t k = 0; k < d.features.cols(); ++k) {
            std::snprintf(buf, sizeof buf, ",%.17g", d.features(i, k));
            out << buf;
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

EmbeddingDump read_embedding_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw IoError(path.string() + ": empty embedding file");
    EmbeddingDump d;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
        if (f.size() < 6) throw IoError(path.string() + ": malformed embedding row");
        d.case_ids.push_back(f[0]);
        d.domains.push_back(f[1] == "labeled" ? Domain::labeled : Domain::unlabeled);
        d.class_ids.push_back(std::stoi(f[2]));
        std::vector<double> row;
        for (std::size_t k = 5; k < f.size(); ++k) row.push_back(std::stod(f[k]));
        d.features.append_row(row);
    }
    return d;
}

}  // namespace voxadv
