#ifndef STMTK_DMD_HPP
#define STMTK_DMD_HPP

// Exact dynamic mode decomposition of an STMap intensity plane. The reduced
// operator is built from a truncated SVD of the prior snapshots; modes are
// lifted back with the posterior matrix, and the low-rank background is the
// reconstruction over near-stationary eigenvalues.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "stmtk/binio.hpp"
#include "stmtk/errors.hpp"
#include "stmtk/stmap.hpp"

namespace stmtk {

using Complex = std::complex<double>;

// Prior/posterior matrices offset by one frame: posterior = A * prior.
struct SnapshotPair {
    Eigen::MatrixXd prior;      // columns 1..m-1 of the source
    Eigen::MatrixXd posterior;  // columns 2..m
    double frame_rate = 0.0;
};

inline SnapshotPair make_snapshots(const GrayMap& gray, double frame_rate = 0.0) {
    const Eigen::Index m = gray.cols();
    if (m < 2) throw TooFewFrames("snapshot pair needs at least 2 columns, got " +
                                  std::to_string(m));
    SnapshotPair snap;
    snap.prior = gray.leftCols(m - 1);
    snap.posterior = gray.rightCols(m - 1);
    snap.frame_rate = frame_rate;
    return snap;
}

// Truncation policy: keep singular values reaching a cumulative energy
// fraction (sigma^2), or a user-fixed rank. Values below
// 1e-12 * sigma_max are treated as zero.
struct RankRule {
    enum class Kind { energy, fixed };
    Kind kind = Kind::energy;
    double energy = 0.999;
    int rank = 0;

    static RankRule by_energy(double fraction) { return {Kind::energy, fraction, 0}; }
    static RankRule by_rank(int r) { return {Kind::fixed, 0.0, r}; }
};

inline constexpr double kSingularValueFloor = 1e-12;

struct DmdModes {
    Eigen::MatrixXcd modes;        // n x k, unit-norm columns (phi_j)
    Eigen::VectorXcd eigenvalues;  // k (lambda_j)
    Eigen::VectorXcd amplitudes;   // k (b_j); empty until computed
    int rank = 0;
    int frame_count = 0;      // m of the source map
    double frame_rate = 0.0;  // 0 means "per frame" units in diagnostics
    double fit_residual = 0.0;  // ||X' - A_r X||_F / ||X'||_F on the snapshots
    double phi_condition = 0.0;
    bool ill_conditioned = false;
    bool amplitudes_computed = false;
};

namespace detail {

inline Eigen::BDCSVD<Eigen::MatrixXd> thin_svd(const Eigen::MatrixXd& a) {
    return Eigen::BDCSVD<Eigen::MatrixXd>(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
}

inline Complex pow_int(Complex base, long long e) {
    Complex acc(1.0, 0.0);
    while (e > 0) {
        if (e & 1) acc *= base;
        base *= base;
        e >>= 1;
    }
    return acc;
}

}  // namespace detail

inline DmdModes compute_dmd(const SnapshotPair& snap, const RankRule& rule = RankRule{}) {
    const Eigen::MatrixXd& x = snap.prior;
    const Eigen::MatrixXd& xp = snap.posterior;
    if (x.rows() != xp.rows() || x.cols() != xp.cols())
        throw ShapeMismatch("snapshot matrices must share shape");

    const auto svd = detail::thin_svd(x);
    const Eigen::VectorXd& sv = svd.singularValues();
    if (sv.size() == 0 || sv(0) <= 0.0) throw ZeroMatrix("prior snapshot matrix is zero");

    const double floor = kSingularValueFloor * sv(0);
    int available = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > floor) ++available;

    int r = 0;
    if (rule.kind == RankRule::Kind::fixed) {
        if (rule.rank < 1) throw InvalidArgument("fixed rank must be >= 1");
        if (rule.rank > available)
            throw RankDeficient("requested rank " + std::to_string(rule.rank) + " but only " +
                                std::to_string(available) + " singular values above floor");
        r = rule.rank;
    } else {
        const double total = sv.head(available).squaredNorm();
        double acc = 0.0;
        for (int i = 0; i < available; ++i) {
            acc += sv(i) * sv(i);
            r = i + 1;
            if (acc >= rule.energy * total) break;
        }
    }

    const Eigen::MatrixXd u = svd.matrixU().leftCols(r);
    const Eigen::MatrixXd v = svd.matrixV().leftCols(r);
    const Eigen::VectorXd sigma_inv = sv.head(r).cwiseInverse();

    // M = X' V Sigma^-1; reduced operator A~ = U^T M; modes Phi = M W.
    const Eigen::MatrixXd m_lift = xp * v * sigma_inv.asDiagonal();
    const Eigen::MatrixXd a_tilde = u.transpose() * m_lift;

    Eigen::EigenSolver<Eigen::MatrixXd> eig(a_tilde);
    if (eig.info() != Eigen::Success) throw Error("eigendecomposition failed to converge");

    DmdModes out;
    out.eigenvalues = eig.eigenvalues();
    out.modes = m_lift.cast<Complex>() * eig.eigenvectors();
    for (int j = 0; j < r; ++j) {
        const double norm = out.modes.col(j).norm();
        if (norm > 0.0) out.modes.col(j) /= norm;
    }
    out.rank = r;
    out.frame_count = static_cast<int>(x.cols()) + 1;
    out.frame_rate = snap.frame_rate;

    const double denom = xp.norm();
    out.fit_residual =
        denom > 0.0 ? (xp - m_lift * (u.transpose() * x)).norm() / denom : 0.0;
    return out;
}

// Least-squares amplitudes against the first scanline (initial state).
inline Eigen::VectorXcd compute_amplitudes(DmdModes& modes, const Eigen::VectorXd& first_column,
                                           double condition_bound = 1e8) {
    if (modes.modes.rows() != first_column.size())
        throw ShapeMismatch("first column length does not match mode dimension");
    const Eigen::VectorXcd rhs = first_column.cast<Complex>();
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXcd> cod(modes.modes);
    modes.amplitudes = cod.solve(rhs);

    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(modes.modes);
    const auto& sv = svd.singularValues();
    const double smin = sv(sv.size() - 1);
    modes.phi_condition = smin > 0.0 ? sv(0) / smin : std::numeric_limits<double>::infinity();
    modes.ill_conditioned = !(modes.phi_condition <= condition_bound);
    modes.amplitudes_computed = true;
    return modes.amplitudes;
}

struct Reconstruction {
    Eigen::MatrixXd values;
    double max_imag_abs = 0.0;  // imaginary residual diagnostic
};

namespace detail {

// Reconstruction restricted to a mode subset; used for the background /
// foreground partition so both halves share one arithmetic path.
inline Eigen::MatrixXd reconstruct_subset(const DmdModes& modes,
                                          const std::vector<char>& keep, int t_begin,
                                          int t_end, double* max_imag) {
    const Eigen::Index n = modes.modes.rows();
    const int frames = t_end - t_begin;
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, frames);
    std::vector<Complex> cur(modes.rank);
    for (int j = 0; j < modes.rank; ++j)
        cur[j] = pow_int(modes.eigenvalues(j), t_begin);
    double imag_peak = 0.0;
    for (int f = 0; f < frames; ++f) {
        Eigen::VectorXcd col = Eigen::VectorXcd::Zero(n);
        for (int j = 0; j < modes.rank; ++j) {
            if (keep[j]) col += modes.amplitudes(j) * cur[j] * modes.modes.col(j);
            cur[j] *= modes.eigenvalues(j);
        }
        out.col(f) = col.real();
        imag_peak = std::max(imag_peak, col.imag().cwiseAbs().maxCoeff());
    }
    if (max_imag) *max_imag = imag_peak;
    return out;
}

}  // namespace detail

// Column j holds frame index t_begin + j (0-based; the paper's t - 1).
inline Reconstruction reconstruct(const DmdModes& modes, int t_begin, int t_end) {
    if (!modes.amplitudes_computed) throw InvalidArgument("amplitudes not computed");
    if (t_begin < 0 || t_end < t_begin) throw InvalidArgument("bad reconstruction range");
    Reconstruction rec;
    const std::vector<char> keep(static_cast<std::size_t>(modes.rank), 1);
    rec.values = detail::reconstruct_subset(modes, keep, t_begin, t_end, &rec.max_imag_abs);
    return rec;
}

inline Reconstruction reconstruct(const DmdModes& modes) {
    return reconstruct(modes, 0, modes.frame_count);
}

// |log lambda| in per-frame units; 0 for a perfectly stationary mode.
inline double stationarity_score(Complex lambda) {
    const double mag = std::abs(lambda);
    if (mag <= 0.0) return std::numeric_limits<double>::infinity();
    return std::hypot(std::log(mag), std::arg(lambda));
}

struct BackgroundForeground {
    Eigen::MatrixXd background;
    Eigen::MatrixXd foreground;
    std::vector<int> background_mode_indices;
    bool no_background_mode = false;  // warning: empty index set
};

inline BackgroundForeground split_background(const DmdModes& modes,
                                             double stationarity_tol = 1e-2) {
    if (!modes.amplitudes_computed) throw InvalidArgument("amplitudes not computed");
    BackgroundForeground out;
    std::vector<char> is_bg(static_cast<std::size_t>(modes.rank), 0);
    for (int j = 0; j < modes.rank; ++j) {
        if (stationarity_score(modes.eigenvalues(j)) <= stationarity_tol) {
            is_bg[j] = 1;
            out.background_mode_indices.push_back(j);
        }
    }
    out.no_background_mode = out.background_mode_indices.empty();
    std::vector<char> is_fg(is_bg.size());
    for (std::size_t j = 0; j < is_bg.size(); ++j) is_fg[j] = !is_bg[j];
    out.background =
        detail::reconstruct_subset(modes, is_bg, 0, modes.frame_count, nullptr);
    out.foreground =
        detail::reconstruct_subset(modes, is_fg, 0, modes.frame_count, nullptr);
    return out;
}

// Sparse foreground for labeling: the residual of the observed data against
// the stationary-mode background. Unlike the modal foreground sum, this sees
// vehicles that enter after the first frame (whose amplitudes, fitted to the
// initial scanline, are near zero).
inline Eigen::MatrixXd sparse_foreground(const GrayMap& gray,
                                         const BackgroundForeground& split) {
    if (gray.rows() != split.background.rows() || gray.cols() != split.background.cols())
        throw ShapeMismatch("gray plane and background shapes differ");
    return gray - split.background;
}

struct ModeDiagnostic {
    int mode_index = 0;  // index into DmdModes columns
    Complex lambda;
    double abs_lambda = 0.0;
    Complex omega;          // log(lambda) * frame_rate, rad/s
    double abs_omega = 0.0;
    double abs_amplitude = 0.0;
};

// Per-mode spectrum report sorted by |b| descending.
inline std::vector<ModeDiagnostic> mode_diagnostics(const DmdModes& modes) {
    if (!modes.amplitudes_computed) throw InvalidArgument("amplitudes not computed");
    const double fps = modes.frame_rate > 0.0 ? modes.frame_rate : 1.0;
    std::vector<ModeDiagnostic> out;
    out.reserve(static_cast<std::size_t>(modes.rank));
    for (int j = 0; j < modes.rank; ++j) {
        ModeDiagnostic d;
        d.mode_index = j;
        d.lambda = modes.eigenvalues(j);
        d.abs_lambda = std::abs(d.lambda);
        if (d.abs_lambda > 0.0) {
            d.omega = std::log(d.lambda) * fps;
            d.abs_omega = std::abs(d.omega);
        } else {
            d.omega = Complex(-std::numeric_limits<double>::infinity(), 0.0);
            d.abs_omega = std::numeric_limits<double>::infinity();
        }
        d.abs_amplitude = std::abs(modes.amplitudes(j));
        out.push_back(d);
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return a.abs_amplitude > b.abs_amplitude;
    });
    return out;
}

inline void save_diagnostics_csv(const std::string& path,
                                 const std::vector<ModeDiagnostic>& diags) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << "mode,re_lambda,im_lambda,abs_lambda,omega,abs_b\n";
    char line[256];
    for (const auto& d : diags) {
        std::snprintf(line, sizeof(line), "%d,%.12g,%.12g,%.12g,%.12g,%.12g\n", d.mode_index,
                      d.lambda.real(), d.lambda.imag(), d.abs_lambda, d.abs_omega,
                      d.abs_amplitude);
        f << line;
    }
}

// --- DMDM binary format -----------------------------------------------------
// {magic "DMDM", version u32, k u32, n u32, m u32, frame_rate f64,
//  fit_residual f64, amplitudes_flag u8} + interleaved complex f64 for
//  Phi (row-major), Lambda, B.

inline void save_modes(const std::string& path, const DmdModes& modes) {
    binio::Writer w(path);
    w.magic("DMDM");
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(modes.rank));
    w.u32(static_cast<std::uint32_t>(modes.modes.rows()));
    w.u32(static_cast<std::uint32_t>(modes.frame_count));
    w.f64(modes.frame_rate);
    w.f64(modes.fit_residual);
    w.u8(modes.amplitudes_computed ? 1 : 0);
    for (Eigen::Index i = 0; i < modes.modes.rows(); ++i) {
        for (int j = 0; j < modes.rank; ++j) {
            w.f64(modes.modes(i, j).real());
            w.f64(modes.modes(i, j).imag());
        }
    }
    for (int j = 0; j < modes.rank; ++j) {
        w.f64(modes.eigenvalues(j).real());
        w.f64(modes.eigenvalues(j).imag());
    }
    if (modes.amplitudes_computed) {
        for (int j = 0; j < modes.rank; ++j) {
            w.f64(modes.amplitudes(j).real());
            w.f64(modes.amplitudes(j).imag());
        }
    }
    w.close();
}

inline DmdModes load_modes(const std::string& path) {
    binio::Reader r(path);
    r.expect_magic("DMDM", "DMD modes");
    if (r.u32() != 1) throw ParseError("unsupported DMDM version");
    DmdModes modes;
    modes.rank = static_cast<int>(r.u32());
    const std::uint32_t n = r.u32();
    modes.frame_count = static_cast<int>(r.u32());
    modes.frame_rate = r.f64();
    modes.fit_residual = r.f64();
    modes.amplitudes_computed = r.u8() != 0;
    modes.modes.resize(n, modes.rank);
    for (std::uint32_t i = 0; i < n; ++i) {
        for (int j = 0; j < modes.rank; ++j) {
            const double re = r.f64();
            const double im = r.f64();
            modes.modes(i, j) = Complex(re, im);
        }
    }
    modes.eigenvalues.resize(modes.rank);
    for (int j = 0; j < modes.rank; ++j) {
        const double re = r.f64();
        const double im = r.f64();
        modes.eigenvalues(j) = Complex(re, im);
    }
    if (modes.amplitudes_computed) {
        modes.amplitudes.resize(modes.rank);
        for (int j = 0; j < modes.rank; ++j) {
            const double re = r.f64();
            const double im = r.f64();
            modes.amplitudes(j) = Complex(re, im);
        }
    }
    return modes;
}

}  // namespace stmtk

#endif
