#include "ktrade/kernels.hpp"

#include "ktrade/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace ktrade {

void KernelSpec::validate() const {
    switch (variant) {
        case KernelVariant::SigPde:
            if (dyadic_order < 0 || dyadic_order > 5) {
                throw std::invalid_argument("kernel: dyadic_order must be in [0, 5]");
            }
            break;
        case KernelVariant::TruncatedSig:
            if (order < 1 || order > 12) {
                throw std::invalid_argument("kernel: truncation order must be in [1, 12]");
            }
            break;
        case KernelVariant::RandomizedSig:
            if (reservoir_dim < 1) {
                throw std::invalid_argument("kernel: reservoir_dim must be positive");
            }
            break;
    }
}

KernelSpec KernelSpec::sig_pde(int dyadic_order) {
    KernelSpec s;
    s.variant = KernelVariant::SigPde;
    s.dyadic_order = dyadic_order;
    s.validate();
    return s;
}

KernelSpec KernelSpec::truncated_sig(int order) {
    KernelSpec s;
    s.variant = KernelVariant::TruncatedSig;
    s.order = order;
    s.validate();
    return s;
}

KernelSpec KernelSpec::randomized_sig(int reservoir_dim, Activation act, std::uint64_t seed) {
    KernelSpec s;
    s.variant = KernelVariant::RandomizedSig;
    s.reservoir_dim = reservoir_dim;
    s.activation = act;
    s.seed = seed;
    s.validate();
    return s;
}

SigTensor::SigTensor(int channels, int order) : channels_(channels), order_(order) {
    if (channels < 1) throw std::invalid_argument("sig tensor: channels must be positive");
    if (order < 0) throw std::invalid_argument("sig tensor: order must be nonnegative");

    offsets_.resize(static_cast<std::size_t>(order) + 2);
    Eigen::Index offset = 0;
    Eigen::Index level_len = 1;
    for (int k = 0; k <= order; ++k) {
        offsets_[static_cast<std::size_t>(k)] = offset;
        offset += level_len;
        if (offset > (1LL << 26)) {
            throw std::invalid_argument("sig tensor: coefficient count too large");
        }
        level_len *= channels;
    }
    offsets_[static_cast<std::size_t>(order) + 1] = offset;

    coeffs_ = Eigen::VectorXd::Zero(offset);
    coeffs_(0) = 1.0;
}

Eigen::Index SigTensor::level_offset(int level) const {
    return offsets_[static_cast<std::size_t>(level)];
}

Eigen::Index SigTensor::level_size(int level) const {
    return offsets_[static_cast<std::size_t>(level) + 1] - offsets_[static_cast<std::size_t>(level)];
}

double SigTensor::dot(const SigTensor& other) const {
    if (other.channels_ != channels_ || other.order_ != order_) {
        throw std::invalid_argument("sig tensor: shape mismatch");
    }
    return coeffs_.dot(other.coeffs_);
}

double SigTensor::level_dot(const SigTensor& other, int level) const {
    return coeffs_.segment(level_offset(level), level_size(level))
        .dot(other.coeffs_.segment(level_offset(level), level_size(level)));
}

void SigTensor::fold_segment(const Eigen::VectorXd& u) {
    if (u.size() != channels_) throw std::invalid_argument("sig tensor: increment dim mismatch");
    if (order_ == 0) return;

    // Levels of exp(u): seg[k] = u^{otimes k}/k!.
    std::vector<Eigen::VectorXd> seg(static_cast<std::size_t>(order_) + 1);
    seg[0] = Eigen::VectorXd::Ones(1);
    for (int k = 1; k <= order_; ++k) {
        const auto& prev = seg[static_cast<std::size_t>(k - 1)];
        Eigen::VectorXd cur(prev.size() * channels_);
        const double inv_k = 1.0 / static_cast<double>(k);
        Eigen::Index idx = 0;
        for (Eigen::Index i = 0; i < prev.size(); ++i) {
            for (Eigen::Index c = 0; c < channels_; ++c) {
                cur(idx++) = prev(i) * u(c) * inv_k;
            }
        }
        seg[static_cast<std::size_t>(k)] = std::move(cur);
    }

    // In-place Chen product, descending levels so lower ones stay pristine.
    for (int level = order_; level >= 1; --level) {
        auto dest = coeffs_.segment(level_offset(level), level_size(level));
        for (int mylevel = level - 1; mylevel >= 1; --mylevel) {
            const int other = level - mylevel;
            const auto mine = coeffs_.segment(level_offset(mylevel), level_size(mylevel));
            const auto& tail = seg[static_cast<std::size_t>(other)];
            Eigen::Index idx = 0;
            for (Eigen::Index i = 0; i < mine.size(); ++i) {
                for (Eigen::Index j = 0; j < tail.size(); ++j) {
                    dest(idx++) += mine(i) * tail(j);
                }
            }
        }
        dest += seg[static_cast<std::size_t>(level)];
    }
}

void SigTensor::chen_multiply(const SigTensor& other) {
    if (other.channels_ != channels_ || other.order_ != order_) {
        throw std::invalid_argument("sig tensor: shape mismatch");
    }
    for (int level = order_; level >= 1; --level) {
        auto dest = coeffs_.segment(level_offset(level), level_size(level));
        for (int mylevel = level - 1; mylevel >= 1; --mylevel) {
            const int olevel = level - mylevel;
            const auto mine = coeffs_.segment(level_offset(mylevel), level_size(mylevel));
            const auto theirs =
                other.coeffs_.segment(other.level_offset(olevel), other.level_size(olevel));
            Eigen::Index idx = 0;
            for (Eigen::Index i = 0; i < mine.size(); ++i) {
                for (Eigen::Index j = 0; j < theirs.size(); ++j) {
                    dest(idx++) += mine(i) * theirs(j);
                }
            }
        }
        dest += other.coeffs_.segment(other.level_offset(level), other.level_size(level));
    }
}

SigTensor truncated_signature(const Path& path, int order) {
    if (order < 0) throw std::invalid_argument("truncated_signature: negative order");
    SigTensor sig(static_cast<int>(path.channels()), order);
    const Eigen::MatrixXd inc = path.increments();
    for (Eigen::Index i = 0; i < inc.rows(); ++i) {
        sig.fold_segment(inc.row(i).transpose());
    }
    return sig;
}

Eigen::MatrixXd sig_kernel_grid(const Path& x, const Path& y, int dyadic_order) {
    if (x.channels() != y.channels()) {
        throw std::invalid_argument("sig_kernel_grid: channel mismatch");
    }
    if (dyadic_order < 0 || dyadic_order > 5) {
        throw std::invalid_argument("sig_kernel_grid: dyadic_order must be in [0, 5]");
    }

    const Eigen::Index lx = x.length();
    const Eigen::Index ly = y.length();
    const Eigen::Index refine = Eigen::Index(1) << dyadic_order;

    Eigen::MatrixXd out(lx + 1, ly + 1);
    out.row(0).setOnes();
    out.col(0).setOnes();
    if (lx == 0 || ly == 0) return out;

    const Eigen::MatrixXd incx = x.increments();
    const Eigen::MatrixXd incy = y.increments();
    // Increment inner products, rescaled for the refined grid. Summed with an
    // explicit channel loop so the value is bitwise symmetric in (x, y).
    const double inv_refine2 = 1.0 / static_cast<double>(refine * refine);
    Eigen::MatrixXd prods(lx, ly);
    for (Eigen::Index i = 0; i < lx; ++i) {
        for (Eigen::Index j = 0; j < ly; ++j) {
            double dot = 0.0;
            for (Eigen::Index c = 0; c < incx.cols(); ++c) dot += incx(i, c) * incy(j, c);
            prods(i, j) = dot * inv_refine2;
        }
    }

    const Eigen::Index nx = lx * refine;
    const Eigen::Index ny = ly * refine;

    // Row-sweep over the fine grid; only the previous fine row is retained.
    Eigen::VectorXd prev_row = Eigen::VectorXd::Ones(ny + 1);
    Eigen::VectorXd cur_row(ny + 1);
    for (Eigen::Index i = 0; i < nx; ++i) {
        double* cur = cur_row.data();
        const double* prev = prev_row.data();
        cur[0] = 1.0;
        const Eigen::Index ic = i / refine;
        double row_max = 1.0;
        for (Eigen::Index jc = 0; jc < ly; ++jc) {
            const double c = prods(ic, jc);
            for (Eigen::Index j = jc * refine; j < (jc + 1) * refine; ++j) {
                const double v = cur[j] + prev[j + 1] - prev[j] + c * (cur[j] + prev[j + 1]) * 0.5;
                cur[j + 1] = v;
                row_max = std::max(row_max, std::abs(v));
            }
        }
        if (!std::isfinite(row_max) || row_max > 1e100) {
            throw std::runtime_error("PDE solution non-finite - reduce scale_gamma");
        }
        if ((i + 1) % refine == 0) {
            const Eigen::Index coarse_i = (i + 1) / refine;
            for (Eigen::Index j = 0; j <= ly; ++j) {
                out(coarse_i, j) = cur[j * refine];
            }
        }
        std::swap(prev_row, cur_row);
    }
    return out;
}

RandomizedSigWeights RandomizedSigWeights::draw(std::uint64_t seed, int reservoir_dim,
                                                int channels) {
    if (reservoir_dim < 1 || channels < 1) {
        throw std::invalid_argument("randomized signature: bad dimensions");
    }
    Rng rng(derive_seed(seed, 0x7253696757ULL));
    RandomizedSigWeights w;
    const double scale = 1.0 / std::sqrt(static_cast<double>(reservoir_dim));

    w.z0.resize(reservoir_dim);
    for (int i = 0; i < reservoir_dim; ++i) w.z0(i) = rng.normal();

    w.A.reserve(static_cast<std::size_t>(channels));
    w.b.reserve(static_cast<std::size_t>(channels));
    for (int c = 0; c < channels; ++c) {
        Eigen::MatrixXd a(reservoir_dim, reservoir_dim);
        for (int i = 0; i < reservoir_dim; ++i) {
            for (int j = 0; j < reservoir_dim; ++j) a(i, j) = scale * rng.normal();
        }
        Eigen::VectorXd bb(reservoir_dim);
        for (int i = 0; i < reservoir_dim; ++i) bb(i) = rng.normal();
        w.A.push_back(std::move(a));
        w.b.push_back(std::move(bb));
    }
    return w;
}

Eigen::VectorXd randomized_signature(const Path& path, const RandomizedSigWeights& weights,
                                     Activation activation) {
    const auto d = static_cast<std::size_t>(path.channels());
    if (weights.A.size() != d || weights.b.size() != d) {
        throw std::invalid_argument("randomized signature: weights/channel mismatch");
    }
    Eigen::VectorXd z = weights.z0;
    const Eigen::MatrixXd inc = path.increments();
    Eigen::VectorXd drive(z.size());
    for (Eigen::Index k = 0; k < inc.rows(); ++k) {
        drive.setZero();
        for (std::size_t c = 0; c < d; ++c) {
            Eigen::VectorXd pre = weights.A[c] * z + weights.b[c];
            if (activation == Activation::Tanh) {
                pre = pre.array().tanh().matrix();
            }
            drive += pre * inc(k, static_cast<Eigen::Index>(c));
        }
        z += drive;
    }
    return z;
}

Eigen::VectorXd randomized_signature(const Path& path, const KernelSpec& spec) {
    if (spec.variant != KernelVariant::RandomizedSig) {
        throw std::invalid_argument("randomized signature: spec variant mismatch");
    }
    spec.validate();
    const auto weights = RandomizedSigWeights::draw(spec.seed, spec.reservoir_dim,
                                                    static_cast<int>(path.channels()));
    return randomized_signature(path, weights, spec.activation);
}

double kernel_eval(const KernelSpec& spec, const Path& x, const Path& y) {
    if (x.channels() != y.channels()) {
        throw std::invalid_argument("kernel_eval: channel mismatch");
    }
    spec.validate();
    switch (spec.variant) {
        case KernelVariant::SigPde: {
            const Eigen::MatrixXd grid = sig_kernel_grid(x, y, spec.dyadic_order);
            return grid(x.length(), y.length());
        }
        case KernelVariant::TruncatedSig: {
            return truncated_signature(x, spec.order).dot(truncated_signature(y, spec.order));
        }
        case KernelVariant::RandomizedSig: {
            const auto weights = RandomizedSigWeights::draw(spec.seed, spec.reservoir_dim,
                                                            static_cast<int>(x.channels()));
            const Eigen::VectorXd zx = randomized_signature(x, weights, spec.activation);
            const Eigen::VectorXd zy = randomized_signature(y, weights, spec.activation);
            return zx.dot(zy);
        }
    }
    throw std::logic_error("kernel_eval: unknown variant");
}

} // namespace ktrade
