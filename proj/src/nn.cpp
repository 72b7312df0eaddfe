#include "voltmesh/nn.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace voltmesh {
namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

Mat apply_act(const Mat& x, Activation a) {
    switch (a) {
        case Activation::identity:
            return x;
        case Activation::relu:
            return x.cwiseMax(0.0);
        case Activation::tanh:
            return x.array().tanh().matrix();
    }
    throw Error(ErrorCode::InvalidArgument, "unknown activation");
}

// dAct/dPre evaluated from the cached pre/post activations.
Mat act_grad(const Mat& pre, const Mat& post, Activation a) {
    switch (a) {
        case Activation::identity:
            return Mat::Ones(pre.rows(), pre.cols());
        case Activation::relu:
            return (pre.array() > 0.0).cast<double>().matrix();
        case Activation::tanh:
            return (1.0 - post.array().square()).matrix();
    }
    throw Error(ErrorCode::InvalidArgument, "unknown activation");
}

}  // namespace

std::string to_string(Activation a) {
    switch (a) {
        case Activation::identity:
            return "identity";
        case Activation::relu:
            return "relu";
        case Activation::tanh:
            return "tanh";
    }
    return "?";
}

Activation activation_from_string(const std::string& s) {
    if (s == "identity") return Activation::identity;
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    throw Error(ErrorCode::Parse, "unknown activation '" + s + "'");
}

DenseNet::DenseNet(const std::vector<int>& sizes, const std::vector<Activation>& acts,
                   const std::vector<bool>& noisy_flags, Rng& rng, double sigma_init) {
    if (sizes.size() < 2 || acts.size() != sizes.size() - 1 ||
        noisy_flags.size() != sizes.size() - 1)
        throw Error(ErrorCode::InvalidArgument, "DenseNet: sizes/acts/noisy lengths disagree");
    layers_.resize(sizes.size() - 1);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        int in = sizes[l], out = sizes[l + 1];
        if (in <= 0 || out <= 0)
            throw Error(ErrorCode::InvalidArgument, "DenseNet: layer sizes must be positive");
        DenseLayer& L = layers_[l];
        L.noisy = noisy_flags[l];
        L.act = acts[l];
        double bound = 1.0 / std::sqrt(static_cast<double>(in));
        L.nu_w.resize(out, in);
        for (int i = 0; i < out; ++i)
            for (int j = 0; j < in; ++j) L.nu_w(i, j) = rng.uniform(-bound, bound);
        L.nu_b = Mat::Zero(out, 1);
        if (L.noisy) {
            L.sigma_w = Mat::Constant(out, in, sigma_init);
            L.sigma_b = Mat::Constant(out, 1, sigma_init);
        } else {
            L.sigma_w = Mat::Zero(out, in);
            L.sigma_b = Mat::Zero(out, 1);
        }
        L.eps_w = Mat::Zero(out, in);
        L.eps_b = Mat::Zero(out, 1);
        L.g_nu_w = Mat::Zero(out, in);
        L.g_nu_b = Mat::Zero(out, 1);
        L.g_sigma_w = Mat::Zero(out, in);
        L.g_sigma_b = Mat::Zero(out, 1);
    }
}

DenseNet::DenseNet(const std::vector<int>& sizes, const std::vector<Activation>& acts, bool noisy,
                   Rng& rng, double sigma_init)
    : DenseNet(sizes, acts, std::vector<bool>(sizes.size() - 1, noisy), rng, sigma_init) {}

int DenseNet::input_dim() const {
    if (layers_.empty()) throw Error(ErrorCode::Runtime, "empty network");
    return layers_.front().in_dim();
}

int DenseNet::output_dim() const {
    if (layers_.empty()) throw Error(ErrorCode::Runtime, "empty network");
    return layers_.back().out_dim();
}

Mat DenseNet::forward(const Mat& x) {
    if (layers_.empty()) throw Error(ErrorCode::Runtime, "empty network");
    if (x.cols() != input_dim())
        throw Error(ErrorCode::ArityMismatch,
                    "forward: input has " + std::to_string(x.cols()) + " features, expected " +
                        std::to_string(input_dim()));
    Mat h = x;
    for (auto& L : layers_) {
        L.x_in = h;
        L.w_eff = L.nu_w + L.sigma_w.cwiseProduct(L.eps_w);
        L.b_eff = L.nu_b + L.sigma_b.cwiseProduct(L.eps_b);
        L.pre = h * L.w_eff.transpose();
        L.pre.rowwise() += L.b_eff.col(0).transpose();
        L.post = apply_act(L.pre, L.act);
        L.cached = true;
        h = L.post;
    }
    return h;
}

Mat DenseNet::backward(const Mat& dy) {
    if (layers_.empty() || !layers_.back().cached)
        throw Error(ErrorCode::Runtime, "backward called before forward");
    if (dy.rows() != layers_.back().post.rows() || dy.cols() != layers_.back().post.cols())
        throw Error(ErrorCode::ArityMismatch, "backward: upstream gradient shape mismatch");
    Mat d = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
        DenseLayer& L = *it;
        Mat dpre = d.cwiseProduct(act_grad(L.pre, L.post, L.act));
        Mat gw = dpre.transpose() * L.x_in;        // d/dW_eff
        Mat gb = dpre.colwise().sum().transpose();  // d/db_eff
        L.g_nu_w += gw;
        L.g_nu_b += gb;
        if (L.noisy) {
            L.g_sigma_w += gw.cwiseProduct(L.eps_w);
            L.g_sigma_b += gb.cwiseProduct(L.eps_b);
        }
        d = dpre * L.w_eff;
    }
    return d;
}

void DenseNet::zero_grad() {
    for (auto& L : layers_) {
        L.g_nu_w.setZero();
        L.g_nu_b.setZero();
        L.g_sigma_w.setZero();
        L.g_sigma_b.setZero();
    }
}

void DenseNet::sample_noise(Rng& rng) {
    for (auto& L : layers_) {
        if (!L.noisy) continue;
        for (int i = 0; i < L.eps_w.rows(); ++i)
            for (int j = 0; j < L.eps_w.cols(); ++j) L.eps_w(i, j) = rng.normal();
        for (int i = 0; i < L.eps_b.rows(); ++i) L.eps_b(i, 0) = rng.normal();
    }
}

void DenseNet::clear_noise() {
    for (auto& L : layers_) {
        L.eps_w.setZero();
        L.eps_b.setZero();
    }
}

std::vector<ParamRef> DenseNet::params() {
    std::vector<ParamRef> out;
    for (auto& L : layers_) {
        out.push_back({&L.nu_w, &L.g_nu_w});
        out.push_back({&L.nu_b, &L.g_nu_b});
        if (L.noisy) {
            out.push_back({&L.sigma_w, &L.g_sigma_w});
            out.push_back({&L.sigma_b, &L.g_sigma_b});
        }
    }
    return out;
}

void soft_update(DenseNet& online, DenseNet& target, double tau) {
    if (tau < 0.0 || tau > 1.0)
        throw Error(ErrorCode::InvalidArgument, "soft_update: tau must lie in [0,1]");
    auto po = online.params();
    auto pt = target.params();
    if (po.size() != pt.size())
        throw Error(ErrorCode::ArityMismatch, "soft_update: parameter counts differ");
    for (std::size_t i = 0; i < po.size(); ++i) {
        if (po[i].value->rows() != pt[i].value->rows() ||
            po[i].value->cols() != pt[i].value->cols())
            throw Error(ErrorCode::ArityMismatch, "soft_update: parameter shapes differ");
        *pt[i].value = tau * (*po[i].value) + (1.0 - tau) * (*pt[i].value);
    }
}

void copy_params(const DenseNet& src, DenseNet& dst) {
    soft_update(const_cast<DenseNet&>(src), dst, 1.0);
}

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (lr < 0.0) throw Error(ErrorCode::InvalidArgument, "Adam: negative learning rate");
}

void Adam::step(DenseNet& net) {
    auto ps = net.params();
    if (m_.empty()) {
        for (auto& p : ps) {
            m_.push_back(Mat::Zero(p.value->rows(), p.value->cols()));
            v_.push_back(Mat::Zero(p.value->rows(), p.value->cols()));
        }
    }
    if (m_.size() != ps.size())
        throw Error(ErrorCode::ArityMismatch, "Adam: network parameter count changed");
    for (auto& p : ps)
        if (!p.grad->allFinite())
            throw Error(ErrorCode::Divergence, "Adam: non-finite gradient encountered");
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const Mat& g = *ps[i].grad;
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
        Mat mhat = m_[i] / bc1;
        Mat vhat = v_[i] / bc2;
        *ps[i].value -=
            lr_ * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + eps_).matrix());
    }
}

void save_net(const DenseNet& net, std::ostream& out) {
    const auto& layers = net.layers();
    out << "voltmesh-net 1\n";
    out << "layers " << layers.size() << "\n";
    auto dump = [&](const char* name, const Mat& m) {
        out << name << " " << m.rows() << " " << m.cols() << "\n";
        for (int i = 0; i < m.rows(); ++i) {
            for (int j = 0; j < m.cols(); ++j) {
                if (j) out << " ";
                out << fmt(m(i, j));
            }
            out << "\n";
        }
    };
    for (const auto& L : layers) {
        out << "layer " << (L.noisy ? "noisy" : "plain") << " " << to_string(L.act) << " "
            << L.in_dim() << " " << L.out_dim() << "\n";
        dump("nu_w", L.nu_w);
        dump("nu_b", L.nu_b);
        if (L.noisy) {
            dump("sigma_w", L.sigma_w);
            dump("sigma_b", L.sigma_b);
        }
    }
}

namespace {

Mat read_mat(std::istream& in, const std::string& expect_name, int expect_rows, int expect_cols) {
    std::string name;
    int rows = 0, cols = 0;
    if (!(in >> name >> rows >> cols) || name != expect_name || rows != expect_rows ||
        cols != expect_cols)
        throw Error(ErrorCode::Parse, "checkpoint: expected matrix '" + expect_name + "' " +
                                          std::to_string(expect_rows) + "x" +
                                          std::to_string(expect_cols));
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            if (!(in >> m(i, j)))
                throw Error(ErrorCode::Parse, "checkpoint: truncated matrix '" + expect_name + "'");
    return m;
}

}  // namespace

DenseNet load_net(std::istream& in) {
    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != "voltmesh-net")
        throw Error(ErrorCode::Parse, "checkpoint: bad magic (expected 'voltmesh-net')");
    if (version != 1)
        throw Error(ErrorCode::Parse,
                    "checkpoint: unsupported version " + std::to_string(version));
    std::string word;
    std::size_t n_layers = 0;
    if (!(in >> word >> n_layers) || word != "layers")
        throw Error(ErrorCode::Parse, "checkpoint: missing layer count");
    if (n_layers == 0 || n_layers > 64)
        throw Error(ErrorCode::Parse, "checkpoint: implausible layer count");

    // Build a skeleton then overwrite every matrix from the stream.
    std::vector<int> sizes;
    std::vector<Activation> acts;
    std::vector<bool> noisy;
    struct Pending {
        bool noisy;
        Activation act;
        int in, out;
        Mat nu_w, nu_b, sigma_w, sigma_b;
    };
    std::vector<Pending> pending;
    for (std::size_t l = 0; l < n_layers; ++l) {
        std::string tag, kind, act_name;
        int in_dim = 0, out_dim = 0;
        if (!(in >> tag >> kind >> act_name >> in_dim >> out_dim) || tag != "layer")
            throw Error(ErrorCode::Parse, "checkpoint: bad layer header");
        if (kind != "noisy" && kind != "plain")
            throw Error(ErrorCode::Parse, "checkpoint: layer kind must be noisy|plain");
        if (in_dim <= 0 || out_dim <= 0)
            throw Error(ErrorCode::Parse, "checkpoint: bad layer dimensions");
        Pending p;
        p.noisy = kind == "noisy";
        p.act = activation_from_string(act_name);
        p.in = in_dim;
        p.out = out_dim;
        p.nu_w = read_mat(in, "nu_w", out_dim, in_dim);
        p.nu_b = read_mat(in, "nu_b", out_dim, 1);
        if (p.noisy) {
            p.sigma_w = read_mat(in, "sigma_w", out_dim, in_dim);
            p.sigma_b = read_mat(in, "sigma_b", out_dim, 1);
        }
        pending.push_back(std::move(p));
    }
    for (std::size_t l = 0; l < pending.size(); ++l) {
        if (l + 1 < pending.size() && pending[l].out != pending[l + 1].in)
            throw Error(ErrorCode::Parse, "checkpoint: layer dimensions do not chain");
        sizes.push_back(pending[l].in);
        acts.push_back(pending[l].act);
        noisy.push_back(pending[l].noisy);
    }
    sizes.push_back(pending.back().out);
    Rng rng(0);
    DenseNet net(sizes, acts, noisy, rng);
    for (std::size_t l = 0; l < pending.size(); ++l) {
        DenseLayer& L = net.layers()[l];
        L.nu_w = pending[l].nu_w;
        L.nu_b = pending[l].nu_b;
        if (L.noisy) {
            L.sigma_w = pending[l].sigma_w;
            L.sigma_b = pending[l].sigma_b;
        }
    }
    return net;
}

}  // namespace voltmesh
