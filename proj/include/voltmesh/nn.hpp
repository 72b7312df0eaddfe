#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <vector>

#include "voltmesh/common.hpp"

namespace voltmesh {

using Mat = Eigen::MatrixXd;

enum class Activation { identity, relu, tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

// One affine layer, optionally noisy. Effective parameters are
// W = nu_w + sigma_w .* eps_w and b = nu_b + sigma_b .* eps_b; a plain layer
// keeps sigma/eps at zero and exposes only nu to the optimizer.
// Data flows as rows: forward maps (batch x in) -> (batch x out).
struct DenseLayer {
    bool noisy = false;
    Activation act = Activation::identity;
    Mat nu_w, sigma_w, eps_w;  // out x in
    Mat nu_b, sigma_b, eps_b;  // out x 1
    Mat g_nu_w, g_sigma_w;
    Mat g_nu_b, g_sigma_b;

    // forward caches, valid until the next forward/sample/clear
    Mat w_eff, b_eff;
    Mat x_in, pre, post;
    bool cached = false;

    int in_dim() const { return static_cast<int>(nu_w.cols()); }
    int out_dim() const { return static_cast<int>(nu_w.rows()); }
};

struct ParamRef {
    Mat* value;
    Mat* grad;
};

class DenseNet {
  public:
    DenseNet() = default;
    // sizes = {in, h1, ..., out}; acts has sizes.size()-1 entries;
    // noisy_flags likewise (which layers carry learnable noise scales).
    DenseNet(const std::vector<int>& sizes, const std::vector<Activation>& acts,
             const std::vector<bool>& noisy_flags, Rng& rng, double sigma_init = 0.017);
    DenseNet(const std::vector<int>& sizes, const std::vector<Activation>& acts, bool noisy,
             Rng& rng, double sigma_init = 0.017);

    Mat forward(const Mat& x);
    // Propagates dLoss/dOutput back; accumulates parameter gradients and
    // returns dLoss/dInput. Noise stays frozen at its sampled values.
    Mat backward(const Mat& dy);
    void zero_grad();

    void sample_noise(Rng& rng);
    void clear_noise();

    std::vector<ParamRef> params();
    int input_dim() const;
    int output_dim() const;
    bool empty() const { return layers_.empty(); }
    std::vector<DenseLayer>& layers() { return layers_; }
    const std::vector<DenseLayer>& layers() const { return layers_; }

  private:
    std::vector<DenseLayer> layers_;
};

// theta_target <- tau * theta_online + (1 - tau) * theta_target
void soft_update(DenseNet& online, DenseNet& target, double tau);
void copy_params(const DenseNet& src, DenseNet& dst);

class Adam {
  public:
    explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);
    // One update from the accumulated gradients; throws on non-finite
    // gradients (training divergence).
    void step(DenseNet& net);
    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

  private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Mat> m_, v_;
};

void save_net(const DenseNet& net, std::ostream& out);
DenseNet load_net(std::istream& in);

}  // namespace voltmesh
