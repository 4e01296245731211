#pragma once

#include <vector>

#include "dwp/tensor.hpp"

namespace dwp {

struct ParamRef {
    Tensor* value;
    Tensor* grad;
};

class Adam {
public:
    real lr = 1e-3;
    real beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    void add_params(const std::vector<ParamRef>& ps);
    void step();
    void zero_grad();
    size_t param_tensors() const { return params_.size(); }

private:
    std::vector<ParamRef> params_;
    std::vector<Tensor> m_, v_;
    int64_t t_ = 0;
};

/// Reduce-on-plateau schedule: multiply lr by `factor` after `patience`
/// consecutive epochs whose validation loss did not improve best by more
/// than `min_delta`. One-epoch cooldown after each reduction. Stop once lr
/// reaches `stop_lr`.
struct PlateauState {
    real lr = 1e-3;
    real lr0 = 1e-3;
    real factor = 0.1;
    int patience = 10;
    real min_delta = 1e-4;
    real stop_lr = 1e-6;

    real best = 0.0;
    bool has_best = false;
    int bad_count = 0;
    bool stopped = false;
};

struct PlateauDecision {
    real lr;
    bool dropped;
    bool stop;
};

PlateauState plateau_init(real lr0, int patience, real factor, real min_delta, real stop_lr);
PlateauDecision plateau_step(PlateauState& st, real val_loss);

/// Reset lr to lr0 and clear counters on a converged schedule; throws
/// std::logic_error when convergence was not reached yet.
void cyclical_restart(PlateauState& st);

}  // namespace dwp
