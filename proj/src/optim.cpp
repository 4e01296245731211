#include "dwp/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace dwp {

void Adam::add_params(const std::vector<ParamRef>& ps) {
    for (const auto& p : ps) {
        params_.push_back(p);
        m_.emplace_back(p.value->dims);
        v_.emplace_back(p.value->dims);
    }
}

void Adam::step() {
    if (lr == 0.0) return;
    ++t_;
    const real bc1 = 1.0 - std::pow(beta1, static_cast<real>(t_));
    const real bc2 = 1.0 - std::pow(beta2, static_cast<real>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        Tensor& x = *params_[i].value;
        const Tensor& g = *params_[i].grad;
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (int64_t j = 0; j < x.numel(); ++j) {
            m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
            v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
            const real mh = m[j] / bc1;
            const real vh = v[j] / bc2;
            x[j] -= lr * mh / (std::sqrt(vh) + eps);
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.grad->zero();
}

PlateauState plateau_init(real lr0, int patience, real factor, real min_delta, real stop_lr) {
    if (!(factor > 0.0 && factor < 1.0)) throw std::invalid_argument("plateau: factor must be in (0,1)");
    if (!(stop_lr < lr0)) throw std::invalid_argument("plateau: stop_lr must be below lr0");
    PlateauState st;
    st.lr = st.lr0 = lr0;
    st.patience = patience;
    st.factor = factor;
    st.min_delta = min_delta;
    st.stop_lr = stop_lr;
    return st;
}

PlateauDecision plateau_step(PlateauState& st, real val_loss) {
    if (st.stopped) return {st.lr, false, true};
    const bool improved =
        !std::isnan(val_loss) && (!st.has_best || val_loss < st.best - st.min_delta);
    if (improved) {
        st.best = val_loss;
        st.has_best = true;
        st.bad_count = 0;
        return {st.lr, false, false};
    }
    ++st.bad_count;
    if (st.bad_count >= st.patience) {
        st.lr *= st.factor;
        st.bad_count = -1;  // one-epoch cooldown after a reduction
        if (st.lr <= st.stop_lr * (1.0 + 1e-12)) {
            st.stopped = true;
            return {st.lr, true, true};
        }
        return {st.lr, true, false};
    }
    return {st.lr, false, false};
}

void cyclical_restart(PlateauState& st) {
    if (!st.stopped) throw std::logic_error("cyclical_restart: schedule has not converged");
    st.lr = st.lr0;
    st.bad_count = 0;
    st.has_best = false;
    st.stopped = false;
}

}  // namespace dwp
