//! Log posterior of the ZIB panel model on the unconstrained scale.
//!
//! Parameter vector layout:
//! `[a_mu, b_mu.., a_zi, b_zi.., a_phi, b_phi.., log_sd(3), cpc_raw(3), z(G x 3)]`.
//! Per-dyad effects are non-centered: `u_g = diag(sd) · L · z_g` with `L` the
//! Cholesky factor of the 3x3 correlation matrix built from canonical partial
//! correlations `tanh(cpc_raw)`.

use crate::panel::RegressionDataset;
use crate::special::{inv_logit, ln_gamma_digamma, softplus};

use super::prior::{Prior, Priors};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub p_mu: usize,
    pub p_zi: usize,
    pub p_phi: usize,
    pub n_groups: usize,
}

impl Layout {
    pub fn mu(&self) -> usize {
        0
    }
    pub fn zi(&self) -> usize {
        1 + self.p_mu
    }
    pub fn phi(&self) -> usize {
        2 + self.p_mu + self.p_zi
    }
    pub fn log_sd(&self) -> usize {
        3 + self.p_mu + self.p_zi + self.p_phi
    }
    pub fn cpc(&self) -> usize {
        self.log_sd() + 3
    }
    pub fn z(&self) -> usize {
        self.cpc() + 3
    }
    pub fn dim(&self) -> usize {
        self.z() + 3 * self.n_groups
    }
}

/// Constrained parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct ZibParams {
    pub alpha_mu: f64,
    pub beta_mu: Vec<f64>,
    pub alpha_zi: f64,
    pub beta_zi: Vec<f64>,
    pub alpha_phi: f64,
    pub beta_phi: Vec<f64>,
    pub sd_u: [f64; 3],
    /// Lower-triangular Cholesky factor of the effect correlation matrix.
    pub l_u: [[f64; 3]; 3],
    pub u: Vec<[f64; 3]>,
}

impl ZibParams {
    pub fn zeros(layout: &Layout) -> Self {
        Self {
            alpha_mu: 0.0,
            beta_mu: vec![0.0; layout.p_mu],
            alpha_zi: 0.0,
            beta_zi: vec![0.0; layout.p_zi],
            alpha_phi: 0.0,
            beta_phi: vec![0.0; layout.p_phi],
            sd_u: [1.0; 3],
            l_u: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            u: vec![[0.0; 3]; layout.n_groups],
        }
    }

    /// Correlations (mu,zi), (mu,phi), (zi,phi).
    pub fn correlations(&self) -> [f64; 3] {
        let l = &self.l_u;
        [l[1][0], l[2][0], l[2][0] * l[1][0] + l[2][1] * l[1][1]]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Linear predictors for one row.
pub fn linear_predictors(p: &ZibParams, ds: &RegressionDataset, row: usize) -> [f64; 3] {
    let u = p.u[ds.group[row]];
    [
        p.alpha_mu + dot(&p.beta_mu, ds.mu.row(row)) + u[0],
        p.alpha_zi + dot(&p.beta_zi, ds.zi.row(row)) + u[1],
        p.alpha_phi + dot(&p.beta_phi, ds.phi.row(row)) + u[2],
    ]
}

/// (mu, pi, phi) for one row.
pub fn predictors(p: &ZibParams, ds: &RegressionDataset, row: usize) -> (f64, f64, f64) {
    let [a, b, c] = linear_predictors(p, ds, row);
    super::density::links(a, b, c)
}

struct Cpc {
    c: [f64; 3],
    r: [f64; 3],
}

impl Cpc {
    fn new(raw: &[f64]) -> Self {
        let c = [raw[0].tanh(), raw[1].tanh(), raw[2].tanh()];
        let r = c.map(|v| (1.0 - v * v).sqrt());
        Self { c, r }
    }

    fn chol(&self) -> [[f64; 3]; 3] {
        let [c1, c2, c3] = self.c;
        let [r1, r2, r3] = self.r;
        [[1.0, 0.0, 0.0], [c1, r1, 0.0], [c2, c3 * r2, r2 * r3]]
    }
}

pub struct ZibModel<'a> {
    pub ds: &'a RegressionDataset,
    pub priors: Priors,
    pub layout: Layout,
    ln_y: Vec<f64>,
    ln_1my: Vec<f64>,
}

impl<'a> ZibModel<'a> {
    pub fn new(ds: &'a RegressionDataset, priors: Priors) -> Self {
        let layout = Layout {
            p_mu: ds.mu.p(),
            p_zi: ds.zi.p(),
            p_phi: ds.phi.p(),
            n_groups: ds.n_groups(),
        };
        Self {
            ds,
            priors,
            layout,
            ln_y: ds.y.iter().map(|&y| if y > 0.0 { y.ln() } else { 0.0 }).collect(),
            ln_1my: ds.y.iter().map(|&y| (-y).ln_1p()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn unpack(&self, theta: &[f64]) -> ZibParams {
        let l = &self.layout;
        let cpc = Cpc::new(&theta[l.cpc()..l.cpc() + 3]);
        let sd = [theta[l.log_sd()].exp(), theta[l.log_sd() + 1].exp(), theta[l.log_sd() + 2].exp()];
        let lc = cpc.chol();
        let u = (0..l.n_groups)
            .map(|g| {
                let z = &theta[l.z() + 3 * g..l.z() + 3 * g + 3];
                let mut out = [0.0; 3];
                for k in 0..3 {
                    out[k] = sd[k] * (lc[k][0] * z[0] + lc[k][1] * z[1] + lc[k][2] * z[2]);
                }
                out
            })
            .collect();
        ZibParams {
            alpha_mu: theta[l.mu()],
            beta_mu: theta[l.mu() + 1..l.zi()].to_vec(),
            alpha_zi: theta[l.zi()],
            beta_zi: theta[l.zi() + 1..l.phi()].to_vec(),
            alpha_phi: theta[l.phi()],
            beta_phi: theta[l.phi() + 1..l.log_sd()].to_vec(),
            sd_u: sd,
            l_u: lc,
            u,
        }
    }

    /// Pointwise log-likelihood for every row.
    pub fn pointwise_loglik(&self, theta: &[f64], out: &mut [f64]) {
        let p = self.unpack(theta);
        for (i, o) in out.iter_mut().enumerate() {
            let [em, ez, ep] = linear_predictors(&p, self.ds, i);
            *o = if self.ds.y[i] == 0.0 {
                -softplus(-ez)
            } else {
                let mu = inv_logit(em);
                let phi = ep.exp();
                if !(mu * phi > 0.0 && (1.0 - mu) * phi > 0.0 && phi.is_finite()) {
                    *o = f64::NEG_INFINITY;
                    continue;
                }
                let (lg_phi, _) = ln_gamma_digamma(phi);
                let (lg_a, _) = ln_gamma_digamma(mu * phi);
                let (lg_b, _) = ln_gamma_digamma((1.0 - mu) * phi);
                -softplus(ez) + lg_phi - lg_a - lg_b + (mu * phi - 1.0) * self.ln_y[i] + ((1.0 - mu) * phi - 1.0) * self.ln_1my[i]
            };
        }
    }

    /// Log posterior (up to a constant) and its gradient. Returns `-inf` for
    /// parameter values where the density is not finite.
    pub fn logp_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let l = &self.layout;
        let ds = self.ds;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let params = self.unpack(theta);
        let (pm, pz, pp) = (l.p_mu, l.p_zi, l.p_phi);
        let mut lp = 0.0;
        // per-group sums of d loglik / d eta
        let mut geta = vec![[0.0f64; 3]; l.n_groups];

        for i in 0..ds.n() {
            let g = ds.group[i];
            let [em, ez, ep] = linear_predictors(&params, ds, i);
            let (dm, dz, dp);
            if ds.y[i] == 0.0 {
                lp -= softplus(-ez);
                dz = 1.0 - inv_logit(ez);
                dm = 0.0;
                dp = 0.0;
            } else {
                let mu = inv_logit(em);
                let phi = ep.exp();
                let a = mu * phi;
                let b = (1.0 - mu) * phi;
                if !(a > 0.0 && b > 0.0 && phi.is_finite()) {
                    return f64::NEG_INFINITY;
                }
                let (lg_phi, dg_phi) = ln_gamma_digamma(phi);
                let (lg_a, dg_a) = ln_gamma_digamma(a);
                let (lg_b, dg_b) = ln_gamma_digamma(b);
                let (ly, l1y) = (self.ln_y[i], self.ln_1my[i]);
                lp += -softplus(ez) + lg_phi - lg_a - lg_b + (a - 1.0) * ly + (b - 1.0) * l1y;
                dz = -inv_logit(ez);
                let dmu = phi * (ly - l1y - dg_a + dg_b);
                dm = dmu * mu * (1.0 - mu);
                let dphi = dg_phi - mu * dg_a - (1.0 - mu) * dg_b + mu * ly + (1.0 - mu) * l1y;
                dp = dphi * phi;
            }
            grad[l.mu()] += dm;
            for (gk, x) in grad[l.mu() + 1..l.mu() + 1 + pm].iter_mut().zip(ds.mu.row(i)) {
                *gk += dm * x;
            }
            grad[l.zi()] += dz;
            for (gk, x) in grad[l.zi() + 1..l.zi() + 1 + pz].iter_mut().zip(ds.zi.row(i)) {
                *gk += dz * x;
            }
            grad[l.phi()] += dp;
            for (gk, x) in grad[l.phi() + 1..l.phi() + 1 + pp].iter_mut().zip(ds.phi.row(i)) {
                *gk += dp * x;
            }
            geta[g][0] += dm;
            geta[g][1] += dz;
            geta[g][2] += dp;
        }

        // random effects
        let cpc = Cpc::new(&theta[l.cpc()..l.cpc() + 3]);
        let [c1, c2, c3] = cpc.c;
        let [r1, r2, r3] = cpc.r;
        if r1 == 0.0 || r2 == 0.0 || r3 == 0.0 {
            return f64::NEG_INFINITY;
        }
        let sd = params.sd_u;
        let mut g_logsd = [0.0; 3];
        let mut g_c = [0.0; 3];
        for g in 0..l.n_groups {
            let zi = l.z() + 3 * g;
            let z = [theta[zi], theta[zi + 1], theta[zi + 2]];
            let e = geta[g];
            let u = params.u[g];
            grad[zi] += e[0] * sd[0] + e[1] * sd[1] * c1 + e[2] * sd[2] * c2;
            grad[zi + 1] += e[1] * sd[1] * r1 + e[2] * sd[2] * c3 * r2;
            grad[zi + 2] += e[2] * sd[2] * r2 * r3;
            for k in 0..3 {
                g_logsd[k] += e[k] * u[k];
            }
            g_c[0] += e[1] * sd[1] * (z[0] - c1 / r1 * z[1]);
            g_c[1] += e[2] * sd[2] * (z[0] - c2 / r2 * (c3 * z[1] + r3 * z[2]));
            g_c[2] += e[2] * sd[2] * r2 * (z[1] - c3 / r3 * z[2]);
            // standard normal prior on z
            for k in 0..3 {
                lp -= 0.5 * z[k] * z[k];
                grad[zi + k] -= z[k];
            }
        }

        // LKJ on the Cholesky factor: (2η−1)·log L11 + (2η−2)·log L22
        let eta = self.priors.lkj_eta;
        let w1 = 2.0 * eta - 1.0;
        let w2 = 2.0 * eta - 2.0;
        lp += w1 * r1.ln() + w2 * (r2.ln() + r3.ln());
        g_c[0] += -w1 * c1 / (r1 * r1);
        g_c[1] += -w2 * c2 / (r2 * r2);
        g_c[2] += -w2 * c3 / (r3 * r3);
        // chain through tanh plus the log-Jacobian of the CPC transform
        for k in 0..3 {
            let c = cpc.c[k];
            grad[l.cpc() + k] += g_c[k] * (1.0 - c * c);
            lp += (1.0 - c * c).ln();
            grad[l.cpc() + k] += -2.0 * c;
        }
        lp += 0.5 * (1.0 - c2 * c2).ln();
        grad[l.cpc() + 1] += -c2;

        // sd priors with log-Jacobian
        for k in 0..3 {
            let (plp, pg) = self.priors.sd.lp_grad(sd[k]);
            lp += plp + theta[l.log_sd() + k];
            grad[l.log_sd() + k] += g_logsd[k] + pg * sd[k] + 1.0;
        }

        // intercepts and coefficients
        let mut add = |idx: usize, prior: &Prior, lp: &mut f64| {
            let (plp, pg) = prior.lp_grad(theta[idx]);
            *lp += plp;
            grad[idx] += pg;
        };
        add(l.mu(), &self.priors.mu_intercept, &mut lp);
        add(l.zi(), &self.priors.zi_intercept, &mut lp);
        add(l.phi(), &self.priors.phi_intercept, &mut lp);
        for idx in (l.mu() + 1..l.zi()).chain(l.zi() + 1..l.phi()).chain(l.phi() + 1..l.log_sd()) {
            add(idx, &self.priors.coef, &mut lp);
        }
        if lp.is_finite() && grad.iter().all(|g| g.is_finite()) {
            lp
        } else {
            f64::NEG_INFINITY
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_zib_panel, ZibTruth};
    use crate::zib::PriorRegime;
    use rand::Rng;

    fn toy() -> RegressionDataset {
        gen_zib_panel(&ZibTruth::moderate(12, 5, 3), 7).unwrap().0
    }

    fn fd_check(model: &ZibModel, theta: &[f64]) {
        let mut g = vec![0.0; theta.len()];
        let lp = model.logp_grad(theta, &mut g);
        assert!(lp.is_finite());
        let mut scratch = vec![0.0; theta.len()];
        for k in 0..theta.len() {
            let h = 1e-6 * theta[k].abs().max(1.0);
            let mut tp = theta.to_vec();
            tp[k] += h;
            let mut tm = theta.to_vec();
            tm[k] -= h;
            let fd = (model.logp_grad(&tp, &mut scratch) - model.logp_grad(&tm, &mut scratch)) / (2.0 * h);
            let tol = 1e-5 * g[k].abs().max(1.0);
            assert!((g[k] - fd).abs() <= tol, "param {k}: analytic {} vs fd {fd}", g[k]);
        }
    }

    #[test]
    fn gradient_matches_differences() {
        let ds = toy();
        for regime in PriorRegime::ALL {
            let model = ZibModel::new(&ds, regime.priors());
            let mut rng = crate::rng::stream(3, crate::rng::StreamKind::Simulate, 0);
            for _ in 0..3 {
                let theta: Vec<f64> = (0..model.dim()).map(|_| rng.random_range(-0.8..0.8)).collect();
                fd_check(&model, &theta);
            }
        }
    }

    #[test]
    fn zero_params_give_link_identities() {
        let ds = toy();
        let model = ZibModel::new(&ds, PriorRegime::Moderate.priors());
        let mut theta = vec![0.0; model.dim()];
        let p = model.unpack(&theta);
        assert_eq!(predictors(&p, &ds, 0), (0.5, 0.5, 1.0));
        assert_eq!(p.correlations(), [0.0, 0.0, 0.0]);
        // correlation factor stays valid far out
        theta[model.layout.cpc()] = 2.0;
        theta[model.layout.cpc() + 1] = -1.5;
        theta[model.layout.cpc() + 2] = 0.7;
        let p = model.unpack(&theta);
        let l = p.l_u;
        for row in l {
            let norm: f64 = row.iter().map(|v| v * v).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn loglik_sum_matches_density() {
        let ds = toy();
        let model = ZibModel::new(&ds, PriorRegime::Moderate.priors());
        let mut rng = crate::rng::stream(5, crate::rng::StreamKind::Simulate, 0);
        let theta: Vec<f64> = (0..model.dim()).map(|_| rng.random_range(-0.5..0.5)).collect();
        let mut ll = vec![0.0; ds.n()];
        model.pointwise_loglik(&theta, &mut ll);
        let p = model.unpack(&theta);
        for i in 0..ds.n() {
            let (mu, pi, phi) = predictors(&p, &ds, i);
            let want = super::super::density::zib_logdensity(ds.y[i], pi, mu, phi).unwrap();
            assert!((ll[i] - want).abs() < 1e-10);
        }
    }
}
