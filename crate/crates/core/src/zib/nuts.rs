//! Multinomial no-U-turn sampler with a diagonal metric, dual-averaging step
//! size and windowed metric adaptation.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::special::log_sum_exp;

pub trait LogDensity {
    fn dim(&self) -> usize;
    /// Log density and gradient; `-inf` marks an invalid point.
    fn logp_grad(&self, q: &[f64], grad: &mut [f64]) -> f64;
}

const MAX_DELTA_H: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NutsSettings {
    pub warmup: usize,
    pub draws: usize,
    pub max_treedepth: usize,
    pub target_accept: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    /// `draws x dim`, row-major.
    pub samples: Vec<f64>,
    pub lp: Vec<f64>,
    pub accept_stat: Vec<f64>,
    pub treedepth: Vec<usize>,
    pub n_leapfrog: Vec<usize>,
    pub divergent: Vec<bool>,
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
}

#[derive(Clone)]
struct Point {
    q: Vec<f64>,
    p: Vec<f64>,
    g: Vec<f64>,
    lp: f64,
}

struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(d: usize) -> Self {
        Self { n: 0, mean: vec![0.0; d], m2: vec![0.0; d] }
    }
    fn add(&mut self, x: &[f64]) {
        self.n += 1;
        for i in 0..x.len() {
            let delta = x[i] - self.mean[i];
            self.mean[i] += delta / self.n as f64;
            self.m2[i] += delta * (x[i] - self.mean[i]);
        }
    }
    fn restart(&mut self) {
        self.n = 0;
        self.mean.iter_mut().for_each(|v| *v = 0.0);
        self.m2.iter_mut().for_each(|v| *v = 0.0);
    }
}

struct DualAveraging {
    mu: f64,
    delta: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(delta: f64) -> Self {
        Self { mu: 0.0, delta, counter: 0.0, s_bar: 0.0, x_bar: 0.0 }
    }
    fn restart(&mut self) {
        self.counter = 0.0;
        self.s_bar = 0.0;
        self.x_bar = 0.0;
    }
    fn learn(&mut self, accept: f64) -> f64 {
        self.counter += 1.0;
        let a = accept.min(1.0);
        let eta = 1.0 / (self.counter + Self::T0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.delta - a);
        let x = self.mu - self.s_bar * self.counter.sqrt() / Self::GAMMA;
        let x_eta = self.counter.powf(-Self::KAPPA);
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x;
        x.exp()
    }
    fn final_step(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Metric-adaptation windows: (init buffer, term buffer, base window).
fn windows(warmup: usize) -> (usize, usize, usize) {
    let (init, term, base) = (75, 50, 25);
    if warmup < 20 {
        (warmup, 0, 0)
    } else if init + term + base > warmup {
        let init = (0.15 * warmup as f64) as usize;
        let term = (0.1 * warmup as f64) as usize;
        (init, term, warmup - init - term)
    } else {
        (init, term, base)
    }
}

struct Sampler<'a, M: LogDensity> {
    model: &'a M,
    rng: ChaCha20Rng,
    inv_metric: Vec<f64>,
    eps: f64,
    max_depth: usize,
    divergent: bool,
}

impl<M: LogDensity> Sampler<'_, M> {
    fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p.iter().zip(&self.inv_metric).map(|(p, m)| p * p * m).sum::<f64>()
    }

    fn hamiltonian(&self, z: &Point) -> f64 {
        -z.lp + self.kinetic(&z.p)
    }

    fn p_sharp(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(&self.inv_metric).map(|(p, m)| p * m).collect()
    }

    fn sample_momentum(&mut self, z: &mut Point) {
        for (p, m) in z.p.iter_mut().zip(&self.inv_metric) {
            let e: f64 = self.rng.sample(StandardNormal);
            *p = e / m.sqrt();
        }
    }

    fn leapfrog(&self, z: &mut Point, eps: f64) {
        for (p, g) in z.p.iter_mut().zip(&z.g) {
            *p += 0.5 * eps * g;
        }
        for ((q, p), m) in z.q.iter_mut().zip(&z.p).zip(&self.inv_metric) {
            *q += eps * m * p;
        }
        z.lp = self.model.logp_grad(&z.q, &mut z.g);
        if !z.lp.is_finite() {
            z.lp = f64::NEG_INFINITY;
            return;
        }
        for (p, g) in z.p.iter_mut().zip(&z.g) {
            *p += 0.5 * eps * g;
        }
    }

    fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    fn init_stepsize(&mut self, z0: &Point) {
        let mut z = z0.clone();
        self.sample_momentum(&mut z);
        let h0 = self.hamiltonian(&z);
        self.leapfrog(&mut z, self.eps);
        let h = nan_to_inf(self.hamiltonian(&z));
        let direction = if h0 - h > 0.8f64.ln() { 1 } else { -1 };
        loop {
            let mut z = z0.clone();
            self.sample_momentum(&mut z);
            let h0 = self.hamiltonian(&z);
            self.leapfrog(&mut z, self.eps);
            let h = nan_to_inf(self.hamiltonian(&z));
            let dh = h0 - h;
            if direction == 1 && dh <= 0.8f64.ln() || direction == -1 && dh >= 0.8f64.ln() {
                break;
            }
            if direction == 1 {
                self.eps *= 2.0;
            } else {
                self.eps /= 2.0;
            }
            if self.eps > 1e7 || self.eps < 1e-12 {
                self.eps = self.eps.clamp(1e-12, 1e7);
                break;
            }
        }
    }

    /// One NUTS transition from `z0`; returns (new point, accept stat, depth, leapfrogs).
    fn transition(&mut self, z0: &Point) -> (Point, f64, usize, usize) {
        let mut z = z0.clone();
        self.sample_momentum(&mut z);
        self.divergent = false;
        let h0 = self.hamiltonian(&z);

        let mut z_fwd = z.clone();
        let mut z_bck = z.clone();
        let mut z_sample = z.clone();
        let mut z_propose = z.clone();

        let ps = self.p_sharp(&z.p);
        let mut p_fwd_fwd = z.p.clone();
        let mut p_sharp_fwd_fwd = ps.clone();
        let mut p_fwd_bck = z.p.clone();
        let mut p_sharp_fwd_bck = ps.clone();
        let mut p_bck_fwd = z.p.clone();
        let mut p_sharp_bck_fwd = ps.clone();
        let mut p_bck_bck = z.p.clone();
        let mut p_sharp_bck_bck = ps;

        let mut rho = z.p.clone();
        let mut log_sum_weight = 0.0;
        let mut n_leapfrog = 0;
        let mut sum_metro_prob = 0.0;
        let mut depth = 0;
        let d = z.q.len();

        while depth < self.max_depth {
            let mut rho_fwd = vec![0.0; d];
            let mut rho_bck = vec![0.0; d];
            let mut lsw_subtree = f64::NEG_INFINITY;
            let valid;
            if self.uniform() > 0.5 {
                rho_bck.copy_from_slice(&rho);
                p_bck_fwd.copy_from_slice(&p_fwd_bck);
                p_sharp_bck_fwd.copy_from_slice(&p_sharp_fwd_bck);
                let mut cur = z_fwd.clone();
                valid = self.build_tree(
                    depth,
                    &mut cur,
                    &mut z_propose,
                    &mut p_sharp_fwd_bck,
                    &mut p_sharp_fwd_fwd,
                    &mut rho_fwd,
                    &mut p_fwd_bck,
                    &mut p_fwd_fwd,
                    h0,
                    1.0,
                    &mut n_leapfrog,
                    &mut lsw_subtree,
                    &mut sum_metro_prob,
                );
                z_fwd = cur;
            } else {
                rho_fwd.copy_from_slice(&rho);
                p_fwd_bck.copy_from_slice(&p_bck_fwd);
                p_sharp_fwd_bck.copy_from_slice(&p_sharp_bck_fwd);
                let mut cur = z_bck.clone();
                valid = self.build_tree(
                    depth,
                    &mut cur,
                    &mut z_propose,
                    &mut p_sharp_bck_fwd,
                    &mut p_sharp_bck_bck,
                    &mut rho_bck,
                    &mut p_bck_fwd,
                    &mut p_bck_bck,
                    h0,
                    -1.0,
                    &mut n_leapfrog,
                    &mut lsw_subtree,
                    &mut sum_metro_prob,
                );
                z_bck = cur;
            }
            if !valid {
                break;
            }
            depth += 1;
            if lsw_subtree > log_sum_weight {
                z_sample = z_propose.clone();
            } else {
                let accept = (lsw_subtree - log_sum_weight).exp();
                if self.uniform() < accept {
                    z_sample = z_propose.clone();
                }
            }
            log_sum_weight = log_sum_exp(&[log_sum_weight, lsw_subtree]);

            for i in 0..d {
                rho[i] = rho_bck[i] + rho_fwd[i];
            }
            let mut persist = criterion(&p_sharp_bck_bck, &p_sharp_fwd_fwd, &rho);
            let ext: Vec<f64> = rho_bck.iter().zip(&p_fwd_bck).map(|(a, b)| a + b).collect();
            persist &= criterion(&p_sharp_bck_bck, &p_sharp_fwd_bck, &ext);
            let ext: Vec<f64> = rho_fwd.iter().zip(&p_bck_fwd).map(|(a, b)| a + b).collect();
            persist &= criterion(&p_sharp_bck_fwd, &p_sharp_fwd_fwd, &ext);
            if !persist {
                break;
            }
        }
        let accept = if n_leapfrog > 0 { sum_metro_prob / n_leapfrog as f64 } else { 0.0 };
        (z_sample, accept, depth, n_leapfrog)
    }

    #[allow(clippy::too_many_arguments)]
    fn build_tree(
        &mut self,
        depth: usize,
        z: &mut Point,
        z_propose: &mut Point,
        p_sharp_beg: &mut Vec<f64>,
        p_sharp_end: &mut Vec<f64>,
        rho: &mut [f64],
        p_beg: &mut Vec<f64>,
        p_end: &mut Vec<f64>,
        h0: f64,
        sign: f64,
        n_leapfrog: &mut usize,
        log_sum_weight: &mut f64,
        sum_metro_prob: &mut f64,
    ) -> bool {
        if depth == 0 {
            self.leapfrog(z, sign * self.eps);
            *n_leapfrog += 1;
            let h = nan_to_inf(self.hamiltonian(z));
            if h - h0 > MAX_DELTA_H {
                self.divergent = true;
            }
            *log_sum_weight = log_sum_exp(&[*log_sum_weight, h0 - h]);
            *sum_metro_prob += if h0 - h > 0.0 { 1.0 } else { (h0 - h).exp() };
            *z_propose = z.clone();
            *p_sharp_beg = self.p_sharp(&z.p);
            *p_sharp_end = p_sharp_beg.clone();
            for (r, p) in rho.iter_mut().zip(&z.p) {
                *r += p;
            }
            *p_beg = z.p.clone();
            *p_end = z.p.clone();
            return !self.divergent;
        }
        let d = z.q.len();
        let mut lsw_init = f64::NEG_INFINITY;
        let mut p_init_end = vec![0.0; d];
        let mut p_sharp_init_end = vec![0.0; d];
        let mut rho_init = vec![0.0; d];
        if !self.build_tree(
            depth - 1,
            z,
            z_propose,
            p_sharp_beg,
            &mut p_sharp_init_end,
            &mut rho_init,
            p_beg,
            &mut p_init_end,
            h0,
            sign,
            n_leapfrog,
            &mut lsw_init,
            sum_metro_prob,
        ) {
            return false;
        }
        let mut z_propose_final = z.clone();
        let mut lsw_final = f64::NEG_INFINITY;
        let mut p_final_beg = vec![0.0; d];
        let mut p_sharp_final_beg = vec![0.0; d];
        let mut rho_final = vec![0.0; d];
        if !self.build_tree(
            depth - 1,
            z,
            &mut z_propose_final,
            &mut p_sharp_final_beg,
            p_sharp_end,
            &mut rho_final,
            &mut p_final_beg,
            p_end,
            h0,
            sign,
            n_leapfrog,
            &mut lsw_final,
            sum_metro_prob,
        ) {
            return false;
        }
        let lsw_subtree = log_sum_exp(&[lsw_init, lsw_final]);
        *log_sum_weight = log_sum_exp(&[*log_sum_weight, lsw_subtree]);
        if lsw_final > lsw_subtree {
            *z_propose = z_propose_final;
        } else {
            let accept = (lsw_final - lsw_subtree).exp();
            if self.uniform() < accept {
                *z_propose = z_propose_final;
            }
        }
        let rho_subtree: Vec<f64> = rho_init.iter().zip(&rho_final).map(|(a, b)| a + b).collect();
        for (r, s) in rho.iter_mut().zip(&rho_subtree) {
            *r += s;
        }
        let mut persist = criterion(p_sharp_beg, p_sharp_end, &rho_subtree);
        let ext: Vec<f64> = rho_init.iter().zip(&p_final_beg).map(|(a, b)| a + b).collect();
        persist &= criterion(p_sharp_beg, &p_sharp_final_beg, &ext);
        let ext: Vec<f64> = rho_final.iter().zip(&p_init_end).map(|(a, b)| a + b).collect();
        persist &= criterion(&p_sharp_init_end, p_sharp_end, &ext);
        persist
    }
}

fn nan_to_inf(h: f64) -> f64 {
    if h.is_nan() {
        f64::INFINITY
    } else {
        h
    }
}

fn criterion(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    let a: f64 = p_sharp_plus.iter().zip(rho).map(|(x, y)| x * y).sum();
    let b: f64 = p_sharp_minus.iter().zip(rho).map(|(x, y)| x * y).sum();
    a > 0.0 && b > 0.0
}

/// Runs one chain from `init`. Warmup draws are discarded.
pub fn run_chain<M: LogDensity>(model: &M, init: Vec<f64>, settings: &NutsSettings, rng: ChaCha20Rng) -> ChainOutput {
    let d = model.dim();
    let mut s = Sampler {
        model,
        rng,
        inv_metric: vec![1.0; d],
        eps: 1.0,
        max_depth: settings.max_treedepth,
        divergent: false,
    };
    let mut g = vec![0.0; d];
    let lp = model.logp_grad(&init, &mut g);
    let mut z = Point { p: vec![0.0; d], q: init, g, lp };

    let mut da = DualAveraging::new(settings.target_accept);
    if settings.warmup > 0 {
        s.init_stepsize(&z);
        da.mu = (10.0 * s.eps).ln();
    }
    let (init_buf, term_buf, base_window) = windows(settings.warmup);
    let mut est = Welford::new(d);
    let mut window_size = base_window;
    let mut next_window = init_buf + window_size;
    let warmup = settings.warmup;

    for it in 0..warmup {
        let (znew, accept, _, _) = s.transition(&z);
        z = znew;
        s.eps = da.learn(accept);
        if base_window == 0 {
            continue;
        }
        let in_window = it >= init_buf && it < warmup - term_buf;
        if in_window {
            est.add(&z.q);
        }
        if it + 1 == next_window && it + 1 <= warmup - term_buf {
            let n = est.n as f64;
            for i in 0..d {
                let var = est.m2[i] / (n - 1.0);
                s.inv_metric[i] = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0));
            }
            est.restart();
            // next window doubles; stretch it if the one after would not fit
            let end = warmup - term_buf;
            if next_window < end {
                window_size *= 2;
                next_window = it + 1 + window_size;
                if next_window + 2 * window_size > end {
                    next_window = end;
                }
            }
            s.init_stepsize(&z);
            da.mu = (10.0 * s.eps).ln();
            da.restart();
        }
    }
    if warmup > 0 {
        s.eps = da.final_step();
    }

    let mut out = ChainOutput {
        samples: Vec::with_capacity(settings.draws * d),
        lp: Vec::with_capacity(settings.draws),
        accept_stat: Vec::with_capacity(settings.draws),
        treedepth: Vec::with_capacity(settings.draws),
        n_leapfrog: Vec::with_capacity(settings.draws),
        divergent: Vec::with_capacity(settings.draws),
        step_size: s.eps,
        inv_metric: Vec::new(),
    };
    for _ in 0..settings.draws {
        let (znew, accept, depth, nl) = s.transition(&z);
        z = znew;
        out.samples.extend_from_slice(&z.q);
        out.lp.push(z.lp);
        out.accept_stat.push(accept);
        out.treedepth.push(depth);
        out.n_leapfrog.push(nl);
        out.divergent.push(s.divergent);
    }
    out.inv_metric = s.inv_metric;
    out
}
