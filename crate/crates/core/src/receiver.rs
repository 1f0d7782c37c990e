//! Zero-forcing receive bank, residual self-interference, SINRs and rates.
//!
//! Every quantity here is statistical (powers and covariances); no symbols are
//! simulated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};
use num_complex::Complex64;

/// Gram matrices with a larger condition number are treated as singular.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// Rows of the left pseudo-inverse of L, stored as column vectors b_j.
#[derive(Debug, Clone)]
pub struct ZfBank {
    pub b: Vec<CVector>,
    /// Condition number of L^H L.
    pub condition: f64,
}

impl ZfBank {
    pub fn new(channels: &ChannelSet) -> Result<ZfBank> {
        let l = channels.ul_matrix();
        let gram = l.adjoint() * &l;
        let (eig, _) = linalg::hermitian_eigen(&gram);
        let (lo, hi) = (eig[0], eig[eig.len() - 1]);
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(condition <= MAX_GRAM_CONDITION) {
            return Err(Error::Singular { condition });
        }
        let chol = gram.clone().cholesky().ok_or(Error::Singular { condition })?;
        let pinv = chol.solve(&l.adjoint());
        let b = (0..pinv.nrows())
            .map(|j| pinv.row(j).adjoint())
            .collect();
        Ok(ZfBank { b, condition })
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    /// B_j = b_j b_j^H.
    pub fn projector(&self, j: usize) -> CMatrix {
        linalg::outer(&self.b[j])
    }

    /// |b_j^H l_i|^2 = Tr{L_i B_j}.
    pub fn gain(&self, channels: &ChannelSet, j: usize, i: usize) -> f64 {
        self.b[j].dotc(&channels.ul[i]).norm_sqr()
    }

    /// ||b_j||^2 = Tr{B_j}.
    pub fn noise_gain(&self, j: usize) -> f64 {
        self.b[j].norm_squared()
    }

    /// Largest off-diagonal |b_j^H l_i|.
    pub fn max_cross_talk(&self, channels: &ChannelSet) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.len() {
            for (i, l) in channels.ul.iter().enumerate() {
                if i != j {
                    worst = worst.max(self.b[j].dotc(l).norm());
                }
            }
        }
        worst
    }

    /// Q_j = H^H diag(|b_j|^2) H, so that the residual SI at UL terminal j is
    /// rho * sum_k Tr{W_k Q_j}.
    pub fn si_kernel(&self, si: &CMatrix, j: usize) -> CMatrix {
        let weights = self.b[j].map(|z| Complex64::new(z.norm_sqr(), 0.0));
        let mut scaled = si.clone();
        for (n, w) in weights.iter().enumerate() {
            scaled.row_mut(n).scale_mut(w.re);
        }
        linalg::hermitian_part(&(si.adjoint() * scaled))
    }
}

/// S_j = rho Tr{B_j diag(sum_k H W_k H^H)}.
pub fn residual_si(zf: &ZfBank, si: &CMatrix, w: &[CMatrix], rho: f64, j: usize) -> f64 {
    let q = zf.si_kernel(si, j);
    rho * w.iter().map(|wk| linalg::trace_product_re(wk, &q)).sum::<f64>()
}

/// Uplink SINR of terminal j, including any residual ZF cross terms.
#[allow(clippy::too_many_arguments)]
pub fn ul_sinr(
    zf: &ZfBank,
    channels: &ChannelSet,
    p: &[f64],
    w: &[CMatrix],
    rho: f64,
    ul_noise: f64,
    j: usize,
) -> f64 {
    let signal = zf.gain(channels, j, j) * p[j];
    if signal == 0.0 {
        return 0.0;
    }
    let inter: f64 = (0..p.len())
        .filter(|&i| i != j)
        .map(|i| zf.gain(channels, j, i) * p[i])
        .sum();
    let denom = inter + residual_si(zf, &channels.si, w, rho, j) + zf.noise_gain(j) * ul_noise;
    signal / denom
}

/// Downlink SINR of terminal k for a specific CCI realisation `cci` (one entry per UL terminal).
pub fn dl_sinr(
    channels: &ChannelSet,
    w: &[CMatrix],
    cci: &[Complex64],
    p: &[f64],
    dl_noise: f64,
    k: usize,
) -> f64 {
    let h = &channels.dl[k];
    let signal = linalg::quad_form(&w[k], h);
    if signal == 0.0 {
        return 0.0;
    }
    let mui: f64 = w
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != k)
        .map(|(_, wi)| linalg::quad_form(wi, h))
        .sum();
    let cci_power: f64 = cci.iter().zip(p).map(|(c, pj)| c.norm_sqr() * pj).sum();
    signal / (mui + cci_power + dl_noise)
}

pub fn rate(sinr: f64) -> f64 {
    (1.0 + sinr).log2()
}

/// SINRs and rates for every terminal.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkRates {
    pub ul_sinr: Vec<f64>,
    pub dl_sinr: Vec<f64>,
    pub ul_rate: Vec<f64>,
    pub dl_rate: Vec<f64>,
}

impl LinkRates {
    /// Rates with the DL CCI evaluated at the supplied per-terminal vectors.
    #[allow(clippy::too_many_arguments)]
    pub fn evaluate(
        zf: &ZfBank,
        channels: &ChannelSet,
        p: &[f64],
        w: &[CMatrix],
        cci: &[Vec<Complex64>],
        rho: f64,
        ul_noise: f64,
        dl_noise: &[f64],
    ) -> LinkRates {
        let ul_sinr: Vec<f64> = (0..p.len())
            .map(|j| ul_sinr(zf, channels, p, w, rho, ul_noise, j))
            .collect();
        let dl_sinr: Vec<f64> = (0..w.len())
            .map(|k| dl_sinr(channels, w, &cci[k], p, dl_noise[k], k))
            .collect();
        LinkRates {
            ul_rate: ul_sinr.iter().map(|&g| rate(g)).collect(),
            dl_rate: dl_sinr.iter().map(|&g| rate(g)).collect(),
            ul_sinr,
            dl_sinr,
        }
    }
}

fn uniform_ball(rng: &mut impl Rng, dim: usize, radius: f64) -> Vec<Complex64> {
    let mut v: Vec<Complex64> = (0..dim)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re, im)
        })
        .collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    // The ball lives in C^dim = R^(2 dim).
    let r = radius * rng.random::<f64>().powf(1.0 / (2 * dim) as f64);
    for z in &mut v {
        *z *= r / norm;
    }
    v
}

/// Sampled worst-case DL rate over ||dc|| <= eps around `c_hat`.
///
/// Besides `samples` uniform draws in the ball, boundary probes along +/- c_hat
/// and along each coordinate (phase-aligned and anti-aligned with c_hat_j) are
/// always included.
#[allow(clippy::too_many_arguments)]
pub fn worst_case_dl_rate(
    channels: &ChannelSet,
    w: &[CMatrix],
    c_hat: &[Complex64],
    eps: f64,
    p: &[f64],
    dl_noise: f64,
    k: usize,
    samples: usize,
    seed: u64,
) -> f64 {
    assert!(samples >= 1, "need at least one sample");
    let eval = |dc: &[Complex64]| {
        let c: Vec<Complex64> = c_hat.iter().zip(dc).map(|(a, b)| a + b).collect();
        rate(dl_sinr(channels, w, &c, p, dl_noise, k))
    };
    let dim = c_hat.len();
    let mut worst = eval(&vec![Complex64::new(0.0, 0.0); dim]);
    if eps == 0.0 {
        return worst;
    }
    let norm = c_hat.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut probes: Vec<Vec<Complex64>> = Vec::new();
    if norm > 0.0 {
        for sign in [1.0, -1.0] {
            probes.push(c_hat.iter().map(|z| z * (sign * eps / norm)).collect());
        }
    }
    for j in 0..dim {
        let phase = if c_hat[j].norm() > 0.0 { c_hat[j] / c_hat[j].norm() } else { Complex64::new(1.0, 0.0) };
        for sign in [1.0, -1.0] {
            let mut d = vec![Complex64::new(0.0, 0.0); dim];
            d[j] = phase * (sign * eps);
            probes.push(d);
        }
    }
    for d in &probes {
        worst = worst.min(eval(d));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        worst = worst.min(eval(&uniform_ball(&mut rng, dim, eps)));
    }
    worst
}

/// Exact max of sum_j p_j |c_hat_j + dc_j|^2 over ||dc|| <= eps (p >= 0).
///
/// Trust-region maximisation of a convex diagonal quadratic: the maximiser sits
/// on the boundary with dc_j = p_j c_hat_j / (mu - p_j), mu >= max p.
pub fn worst_case_cci_power(c_hat: &[Complex64], eps: f64, p: &[f64]) -> f64 {
    let nominal: f64 = c_hat.iter().zip(p).map(|(c, pj)| c.norm_sqr() * pj).sum();
    if eps == 0.0 {
        return nominal;
    }
    let p_max = p.iter().copied().fold(0.0f64, f64::max);
    if p_max <= 0.0 {
        return 0.0;
    }
    let norm2 = |mu: f64| -> f64 {
        c_hat
            .iter()
            .zip(p)
            .map(|(c, &pj)| {
                if pj == 0.0 {
                    0.0
                } else {
                    let d = pj * c.norm() / (mu - pj);
                    d * d
                }
            })
            .sum()
    };
    let eps2 = eps * eps;
    let tol = 1e-15 * p_max;
    // Hard case: the secular function stays below eps^2 as mu -> p_max because the
    // top-weighted entries of c_hat vanish; the rest of the radius goes there.
    let top_has_mass = c_hat
        .iter()
        .zip(p)
        .any(|(c, &pj)| pj >= p_max - tol && c.norm() > 0.0);
    let (mu, spare) = if !top_has_mass && norm2(p_max * (1.0 + 1e-14) + tol) <= eps2 {
        let mu = p_max;
        let used: f64 = c_hat
            .iter()
            .zip(p)
            .filter(|(_, &pj)| pj < p_max - tol)
            .map(|(c, &pj)| (pj * c.norm() / (mu - pj)).powi(2))
            .sum();
        (mu, (eps2 - used).max(0.0))
    } else {
        let mut lo = p_max;
        let mut hi = p_max + p_max * (1.0 + c_hat.iter().map(|c| c.norm()).sum::<f64>() / eps) + 1.0;
        while norm2(hi) > eps2 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if norm2(mid) > eps2 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (hi, 0.0)
    };
    let mut value = 0.0;
    for (c, &pj) in c_hat.iter().zip(p) {
        if pj >= p_max - tol && !top_has_mass {
            continue;
        }
        let mag = c.norm() + if pj == 0.0 { 0.0 } else { pj * c.norm() / (mu - pj) };
        value += pj * mag * mag;
    }
    value + p_max * spare
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelSet;
    use crate::linalg::{c, outer};
    use crate::scenario::{Scenario, SystemConfig};
    use approx::assert_relative_eq;

    fn toy_channels(ul: Vec<CVector>, dl: Vec<CVector>, n: usize, m: usize) -> ChannelSet {
        ChannelSet { si: CMatrix::from_fn(n, m, |a, b| c((a + 1) as f64, b as f64 * 0.5)), ul, dl }
    }

    #[test]
    fn single_user_zf_is_matched_filter() {
        let l = CVector::from_vec(vec![c(1.0, 2.0), c(-0.5, 0.3), c(0.0, 1.0)]);
        let ch = toy_channels(vec![l.clone()], vec![], 3, 1);
        let zf = ZfBank::new(&ch).unwrap();
        let expected = l.unscale(l.norm_squared());
        assert!((&zf.b[0] - expected).norm() < 1e-14);
        assert_relative_eq!(zf.b[0].dotc(&l).re, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn orthogonal_users() {
        let l1 = CVector::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)]);
        let l2 = CVector::from_vec(vec![c(0.0, 2.0), c(0.0, -2.0)]);
        let ch = toy_channels(vec![l1.clone(), l2.clone()], vec![], 2, 1);
        let zf = ZfBank::new(&ch).unwrap();
        assert!((&zf.b[0] - l1.unscale(2.0)).norm() < 1e-14);
        assert!((&zf.b[1] - l2.unscale(8.0)).norm() < 1e-14);
        assert!(zf.max_cross_talk(&ch) < 1e-15);
    }

    #[test]
    fn rank_deficient_is_singular() {
        let l1 = CVector::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)]);
        let ch = toy_channels(vec![l1.clone(), l1.scale(2.0)], vec![], 2, 1);
        assert!(matches!(ZfBank::new(&ch), Err(Error::Singular { .. })));
    }

    #[test]
    fn zero_covariance_and_zero_loss() {
        let s = Scenario::generate(&SystemConfig::desk()).unwrap();
        let layout = crate::experiments::upa_layout(8, 8, s.config.wavelength / 2.0);
        let ch = ChannelSet::assemble(&layout, &s);
        let zf = ZfBank::new(&ch).unwrap();
        let w0 = vec![CMatrix::zeros(8, 8); 2];
        assert_eq!(residual_si(&zf, &ch.si, &w0, 1e-10, 0), 0.0);
        let w = vec![CMatrix::identity(8, 8); 2];
        assert_eq!(residual_si(&zf, &ch.si, &w, 0.0, 1), 0.0);
        assert!(residual_si(&zf, &ch.si, &w, 1e-10, 1) > 0.0);
    }

    #[test]
    fn interference_free_ul_sinr() {
        let s = Scenario::generate(&SystemConfig::desk()).unwrap();
        let layout = crate::experiments::upa_layout(8, 8, s.config.wavelength / 2.0);
        let ch = ChannelSet::assemble(&layout, &s);
        let zf = ZfBank::new(&ch).unwrap();
        let w0 = vec![CMatrix::zeros(8, 8); 2];
        let p = [1e-3, 2e-3, 0.0];
        let g = ul_sinr(&zf, &ch, &p, &w0, 1e-10, 1e-14, 1);
        assert_relative_eq!(g, 2e-3 / (zf.noise_gain(1) * 1e-14), max_relative = 1e-8);
        assert_eq!(ul_sinr(&zf, &ch, &p, &w0, 1e-10, 1e-14, 2), 0.0);
    }

    #[test]
    fn single_dl_user_matched() {
        let h = CVector::from_vec(vec![c(0.3, 0.1), c(-0.2, 0.4)]);
        let ch = toy_channels(vec![], vec![h.clone()], 1, 2);
        let wv = CVector::from_vec(vec![c(1.0, -1.0), c(0.5, 0.0)]);
        let g = dl_sinr(&ch, &[outer(&wv)], &[c(1.0, 1.0)], &[0.0], 0.01, 0);
        assert_relative_eq!(g, h.dotc(&wv).norm_sqr() / 0.01, max_relative = 1e-12);
        assert_eq!(dl_sinr(&ch, &[CMatrix::zeros(2, 2)], &[c(1.0, 1.0)], &[1.0], 0.01, 0), 0.0);
    }

    #[test]
    fn worst_case_rate_cases() {
        let h = CVector::from_vec(vec![c(0.3, 0.1), c(-0.2, 0.4)]);
        let ch = toy_channels(vec![], vec![h], 1, 2);
        let w = vec![CMatrix::identity(2, 2)];
        let c_hat = [c(0.2, -0.1)];
        let nominal = rate(dl_sinr(&ch, &w, &c_hat, &[2.0], 0.05, 0));
        assert_eq!(worst_case_dl_rate(&ch, &w, &c_hat, 0.0, &[2.0], 0.05, 0, 10, 1), nominal);
        let no_ul = rate(dl_sinr(&ch, &w, &c_hat, &[0.0], 0.05, 0));
        assert_eq!(worst_case_dl_rate(&ch, &w, &c_hat, 0.5, &[0.0], 0.05, 0, 10, 1), no_ul);

        // J = 1: the worst case inflates |c| to |c_hat| + eps.
        let eps = 0.07;
        let worst_c = [c_hat[0] * ((c_hat[0].norm() + eps) / c_hat[0].norm())];
        let analytic = rate(dl_sinr(&ch, &w, &worst_c, &[2.0], 0.05, 0));
        let sampled = worst_case_dl_rate(&ch, &w, &c_hat, eps, &[2.0], 0.05, 0, 2000, 3);
        assert!((sampled - analytic).abs() < 1e-3);
        assert!(sampled <= nominal);
    }

    #[test]
    fn exact_worst_case_power_single_entry() {
        let v = worst_case_cci_power(&[c(0.0, 3.0)], 1.0, &[2.0]);
        assert_relative_eq!(v, 2.0 * 16.0, max_relative = 1e-12);
        // Hard case: all weight on an entry with zero estimate.
        let v = worst_case_cci_power(&[c(0.0, 0.0), c(1.0, 0.0)], 0.5, &[3.0, 1.0]);
        assert_relative_eq!(v, 2.25, max_relative = 1e-12);
        let v = worst_case_cci_power(&[c(0.0, 0.0), c(1.0, 0.0)], 1.0, &[3.0, 1.0]);
        assert_relative_eq!(v, 4.5, max_relative = 1e-12);
    }
}
