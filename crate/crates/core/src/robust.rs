//! The inner robust SDP for fixed antenna positions.
//!
//! Decision variables are the UL powers `p`, the DL covariance matrices `W_k`
//! (rank constraint relaxed), the LMI multipliers `delta_k` and the Tchebycheff
//! level `tau`. Internally every variable is expressed in a per-instance unit
//! (`p_unit` watts for powers, `w_unit` watts for covariances) and every row is
//! divided by its noise term, which keeps the solver's data close to unity.

use std::path::{Path, PathBuf};

use log::warn;
use num_complex::Complex64;

use crate::channel::{AntennaLayout, ChannelSet};
use crate::conic::{ConicProgram, LinExpr, MatrixExpr, SolveStatus, VarId, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};
use crate::receiver::ZfBank;
use crate::scenario::Scenario;
use crate::units::sinr_threshold;

/// Below this rank ratio the extracted beamformer is flagged.
pub const RANK_WARNING_RATIO: f64 = 0.95;

/// Everything the inner problem needs for one layout.
#[derive(Debug, Clone)]
pub struct InnerProblemData {
    pub channels: ChannelSet,
    pub zf: ZfBank,
    pub ul_thresholds: Vec<f64>,
    pub dl_thresholds: Vec<f64>,
    /// Estimated CCI vectors, one length-J vector per DL terminal.
    pub c_hat: Vec<Vec<Complex64>>,
    pub eps: Vec<f64>,
    pub weights: [f64; 2],
    pub references: [f64; 2],
    pub ul_noise: f64,
    pub dl_noise: Vec<f64>,
    pub rho: f64,
}

impl InnerProblemData {
    pub fn new(scenario: &Scenario, layout: &AntennaLayout) -> Result<Self> {
        let channels = ChannelSet::assemble(layout, scenario);
        let zf = ZfBank::new(&channels)?;
        Self::from_parts(scenario, channels, zf)
    }

    pub fn from_parts(scenario: &Scenario, channels: ChannelSet, zf: ZfBank) -> Result<Self> {
        let cfg = &scenario.config;
        let k_count = cfg.num_dl_uts;
        let data = InnerProblemData {
            channels,
            zf,
            ul_thresholds: cfg.ul_rate_thresholds.iter().map(|&r| sinr_threshold(r)).collect(),
            dl_thresholds: cfg.dl_rate_thresholds.iter().map(|&r| sinr_threshold(r)).collect(),
            c_hat: (0..k_count).map(|k| scenario.cci_est_vector(k)).collect(),
            eps: (0..k_count).map(|k| scenario.cci_radius(k)).collect(),
            weights: cfg.weights,
            references: cfg.references,
            ul_noise: cfg.ul_noise,
            dl_noise: cfg.dl_noise.clone(),
            rho: cfg.si_loss,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn num_ul(&self) -> usize {
        self.channels.ul.len()
    }

    pub fn num_dl(&self) -> usize {
        self.channels.dl.len()
    }

    pub fn num_tx(&self) -> usize {
        self.channels.num_tx()
    }

    pub fn validate(&self) -> Result<()> {
        let (j, k) = (self.num_ul(), self.num_dl());
        if self.zf.len() != j {
            return Err(Error::Config("ZF bank size differs from the number of UL terminals".into()));
        }
        if self.ul_thresholds.len() != j || self.dl_thresholds.len() != k {
            return Err(Error::Config("one rate threshold per terminal required".into()));
        }
        if self.c_hat.len() != k || self.eps.len() != k || self.dl_noise.len() != k {
            return Err(Error::Config("CCI estimates, radii and DL noise need one entry per DL terminal".into()));
        }
        if self.c_hat.iter().any(|c| c.len() != j) {
            return Err(Error::Config("each CCI estimate needs one entry per UL terminal".into()));
        }
        if self.ul_thresholds.iter().any(|&g| !(g >= 0.0 && g.is_finite())) {
            return Err(Error::Config("UL SINR thresholds must be nonnegative".into()));
        }
        if self.dl_thresholds.iter().any(|&g| !(g > 0.0 && g.is_finite())) {
            return Err(Error::Config("DL SINR thresholds must be positive".into()));
        }
        if self.eps.iter().any(|&e| !(e >= 0.0 && e.is_finite())) {
            return Err(Error::Config("CCI error radii must be nonnegative".into()));
        }
        if !(self.ul_noise > 0.0) || self.dl_noise.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Config("noise powers must be positive".into()));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::Config("SI loss must be nonnegative".into()));
        }
        if self.weights.iter().any(|&w| !(w >= 0.0)) || (self.weights[0] + self.weights[1] - 1.0).abs() > 1e-9 {
            return Err(Error::Config("weights must be nonnegative and sum to 1".into()));
        }
        if self.references.iter().any(|&t| !(t.abs() > 0.0 && t.is_finite())) {
            return Err(Error::Config("reference powers must be nonzero".into()));
        }
        Ok(())
    }

    pub fn with_weights(&self, weights: [f64; 2]) -> Self {
        InnerProblemData { weights, ..self.clone() }
    }

    pub fn with_references(&self, references: [f64; 2]) -> Self {
        InnerProblemData { references, ..self.clone() }
    }

    /// Power unit for `p`: the UL noise plus SI seen after the ZF filter, times the SINR target.
    pub fn p_unit(&self) -> f64 {
        let j = self.num_ul().max(1) as f64;
        let total: f64 = (0..self.num_ul()).map(|j| target_scale(self.ul_thresholds[j]) * self.ul_floor(j)).sum();
        (total / j).max(f64::MIN_POSITIVE)
    }

    /// Noise plus SI seen by UL terminal `j` when `W_k = w_unit I / M` for every k.
    fn ul_floor(&self, j: usize) -> f64 {
        let noise = self.zf.noise_gain(j) * self.ul_noise;
        let m = self.num_tx().max(1) as f64;
        let si = self.rho * self.w_unit() * self.num_dl() as f64 / m
            * self.zf.si_kernel(&self.channels.si, j).trace().re;
        noise + si
    }

    /// Power unit for `W`: DL noise times the SINR target over the mean channel gain.
    pub fn w_unit(&self) -> f64 {
        let k = self.num_dl().max(1) as f64;
        let noise = self.dl_noise.iter().zip(&self.dl_thresholds).map(|(s, &g)| s * target_scale(g)).sum::<f64>() / k;
        let gain = self.channels.dl.iter().map(|h| h.norm_squared()).sum::<f64>() / k;
        if gain > 0.0 {
            noise / gain
        } else {
            1.0
        }
    }
}

fn target_scale(gamma: f64) -> f64 {
    if gamma > 0.0 {
        gamma
    } else {
        1.0
    }
}

/// One UL rate row `constant + sum_i p_coef[i] p_i + Re Tr(si_kernel * sum_k W_k) >= 0`.
#[derive(Debug, Clone)]
pub struct UlRateRow {
    pub j: usize,
    pub p_coef: Vec<f64>,
    pub si_kernel: CMatrix,
    pub constant: f64,
}

impl UlRateRow {
    pub fn slack(&self, p: &[f64], w: &[CMatrix]) -> f64 {
        let lin: f64 = self.p_coef.iter().zip(p).map(|(a, b)| a * b).sum();
        let si: f64 = w.iter().map(|wk| linalg::trace_product_re(wk, &self.si_kernel)).sum();
        self.constant + lin + si
    }

    /// Same row in scaled variables, divided by `norm`.
    fn rescaled(&self, p_unit: f64, w_unit: f64, norm: f64) -> UlRateRow {
        let norm = if norm > 0.0 { norm } else { 1.0 };
        UlRateRow {
            j: self.j,
            p_coef: self.p_coef.iter().map(|c| c * p_unit / norm).collect(),
            si_kernel: self.si_kernel.scale(w_unit / norm),
            constant: self.constant / norm,
        }
    }
}

/// UL rate requirement of terminal `j`, affine in `(p, W)`.
pub fn build_c1(data: &InnerProblemData, j: usize) -> UlRateRow {
    let gamma = data.ul_thresholds[j];
    let zf = &data.zf;
    let p_coef = (0..data.num_ul())
        .map(|i| {
            let g = zf.gain(&data.channels, j, i);
            if i == j {
                g
            } else {
                -gamma * g
            }
        })
        .collect();
    let si_kernel = zf.si_kernel(&data.channels.si, j).scale(-gamma * data.rho);
    UlRateRow { j, p_coef, si_kernel, constant: -gamma * zf.noise_gain(j) * data.ul_noise }
}

/// Robust DL constraint of terminal `k` as a (J+1) x (J+1) Hermitian LMI.
#[derive(Debug, Clone)]
pub struct LmiBlock {
    pub k: usize,
    pub c_hat: Vec<Complex64>,
    pub eps: f64,
    /// H_k = h_k h_k^H.
    pub channel_cov: CMatrix,
    pub gamma: f64,
    pub noise: f64,
}

impl LmiBlock {
    pub fn dim(&self) -> usize {
        self.c_hat.len() + 1
    }

    /// chi_k at the given point.
    pub fn chi(&self, p: &[f64], w: &[CMatrix], delta: f64) -> f64 {
        let cpc: f64 = self.c_hat.iter().zip(p).map(|(c, pj)| c.norm_sqr() * pj).sum();
        let mut value = -delta * self.eps * self.eps - cpc - self.noise;
        for (i, wi) in w.iter().enumerate() {
            let t = linalg::trace_product_re(wi, &self.channel_cov);
            value += if i == self.k { t / self.gamma } else { -t };
        }
        value
    }

    /// The LMI matrix evaluated at `(p, W, delta_k)`.
    pub fn matrix_at(&self, p: &[f64], w: &[CMatrix], delta: f64) -> CMatrix {
        let j = self.c_hat.len();
        let mut m = CMatrix::zeros(j + 1, j + 1);
        for (i, (&pi, &ci)) in p.iter().zip(&self.c_hat).enumerate() {
            m[(i, i)] = Complex64::new(delta - pi, 0.0);
            m[(i, j)] = -ci * pi;
            m[(j, i)] = -ci.conj() * pi;
        }
        m[(j, j)] = Complex64::new(self.chi(p, w, delta), 0.0);
        m
    }

    /// `D M D` with `D = diag(I / sqrt(p_unit), 1 / sqrt(noise))`; PSD iff `M` is.
    pub fn normalized_matrix_at(&self, p: &[f64], w: &[CMatrix], delta: f64, p_unit: f64) -> CMatrix {
        let mut m = self.matrix_at(p, w, delta);
        let j = self.c_hat.len();
        let d: Vec<f64> = (0..=j)
            .map(|i| if i < j { 1.0 / p_unit.sqrt() } else { 1.0 / self.noise.sqrt() })
            .collect();
        for r in 0..=j {
            for c in 0..=j {
                m[(r, c)] *= d[r] * d[c];
            }
        }
        m
    }

    /// Congruence by diag(I / sqrt(p_unit), 1 / sqrt(noise)) in scaled variables.
    fn rescaled(&self, p_unit: f64, w_unit: f64) -> LmiBlock {
        let s = (p_unit / self.noise).sqrt();
        LmiBlock {
            k: self.k,
            c_hat: self.c_hat.iter().map(|c| c * s).collect(),
            eps: self.eps * s,
            channel_cov: self.channel_cov.scale(w_unit / self.noise),
            gamma: self.gamma,
            noise: 1.0,
        }
    }
}

pub fn build_lmi(data: &InnerProblemData, k: usize) -> LmiBlock {
    LmiBlock {
        k,
        c_hat: data.c_hat[k].clone(),
        eps: data.eps[k],
        channel_cov: linalg::outer(&data.channels.dl[k]),
        gamma: data.dl_thresholds[k],
        noise: data.dl_noise[k],
    }
}

/// Weighted Tchebycheff terms `lambda_i (T_i - T*_i) / |T*_i| <= tau`.
///
/// Terms with zero weight are omitted: they would only add `tau >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tchebycheff {
    pub weights: [f64; 2],
    pub references: [f64; 2],
}

impl Tchebycheff {
    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        (0..2).filter(|&i| self.weights[i] > 0.0)
    }

    pub fn term(&self, i: usize, total: f64) -> f64 {
        self.weights[i] * (total - self.references[i]) / self.references[i].abs()
    }

    /// Smallest feasible `tau` for the given totals.
    pub fn level(&self, totals: [f64; 2]) -> f64 {
        self.active().map(|i| self.term(i, totals[i])).fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn build_tchebycheff(data: &InnerProblemData) -> Result<Tchebycheff> {
    if data.references.iter().any(|&t| !(t.abs() > 0.0 && t.is_finite())) {
        return Err(Error::Config("reference powers must be nonzero".into()));
    }
    if data.weights.iter().all(|&w| w <= 0.0) {
        return Err(Error::Config("at least one weight must be positive".into()));
    }
    Ok(Tchebycheff { weights: data.weights, references: data.references })
}

pub const DEFAULT_AUGMENTATION: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct InnerOptions {
    pub tol: f64,
    /// Coefficient `eps` of the augmentation `eps * sum_i (T_i - T*_i) / |T*_i|`
    /// added to `tau`; any positive value makes the optimum properly Pareto.
    pub augmentation: f64,
    /// Dumps every assembled program here (and failures regardless of `dump_all`).
    pub dump_dir: Option<PathBuf>,
    pub dump_all: bool,
}

impl Default for InnerOptions {
    fn default() -> Self {
        InnerOptions { tol: DEFAULT_TOL, augmentation: DEFAULT_AUGMENTATION, dump_dir: None, dump_all: false }
    }
}

/// Rank-one recovery from a covariance matrix.
#[derive(Debug, Clone)]
pub struct Beamformer {
    pub w: CVector,
    pub rank_ratio: f64,
    pub warning: Option<String>,
}

pub fn extract_beamformer(cov: &CMatrix) -> Beamformer {
    let trace = cov.trace().re;
    let (lambda, v) = linalg::principal_eigenpair(cov);
    let lambda = lambda.max(0.0);
    let rank_ratio = if trace > 0.0 { (lambda / trace).min(1.0) } else { 1.0 };
    let warning = (rank_ratio < RANK_WARNING_RATIO).then(|| {
        format!("covariance is far from rank one (rank ratio {rank_ratio:.4})")
    });
    Beamformer { w: v.scale(lambda.sqrt()), rank_ratio, warning }
}

pub fn extract_beamformers(covs: &[CMatrix]) -> Vec<Beamformer> {
    covs.iter().map(extract_beamformer).collect()
}

#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub status: SolveStatus,
    pub p: Vec<f64>,
    pub w_cov: Vec<CMatrix>,
    pub beamformers: Vec<CVector>,
    pub delta: Vec<f64>,
    /// Tchebycheff level of the returned point; +inf unless optimal.
    pub tau: f64,
    pub total_ul: f64,
    pub total_dl: f64,
    pub rank_ratio: Vec<f64>,
    pub warnings: Vec<String>,
    pub solve_time: f64,
    pub iterations: u32,
    pub dump_path: Option<PathBuf>,
}

impl InnerSolution {
    fn failed(status: SolveStatus, time: f64, iterations: u32, dump_path: Option<PathBuf>) -> Self {
        InnerSolution {
            status,
            p: Vec::new(),
            w_cov: Vec::new(),
            beamformers: Vec::new(),
            delta: Vec::new(),
            tau: f64::INFINITY,
            total_ul: f64::NAN,
            total_dl: f64::NAN,
            rank_ratio: Vec::new(),
            warnings: Vec::new(),
            solve_time: time,
            iterations,
            dump_path,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn totals(&self) -> [f64; 2] {
        [self.total_ul, self.total_dl]
    }
}

struct Assembled {
    prog: ConicProgram,
    p: Vec<VarId>,
    w: Vec<VarId>,
    delta: Vec<VarId>,
    p_unit: f64,
    w_unit: f64,
}

fn assemble(data: &InnerProblemData, tch: &Tchebycheff, augmentation: f64) -> Assembled {
    let (j_count, k_count, m) = (data.num_ul(), data.num_dl(), data.num_tx());
    let p_unit = data.p_unit();
    let w_unit = data.w_unit();
    let mut prog = ConicProgram::new();
    let p: Vec<VarId> = (0..j_count).map(|j| prog.add_scalar(&format!("p{}", j + 1))).collect();
    let w: Vec<VarId> = (0..k_count).map(|k| prog.add_hermitian(&format!("W{}", k + 1), m)).collect();
    let delta: Vec<VarId> = (0..k_count).map(|k| prog.add_scalar(&format!("delta{}", k + 1))).collect();
    let tau = prog.add_scalar("tau");

    let rows: Vec<UlRateRow> = (0..j_count)
        .map(|j| build_c1(data, j).rescaled(p_unit, w_unit, target_scale(data.ul_thresholds[j]) * data.ul_floor(j)))
        .collect();
    for (j, row) in rows.iter().enumerate() {
        let mut e = LinExpr::constant(row.constant);
        for (i, &c) in row.p_coef.iter().enumerate() {
            e.add_term(prog.param(p[i]), c);
        }
        for &wk in &w {
            e.add_scaled(&prog.trace_inner(wk, &row.si_kernel), 1.0);
        }
        prog.add_nonneg(format!("ul_rate[{j}]"), e);
    }

    for (k, &delta_k) in delta.iter().enumerate() {
        let lmi = build_lmi(data, k).rescaled(p_unit, w_unit);
        let last = j_count;
        let one = Complex64::new(1.0, 0.0);
        let mut e = MatrixExpr::hermitian(j_count + 1);
        let dk = prog.param(delta_k);
        let mut chi = LinExpr::constant(-1.0);
        chi.add_term(dk, -lmi.eps * lmi.eps);
        for (i, c) in lmi.c_hat.iter().enumerate() {
            let pi = prog.param(p[i]);
            e.add_param(dk, i, i, one);
            e.add_param(pi, i, i, -one);
            e.add_param(pi, i, last, -c);
            chi.add_term(pi, -c.norm_sqr());
        }
        for (i, &wi) in w.iter().enumerate() {
            let scale = if i == k { 1.0 / lmi.gamma } else { -1.0 };
            chi.add_scaled(&prog.trace_inner(wi, &lmi.channel_cov), scale);
        }
        e.add_lin(last, last, &chi, one);
        prog.add_psd(format!("dl_robust[{k}]"), e);
    }

    for (j, &pj) in p.iter().enumerate() {
        prog.add_nonneg(format!("p_nonneg[{j}]"), prog.var(pj));
    }
    for (k, &wk) in w.iter().enumerate() {
        prog.add_psd(format!("W_psd[{k}]"), prog.matrix_expr(wk));
    }
    for (k, &dk) in delta.iter().enumerate() {
        prog.add_nonneg(format!("delta_nonneg[{k}]"), prog.var(dk));
    }

    let totals = |prog: &ConicProgram| -> [LinExpr; 2] {
        let mut t1 = LinExpr::default();
        for &pj in &p {
            t1.add_term(prog.param(pj), p_unit);
        }
        let mut t2 = LinExpr::default();
        for &wk in &w {
            t2.add_scaled(&prog.trace(wk), w_unit);
        }
        [t1, t2]
    };
    let t = totals(&prog);
    let level_terms = |i: usize| -> LinExpr {
        let r = tch.references[i];
        let mut e = t[i].scaled(tch.weights[i] / r.abs());
        e.constant -= tch.weights[i] * r / r.abs();
        e
    };
    for i in tch.active() {
        let mut e = prog.var(tau);
        e.add_scaled(&level_terms(i), -1.0);
        prog.add_nonneg(format!("level[{i}]"), e);
    }
    let mut obj = prog.var(tau);
    if augmentation > 0.0 {
        for (i, ti) in t.iter().enumerate() {
            let r = tch.references[i];
            let mut e = ti.scaled(augmentation / r.abs());
            e.constant -= augmentation * r / r.abs();
            obj.add_scaled(&e, 1.0);
        }
    }
    prog.minimize(obj);
    Assembled { prog, p, w, delta, p_unit, w_unit }
}

fn dump(dir: &Path, prog: &ConicProgram, tag: &str) -> Option<PathBuf> {
    let text = prog.to_sparse_text();
    let hash = text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x1000_0000_01b3));
    let path = dir.join(format!("inner-{tag}-{hash:016x}.txt"));
    match std::fs::create_dir_all(dir).and_then(|_| std::fs::write(&path, text)) {
        Ok(()) => Some(path),
        Err(e) => {
            warn!("could not write program dump {}: {e}", path.display());
            None
        }
    }
}

/// Solves the inner problem. Infeasibility is a normal outcome, reported in `status`.
pub fn solve_inner(data: &InnerProblemData, opts: &InnerOptions) -> Result<InnerSolution> {
    data.validate()?;
    let tch = build_tchebycheff(data)?;
    if !(opts.augmentation >= 0.0 && opts.augmentation.is_finite()) {
        return Err(Error::Config("augmentation must be a nonnegative number".into()));
    }
    let asm = assemble(data, &tch, opts.augmentation);
    let mut dump_path = None;
    if let (Some(dir), true) = (&opts.dump_dir, opts.dump_all) {
        dump_path = dump(dir, &asm.prog, "level");
    }
    let rep = asm.prog.solve(opts.tol)?;
    let (time, iterations) = (rep.solve_time, rep.iterations);
    if rep.status != SolveStatus::Optimal {
        if rep.status == SolveStatus::NumericalFailure {
            if let (Some(dir), None) = (&opts.dump_dir, &dump_path) {
                dump_path = dump(dir, &asm.prog, "level");
            }
            warn!(
                "inner solve failed ({}, residual {:.2e}, gap {:.2e}){}",
                rep.backend_status,
                rep.primal_residual,
                rep.duality_gap,
                dump_path.as_ref().map(|p| format!("; program written to {}", p.display())).unwrap_or_default()
            );
        }
        return Ok(InnerSolution::failed(rep.status, time, iterations, dump_path));
    }
    let x = rep.x;
    let p: Vec<f64> = asm.p.iter().map(|&v| asm.p_unit * asm.prog.scalar_value(v, &x)).collect();
    let w_cov: Vec<CMatrix> = asm
        .w
        .iter()
        .map(|&v| linalg::hermitian_part(&asm.prog.matrix_value(v, &x).scale(asm.w_unit)))
        .collect();
    let delta: Vec<f64> = asm.delta.iter().map(|&v| asm.p_unit * asm.prog.scalar_value(v, &x)).collect();
    let total_ul = p.iter().sum::<f64>();
    let total_dl = w_cov.iter().map(|w| w.trace().re).sum::<f64>();
    let extracted = extract_beamformers(&w_cov);
    let mut warnings = Vec::new();
    for (k, b) in extracted.iter().enumerate() {
        if let Some(msg) = &b.warning {
            warnings.push(format!("DL terminal {}: {msg}", k + 1));
        }
    }
    Ok(InnerSolution {
        status: SolveStatus::Optimal,
        tau: tch.level([total_ul, total_dl]),
        rank_ratio: extracted.iter().map(|b| b.rank_ratio).collect(),
        beamformers: extracted.into_iter().map(|b| b.w).collect(),
        p,
        w_cov,
        delta,
        total_ul,
        total_dl,
        warnings,
        solve_time: time,
        iterations,
        dump_path,
    })
}

/// Single-objective optima `[min T_1, min T_2]`, usable as references.
pub fn calibrate_references(data: &InnerProblemData, opts: &InnerOptions) -> Result<Option<[f64; 2]>> {
    let mut out = [0.0; 2];
    for (i, weights) in [[1.0, 0.0], [0.0, 1.0]].into_iter().enumerate() {
        let sol = solve_inner(&data.with_weights(weights), opts)?;
        if !sol.is_optimal() {
            return Ok(None);
        }
        out[i] = sol.totals()[i];
        if !(out[i] > 0.0) {
            return Err(Error::Contract(format!("single-objective optimum {i} is not positive")));
        }
    }
    Ok(Some(out))
}

/// Largest violation of the solution invariants, or `None` if all hold.
pub fn audit_solution(data: &InnerProblemData, sol: &InnerSolution) -> Option<String> {
    if !sol.is_optimal() {
        return None;
    }
    if let Some(j) = sol.p.iter().position(|&x| x < 0.0) {
        return Some(format!("p[{j}] is negative"));
    }
    for (k, w) in sol.w_cov.iter().enumerate() {
        let scale = w.trace().re.abs().max(f64::MIN_POSITIVE);
        if linalg::min_eigenvalue(w) < -1e-9 * scale.max(1.0) {
            return Some(format!("W[{k}] is not PSD"));
        }
    }
    for j in 0..data.num_ul() {
        let row = build_c1(data, j);
        let scale = row.constant.abs() + row.p_coef.iter().zip(&sol.p).map(|(a, b)| (a * b).abs()).sum::<f64>();
        let rel = row.slack(&sol.p, &sol.w_cov) / scale.max(f64::MIN_POSITIVE);
        if rel < -1e-7 {
            return Some(format!("UL rate row {j} violated (relative slack {rel:.3e})"));
        }
    }
    for k in 0..data.num_dl() {
        let lmi = build_lmi(data, k);
        let m = lmi.normalized_matrix_at(&sol.p, &sol.w_cov, sol.delta[k], data.p_unit());
        let eig = linalg::min_eigenvalue(&m);
        if eig < -1e-7 {
            return Some(format!("robust DL block {k} violated (normalised eigenvalue {eig:.3e})"));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use crate::scenario::SystemConfig;
    use approx::assert_relative_eq;

    fn toy(ul: Vec<CVector>, dl: Vec<CVector>, c_hat: Vec<Vec<Complex64>>, eps: Vec<f64>) -> InnerProblemData {
        let n = ul.first().map_or(1, |l| l.len());
        let m = dl.first().map_or(1, |h| h.len());
        let channels = ChannelSet { si: CMatrix::from_fn(n, m, |a, b| c(1.0 + a as f64, 0.5 * b as f64)), ul, dl };
        let zf = ZfBank::new(&channels).unwrap();
        let (j, k) = (channels.ul.len(), channels.dl.len());
        InnerProblemData {
            channels,
            zf,
            ul_thresholds: vec![1.0; j],
            dl_thresholds: vec![1.0; k],
            c_hat,
            eps,
            weights: [0.5, 0.5],
            references: [1.0, 1.0],
            ul_noise: 0.1,
            dl_noise: vec![0.2; k],
            rho: 0.0,
        }
    }

    #[test]
    fn ul_floor_without_si() {
        let l = CVector::from_vec(vec![c(1.0, 0.5), c(0.0, -1.0)]);
        let h = CVector::from_vec(vec![c(1.0, 0.0)]);
        let data = toy(vec![l.clone()], vec![h], vec![vec![c(0.1, 0.0)]], vec![0.0]);
        let row = build_c1(&data, 0);
        let floor = data.ul_thresholds[0] * data.zf.noise_gain(0) * data.ul_noise;
        let w = vec![CMatrix::identity(1, 1)];
        assert_relative_eq!(row.slack(&[floor], &w), 0.0, epsilon = 1e-15);
        assert!(row.slack(&[floor * 1.01], &w) > 0.0);
    }

    #[test]
    fn lmi_with_zero_power_is_block_diagonal() {
        let h = CVector::from_vec(vec![c(0.7, 0.1), c(0.2, -0.4)]);
        let data = toy(
            vec![CVector::from_vec(vec![c(1.0, 0.0)])],
            vec![h.clone()],
            vec![vec![c(0.3, 0.2)]],
            vec![0.05],
        );
        let lmi = build_lmi(&data, 0);
        let w = vec![CMatrix::identity(2, 2).scale(0.8)];
        let m = lmi.matrix_at(&[0.0], &w, 0.4);
        assert_eq!(m[(0, 1)], c(0.0, 0.0));
        assert_relative_eq!(m[(0, 0)].re, 0.4);
        let expected = 0.8 * h.norm_squared() / 1.0 - 0.2 - 0.4 * 0.05 * 0.05;
        assert_relative_eq!(m[(1, 1)].re, expected, max_relative = 1e-14);
    }

    #[test]
    fn tchebycheff_requires_nonzero_reference() {
        let data = toy(
            vec![CVector::from_vec(vec![c(1.0, 0.0)])],
            vec![CVector::from_vec(vec![c(1.0, 0.0)])],
            vec![vec![c(0.1, 0.0)]],
            vec![0.0],
        );
        assert!(build_tchebycheff(&data.with_references([0.0, 1.0])).is_err());
        let t = build_tchebycheff(&data).unwrap();
        assert_relative_eq!(t.level([3.0, 2.0]), 1.0);
        let corner = build_tchebycheff(&data.with_weights([1.0, 0.0])).unwrap();
        assert_eq!(corner.active().collect::<Vec<_>>(), vec![0]);
        assert_relative_eq!(corner.level([0.5, 100.0]), -0.5);
    }

    #[test]
    fn extract_exact_rank_one() {
        let w = CVector::from_vec(vec![c(0.3, -1.0), c(2.0, 0.5), c(0.0, 0.1)]);
        let b = extract_beamformer(&linalg::outer(&w));
        let phase = b.w.dotc(&w);
        let aligned = w.scale(1.0) * (phase.conj() / phase.norm());
        assert!((&b.w - aligned).norm() < 1e-9);
        assert!(b.warning.is_none());
        assert_relative_eq!(b.rank_ratio, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn extract_identity_warns() {
        let b = extract_beamformer(&CMatrix::identity(2, 2));
        assert_relative_eq!(b.rank_ratio, 0.5, epsilon = 1e-12);
        assert!(b.warning.is_some());
        assert!(b.w.norm_squared() <= 2.0 + 1e-9);
    }

    #[test]
    fn desk_instance_solves_and_audits() {
        let s = Scenario::generate(&SystemConfig::desk()).unwrap();
        let layout = crate::experiments::upa_layout(8, 8, s.config.wavelength / 2.0);
        let data = InnerProblemData::new(&s, &layout).unwrap();
        let sol = solve_inner(&data, &InnerOptions::default()).unwrap();
        assert!(sol.is_optimal(), "status {}", sol.status);
        assert_eq!(audit_solution(&data, &sol), None);
        assert_relative_eq!(sol.total_ul, sol.p.iter().sum::<f64>());
        for r in &sol.rank_ratio {
            assert!(*r >= 0.99, "rank ratio {r}");
        }
    }
}
