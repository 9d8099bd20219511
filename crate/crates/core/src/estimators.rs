//! U-statistics shadow estimators and NOQE matrix-element reconstruction.
//!
//! With A = (D+1)P - I for a rank-one projector P = |s><s|, powers of A stay in the
//! span of P and I, so the ordered-distinct-tuple sums reduce to a handful of
//! projector accumulations:
//!
//! * m = 2: S1^2 - S2
//! * m = 3: S1^3 - S2 S1 - S1 S2 - T(S1) + 2 S3, with T(M) = sum_a A_a M A_a
//!
//! All sums accept per-snapshot multiplicities so bootstrap resamples reuse them.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::pauli::PauliSum;
use crate::shadows::{derive_seed, resample_counts, ShadowDataset};
use crate::C64;

const CHUNK: usize = 4096;

/// Default floor on |S_ij| before dividing by it.
pub const DEFAULT_DELTA: f64 = 0.05;

/// Pulled-back stabilizer states U^dagger|b> of a dataset, stored row by row.
#[derive(Debug, Clone)]
pub struct PulledBack {
    num_qubits: usize,
    dim: usize,
    states: Vec<C64>,
}

impl PulledBack {
    pub fn new(ds: &ShadowDataset) -> Self {
        let dim = 1usize << ds.num_qubits;
        let mut states = vec![C64::new(0.0, 0.0); dim * ds.len()];
        states
            .par_chunks_mut(dim)
            .zip(ds.snapshots.par_iter())
            .for_each(|(out, s)| s.tableau.pullback_into(s.outcome, out));
        PulledBack {
            num_qubits: ds.num_qubits,
            dim,
            states,
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, k: usize) -> &[C64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    /// sum_a w_a f_a |s_a><s_a| with f_a = <s_a|Q|s_a> when Q is given, else 1.
    /// Chunks are reduced in index order so the result does not depend on threads.
    fn projector_sum(&self, weights: Option<&[f64]>, q: Option<&DMatrix<C64>>) -> DMatrix<C64> {
        let d = self.dim;
        let qrow: Option<Vec<C64>> = q.map(|m| (0..d * d).map(|k| m[(k / d, k % d)]).collect());
        let partials: Vec<Vec<C64>> = self
            .states
            .par_chunks(CHUNK * d)
            .enumerate()
            .map(|(ci, chunk)| {
                let mut acc = vec![C64::new(0.0, 0.0); d * d];
                for (k, v) in chunk.chunks_exact(d).enumerate() {
                    let mut coef = weights.map_or(1.0, |w| w[ci * CHUNK + k]);
                    if coef == 0.0 {
                        continue;
                    }
                    if let Some(qr) = &qrow {
                        let mut f = C64::new(0.0, 0.0);
                        for r in 0..d {
                            let row: C64 = (0..d).map(|c| qr[r * d + c] * v[c]).sum();
                            f += v[r].conj() * row;
                        }
                        coef *= f.re;
                    }
                    for r in 0..d {
                        let a = v[r] * coef;
                        let out = &mut acc[r * d..(r + 1) * d];
                        for (o, vc) in out.iter_mut().zip(v) {
                            *o += a * vc.conj();
                        }
                    }
                }
                acc
            })
            .collect();
        let mut total = vec![C64::new(0.0, 0.0); d * d];
        for p in partials {
            for (t, x) in total.iter_mut().zip(p) {
                *t += x;
            }
        }
        DMatrix::from_row_slice(d, d, &total)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShadowEstimate {
    pub matrix: DMatrix<C64>,
    pub m: usize,
    /// Effective sample count (sum of multiplicities).
    pub n: f64,
    pub trace: C64,
}

fn hermitize(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Order-m U-statistic estimate of rho^m, optionally with bootstrap multiplicities.
pub fn u_estimate_weighted(p: &PulledBack, m: usize, weights: Option<&[f64]>) -> Result<ShadowEstimate> {
    if !(1..=3).contains(&m) {
        return Err(contract(format!("estimator order {m} not in 1..=3")));
    }
    if let Some(w) = weights {
        if w.len() != p.len() {
            return Err(contract("weight vector length differs from snapshot count"));
        }
    }
    let n: f64 = weights.map_or(p.len() as f64, |w| w.iter().sum());
    if n < m as f64 {
        return Err(contract(format!("order-{m} estimator needs at least {m} snapshots, got {n}")));
    }
    let d = p.dim();
    let a = (d + 1) as f64;
    let id = DMatrix::<C64>::identity(d, d);
    let sp = p.projector_sum(weights, None);
    let s1 = &sp * real(a) - &id * real(n);
    let raw = match m {
        1 => &s1 / real(n),
        2 => {
            let s2 = &sp * real(a * a - 2.0 * a) + &id * real(n);
            (&s1 * &s1 - s2) / real(n * (n - 1.0))
        }
        _ => {
            let s2 = &sp * real(a * a - 2.0 * a) + &id * real(n);
            let s3 = &sp * real(a * a * a - 3.0 * a * a + 3.0 * a) - &id * real(n);
            let psq = p.projector_sum(weights, Some(&s1));
            let t = psq * real(a * a) - (&sp * &s1 + &s1 * &sp) * real(a) + &s1 * real(n);
            let s1sq = &s1 * &s1;
            let sum = &s1sq * &s1 - &s2 * &s1 - &s1 * &s2 - t + s3 * real(2.0);
            sum / real(n * (n - 1.0) * (n - 2.0))
        }
    };
    let matrix = hermitize(&raw);
    let trace = matrix.trace();
    Ok(ShadowEstimate { matrix, m, n, trace })
}

pub fn u_estimate(ds: &ShadowDataset, m: usize) -> Result<ShadowEstimate> {
    u_estimate_weighted(&PulledBack::new(ds), m, None)
}

/// Normalizes an estimate by its trace, turning downstream functionals into ratios.
pub fn distill(est: &ShadowEstimate) -> Result<ShadowEstimate> {
    if est.trace.norm() < 1e-6 {
        return Err(Error::Degenerate(format!(
            "estimate trace {:.3e} too small to normalize",
            est.trace.norm()
        )));
    }
    if est.trace == real(1.0) {
        return Ok(est.clone());
    }
    let matrix = &est.matrix / est.trace;
    Ok(ShadowEstimate {
        matrix,
        m: est.m,
        n: est.n,
        trace: real(1.0),
    })
}

/// Tr(O rho_hat).
pub fn linear(est: &ShadowEstimate, obs: &PauliSum) -> Result<C64> {
    obs.trace_product(&est.matrix)
}

/// Tr(O A B), or Tr(O A B) + Tr(O B A) when symmetrized.
pub fn bilinear(a: &ShadowEstimate, b: &ShadowEstimate, obs: &PauliSum, symmetrized: bool) -> Result<C64> {
    if a.matrix.shape() != b.matrix.shape() {
        return Err(contract("estimates have different dimensions"));
    }
    let ab = obs.trace_product(&(&a.matrix * &b.matrix))?;
    if symmetrized {
        Ok(ab + obs.trace_product(&(&b.matrix * &a.matrix))?)
    } else {
        Ok(ab)
    }
}

fn check_obs(ds: &ShadowDataset, obs: &PauliSum) -> Result<()> {
    if ds.num_qubits != obs.num_qubits() {
        return Err(contract(format!(
            "dataset has {} qubits, observable {}",
            ds.num_qubits,
            obs.num_qubits()
        )));
    }
    Ok(())
}

pub fn estimate_linear(ds: &ShadowDataset, obs: &PauliSum, m: usize) -> Result<C64> {
    check_obs(ds, obs)?;
    linear(&u_estimate(ds, m)?, obs)
}

fn check_pair(a: &ShadowDataset, b: &ShadowDataset) -> Result<()> {
    if a.num_qubits != b.num_qubits {
        return Err(contract("datasets have different qubit counts"));
    }
    if std::ptr::eq(a, b) || a == b {
        return Err(contract("bilinear estimates need two independently acquired datasets"));
    }
    Ok(())
}

pub fn estimate_bilinear(a: &ShadowDataset, b: &ShadowDataset, obs: &PauliSum, m: usize, symmetrized: bool) -> Result<C64> {
    check_pair(a, b)?;
    check_obs(a, obs)?;
    bilinear(&u_estimate(a, m)?, &u_estimate(b, m)?, obs, symmetrized)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOptions {
    pub m: usize,
    pub distill: bool,
    pub delta: f64,
    /// Bootstrap resamples for standard errors; 0 disables them.
    pub bootstrap: usize,
    pub seed: u64,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            m: 3,
            distill: false,
            delta: DEFAULT_DELTA,
            bootstrap: 200,
            seed: 0,
        }
    }
}

impl EstimatorOptions {
    /// Applies the distillation flag to a raw estimate.
    pub fn finish(&self, est: ShadowEstimate) -> Result<ShadowEstimate> {
        if self.distill {
            distill(&est)
        } else {
            Ok(est)
        }
    }

    pub fn estimate(&self, p: &PulledBack, weights: Option<&[f64]>) -> Result<ShadowEstimate> {
        self.finish(u_estimate_weighted(p, self.m, weights)?)
    }
}

/// Complex value with separate standard errors for its real and imaginary parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: C64,
    pub se: Option<C64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapEstimate {
    pub value: C64,
    pub abs_sq: f64,
    /// |Re^2 + Im^2 - |S|^2|
    pub residual: f64,
}

/// S_ij from the five state estimates: |S|^2 from the references, Re from the two R
/// auxiliaries, Im from the I auxiliary of i with the R auxiliary of j.
pub fn overlap_from_estimates(
    psi_i: &ShadowEstimate,
    real_i: &ShadowEstimate,
    imag_i: &ShadowEstimate,
    psi_j: &ShadowEstimate,
    real_j: &ShadowEstimate,
) -> OverlapEstimate {
    let tr = |a: &ShadowEstimate, b: &ShadowEstimate| (&a.matrix * &b.matrix).trace().re;
    let abs_sq = tr(psi_i, psi_j);
    let base = 0.5 * (1.0 + abs_sq);
    let re = 2.0 * tr(real_i, real_j) - base;
    let im = 2.0 * tr(imag_i, real_j) - base;
    OverlapEstimate {
        value: C64::new(re, im),
        abs_sq,
        residual: (re * re + im * im - abs_sq).abs(),
    }
}

/// H_ij = Tr(H rho_j rho_i) / conj(S_ij); for pure states Tr(H rho_j rho_i) = conj(S_ij) H_ij.
pub fn hamiltonian_from_estimates(
    psi_i: &ShadowEstimate,
    psi_j: &ShadowEstimate,
    h: &PauliSum,
    s_ij: C64,
    delta: f64,
) -> Result<C64> {
    let numerator = bilinear(psi_j, psi_i, h, false)?;
    if s_ij.norm() < delta {
        return Err(Error::UnreliableDivision {
            numerator,
            overlap: s_ij,
            delta,
        });
    }
    Ok(numerator / s_ij.conj())
}

/// Standard errors of `f` over bootstrap resamples of every dataset in `inputs`.
///
/// Each resample redraws all datasets independently, rebuilds their estimates and
/// evaluates `f`; outputs that are not finite (e.g. a failed division) are skipped.
pub fn bootstrap_se<F>(inputs: &[&PulledBack], opts: &EstimatorOptions, f: F) -> Result<Vec<C64>>
where
    F: Fn(&[ShadowEstimate]) -> Vec<C64>,
{
    let key = derive_seed(opts.seed, "bootstrap");
    let mut samples: Vec<Vec<C64>> = Vec::with_capacity(opts.bootstrap);
    for r in 0..opts.bootstrap {
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        rng.set_stream(r as u64);
        let ests = inputs
            .iter()
            .map(|p| {
                let w = resample_counts(p.len(), &mut rng);
                opts.estimate(p, Some(&w))
            })
            .collect::<Result<Vec<_>>>();
        match ests {
            Ok(e) => samples.push(f(&e)),
            Err(Error::Degenerate(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    let k = samples.first().map_or(0, Vec::len);
    Ok((0..k)
        .map(|i| {
            let re: Vec<f64> = samples.iter().map(|s| s[i].re).filter(|x| x.is_finite()).collect();
            let im: Vec<f64> = samples.iter().map(|s| s[i].im).filter(|x| x.is_finite()).collect();
            C64::new(std_dev(&re), std_dev(&im))
        })
        .collect())
}

pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Overlap S_ij from raw datasets, with bootstrap SE when enabled.
pub fn reconstruct_overlap(
    psi_i: &ShadowDataset,
    real_i: &ShadowDataset,
    imag_i: &ShadowDataset,
    psi_j: &ShadowDataset,
    real_j: &ShadowDataset,
    opts: &EstimatorOptions,
) -> Result<(Estimate, OverlapEstimate)> {
    let all = [psi_i, real_i, imag_i, psi_j, real_j];
    for w in all.windows(2) {
        if w[0].num_qubits != w[1].num_qubits {
            return Err(contract("overlap datasets have different qubit counts"));
        }
    }
    check_pair(psi_i, psi_j)?;
    check_pair(real_i, real_j)?;
    check_pair(imag_i, real_j)?;
    let pulled: Vec<PulledBack> = all.iter().map(|d| PulledBack::new(d)).collect();
    let ests = pulled
        .iter()
        .map(|p| opts.estimate(p, None))
        .collect::<Result<Vec<_>>>()?;
    let ov = overlap_from_estimates(&ests[0], &ests[1], &ests[2], &ests[3], &ests[4]);
    let se = if opts.bootstrap > 0 {
        let refs: Vec<&PulledBack> = pulled.iter().collect();
        let se = bootstrap_se(&refs, opts, |e| vec![overlap_from_estimates(&e[0], &e[1], &e[2], &e[3], &e[4]).value])?;
        Some(se[0])
    } else {
        None
    };
    Ok((Estimate { value: ov.value, se }, ov))
}

/// Off-diagonal H_ij given an overlap estimate; the SE combines the bootstrap spread of
/// the numerator with the overlap's SE to first order.
pub fn reconstruct_hamiltonian_element(
    psi_i: &ShadowDataset,
    psi_j: &ShadowDataset,
    h: &PauliSum,
    s_ij: &Estimate,
    opts: &EstimatorOptions,
) -> Result<Estimate> {
    check_pair(psi_i, psi_j)?;
    check_obs(psi_i, h)?;
    let (pi, pj) = (PulledBack::new(psi_i), PulledBack::new(psi_j));
    let (ei, ej) = (opts.estimate(&pi, None)?, opts.estimate(&pj, None)?);
    let value = hamiltonian_from_estimates(&ei, &ej, h, s_ij.value, opts.delta)?;
    let se = if opts.bootstrap > 0 {
        let num_se = bootstrap_se(&[&pi, &pj], opts, |e| {
            vec![bilinear(&e[1], &e[0], h, false).unwrap_or(C64::new(f64::NAN, f64::NAN))]
        })?[0];
        let s = s_ij.value.norm();
        let s_se = s_ij.se.map_or(0.0, |x| x.norm());
        let rel = |x: f64| ((x / s).powi(2) + (value.norm() * s_se / s).powi(2)).sqrt();
        Some(C64::new(rel(num_se.re), rel(num_se.im)))
    } else {
        None
    };
    Ok(Estimate { value, se })
}
