//! Zero-noise extrapolation for the Hadamard baseline: unitary folding and an
//! exponential fit a + b e^{-c x} evaluated at x = 0.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::noise::NoiseModel;
use crate::pauli::PauliSum;
use crate::pipeline::{
    combine_diagonal, combine_off_diagonal, direct_expectations, hadamard_expectations, plan_settings, GroupTable,
    MatrixElementEstimates, Measurement, ReferenceSpec, Shots,
};
use crate::shadows::derive_seed;
use crate::sim::Circuit;
use crate::C64;

pub const DEFAULT_SCALES: [f64; 5] = [1.0, 1.5, 2.0, 2.5, 3.0];

const C_MIN: f64 = 1e-3;
const C_MAX: f64 = 10.0;
const GRID: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZneConfig {
    #[serde(default = "default_scales")]
    pub scales: Vec<f64>,
    /// Shots per measurement setting at each scale; 0 means exact expectations.
    pub shots_per_scale: u64,
}

fn default_scales() -> Vec<f64> {
    DEFAULT_SCALES.to_vec()
}

impl ZneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scales.len() < 3 {
            return Err(contract("zne needs at least 3 scale factors"));
        }
        if self.scales.iter().any(|s| !s.is_finite() || *s < 1.0) {
            return Err(contract("zne scale factors must be finite and >= 1"));
        }
        if self.scales.windows(2).any(|w| w[1] <= w[0]) {
            return Err(contract("zne scale factors must be strictly ascending"));
        }
        Ok(())
    }
}

/// U (U^dagger U)^k with the last few gates of the final U replaced by g g^dagger g so
/// the gate count is close to scale * G.
pub fn fold_circuit(c: &Circuit, scale: f64) -> Result<Circuit> {
    if !scale.is_finite() || scale < 1.0 {
        return Err(contract(format!("fold scale {scale} must be >= 1")));
    }
    let g = c.gates.len();
    let k = ((scale - 1.0) / 2.0 + 1e-12).floor() as usize;
    let frac = ((scale - 1.0 - 2.0 * k as f64) / 2.0).max(0.0);
    let partial = ((frac * g as f64) - 1e-9).ceil().max(0.0) as usize;
    let partial = partial.min(g);

    let inverse = c.inverse();
    let mut out = Circuit::new(c.num_qubits);
    out.label = c.label.clone();
    out.gates.reserve(g * (2 * k + 1) + 2 * partial);
    out.gates.extend(c.gates.iter().cloned());
    for _ in 0..k {
        out.gates.extend(inverse.gates.iter().cloned());
        out.gates.extend(c.gates.iter().cloned());
    }
    if partial > 0 {
        let tail: Vec<_> = out.gates.split_off(out.gates.len() - partial);
        for gate in tail {
            let inv = gate.inverse();
            out.gates.push(gate.clone());
            out.gates.push(inv);
            out.gates.push(gate);
        }
    }
    Ok(out)
}

/// Folding used for noisy runs. The circuit is lowered to natives first, and the
/// partial suffix is sized by two-qubit natives, which carry almost all of the
/// noise. Gate-level folding would count a CSWAP (seven two-qubit natives) as one
/// gate, so the noise amplification would no longer follow the nominal scale.
pub fn fold_native(c: &Circuit, scale: f64) -> Result<Circuit> {
    if !scale.is_finite() || scale < 1.0 {
        return Err(contract(format!("fold scale {scale} must be >= 1")));
    }
    let mut lowered = Circuit::new(c.num_qubits);
    lowered.label = c.label.clone();
    lowered.gates = crate::native::lower_all(&c.gates);
    let two_q = lowered.gates.iter().filter(|g| g.qubits().len() == 2).count();
    if two_q == 0 {
        return fold_circuit(&lowered, scale);
    }
    let k = ((scale - 1.0) / 2.0 + 1e-12).floor() as usize;
    let frac = ((scale - 1.0 - 2.0 * k as f64) / 2.0).max(0.0);
    let want = (((frac * two_q as f64) - 1e-9).ceil().max(0.0) as usize).min(two_q);

    let mut out = fold_circuit(&lowered, (1 + 2 * k) as f64)?;
    if want > 0 {
        let mut start = out.gates.len();
        let mut seen = 0;
        while seen < want {
            start -= 1;
            if out.gates[start].qubits().len() == 2 {
                seen += 1;
            }
        }
        let tail: Vec<_> = out.gates.split_off(start);
        for gate in tail {
            let inv = gate.inverse();
            out.gates.push(gate.clone());
            out.gates.push(inv);
            out.gates.push(gate);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZneFit {
    /// Fitted value at x = 0.
    pub value: f64,
    /// Propagated from the point SEs at the fitted c.
    pub se: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub chi2: f64,
    pub residuals: Vec<f64>,
    pub linear_fallback: bool,
}

/// Weighted least squares y ~ a f0 + b f1; returns (a, b, chi2, gain vector of a+b*f1(0)).
fn solve2(x: &[f64], y: &[f64], w: &[f64], f1: impl Fn(f64) -> f64, at0: f64) -> Option<(f64, f64, f64, Vec<f64>)> {
    let (mut s00, mut s01, mut s11) = (0.0, 0.0, 0.0);
    let (mut t0, mut t1) = (0.0, 0.0);
    for i in 0..x.len() {
        let f = f1(x[i]);
        s00 += w[i];
        s01 += w[i] * f;
        s11 += w[i] * f * f;
        t0 += w[i] * y[i];
        t1 += w[i] * f * y[i];
    }
    let det = s00 * s11 - s01 * s01;
    if !(det.abs() > 1e-14 * (s00 * s11).abs().max(1e-300)) {
        return None;
    }
    let a = (s11 * t0 - s01 * t1) / det;
    let b = (s00 * t1 - s01 * t0) / det;
    let chi2 = (0..x.len()).map(|i| w[i] * (y[i] - a - b * f1(x[i])).powi(2)).sum();
    // d(a + b at0)/dy_i
    let gain = (0..x.len())
        .map(|i| {
            let f = f1(x[i]);
            let da = (s11 - s01 * f) * w[i] / det;
            let db = (s00 * f - s01) * w[i] / det;
            da + db * at0
        })
        .collect();
    Some((a, b, chi2, gain))
}

/// Fits a + b e^{-c x} to (scale, value, se) points and returns the x = 0 intercept.
///
/// c is searched on a log grid over [1e-3, 10] and refined by golden section; when
/// the best c sits on the grid boundary the fit falls back to a straight line.
pub fn extrapolate(points: &[(f64, f64, f64)]) -> Result<ZneFit> {
    if points.len() < 3 {
        return Err(contract("extrapolation needs at least 3 points"));
    }
    if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(contract("extrapolation points must be finite"));
    }
    if points.iter().all(|p| p.0 == points[0].0) {
        return Err(contract("extrapolation points share a single scale"));
    }
    let x: Vec<f64> = points.iter().map(|p| p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let se: Vec<f64> = points.iter().map(|p| p.2).collect();
    let w: Vec<f64> = if se.iter().all(|s| s.is_finite() && *s > 0.0) {
        se.iter().map(|s| 1.0 / (s * s)).collect()
    } else {
        vec![1.0; x.len()]
    };
    let chi = |c: f64| solve2(&x, &y, &w, |t| (-c * t).exp(), 1.0).map_or(f64::INFINITY, |r| r.2);

    let grid: Vec<f64> = (0..GRID)
        .map(|k| C_MIN * (C_MAX / C_MIN).powf(k as f64 / (GRID - 1) as f64))
        .collect();
    let mut best = 0;
    let mut best_chi = f64::INFINITY;
    for (k, &c) in grid.iter().enumerate() {
        let v = chi(c);
        if v < best_chi {
            best_chi = v;
            best = k;
        }
    }
    let interior = best > 0 && best < GRID - 1 && best_chi.is_finite();
    if interior {
        // golden section in log c between the grid neighbours
        let (mut lo, mut hi) = (grid[best - 1].ln(), grid[best + 1].ln());
        let r = (5f64.sqrt() - 1.0) / 2.0;
        let mut p = hi - r * (hi - lo);
        let mut q = lo + r * (hi - lo);
        let (mut fp, mut fq) = (chi(p.exp()), chi(q.exp()));
        for _ in 0..100 {
            if fp <= fq {
                hi = q;
                q = p;
                fq = fp;
                p = hi - r * (hi - lo);
                fp = chi(p.exp());
            } else {
                lo = p;
                p = q;
                fp = fq;
                q = lo + r * (hi - lo);
                fq = chi(q.exp());
            }
            if hi - lo < 1e-14 {
                break;
            }
        }
        let c = ((lo + hi) / 2.0).exp();
        if let Some((a, b, chi2, gain)) = solve2(&x, &y, &w, |t| (-c * t).exp(), 1.0) {
            if (a + b).is_finite() {
                return Ok(ZneFit {
                    value: a + b,
                    se: propagate(&gain, &se),
                    a,
                    b,
                    c,
                    chi2,
                    residuals: (0..x.len()).map(|i| y[i] - a - b * (-c * x[i]).exp()).collect(),
                    linear_fallback: false,
                });
            }
        }
    }
    let (a, b, chi2, gain) = solve2(&x, &y, &w, |t| t, 0.0).ok_or_else(|| contract("degenerate extrapolation points"))?;
    Ok(ZneFit {
        value: a,
        se: propagate(&gain, &se),
        a,
        b,
        c: 0.0,
        chi2,
        residuals: (0..x.len()).map(|i| y[i] - a - b * x[i]).collect(),
        linear_fallback: true,
    })
}

fn propagate(gain: &[f64], se: &[f64]) -> f64 {
    gain.iter()
        .zip(se)
        .map(|(g, s)| if s.is_finite() { (g * s).powi(2) } else { 0.0 })
        .sum::<f64>()
        .sqrt()
}

fn extrapolated(scales: &[f64], series: &[Measurement]) -> Result<(Measurement, ZneFit)> {
    let pts: Vec<(f64, f64, f64)> = scales.iter().zip(series).map(|(&s, m)| (s, m.value, m.se)).collect();
    let fit = extrapolate(&pts)?;
    Ok((
        Measurement {
            value: fit.value,
            se: fit.se,
            shots: series.iter().map(|m| m.shots).sum(),
        },
        fit,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZneMatrices {
    pub mitigated: MatrixElementEstimates,
    /// Unmitigated matrices at each scale, in config order.
    pub per_scale: Vec<MatrixElementEstimates>,
    pub fits: usize,
    pub linear_fallbacks: usize,
    /// Sum over scales of the shots spent at that scale.
    pub total_shots: u64,
}

/// Every measured expectation evaluated at each folded scale under `noise`, extrapolated
/// to zero, then assembled into S and H.
pub fn zne_hadamard_matrices(
    specs: &[ReferenceSpec],
    h: &PauliSum,
    groups: Option<&GroupTable>,
    cfg: &ZneConfig,
    noise: Option<&NoiseModel>,
    seed: u64,
) -> Result<ZneMatrices> {
    cfg.validate()?;
    if specs.is_empty() {
        return Err(contract("need at least one reference"));
    }
    let shots = if cfg.shots_per_scale == 0 {
        Shots::Exact
    } else {
        Shots::PerSetting(cfg.shots_per_scale)
    };
    let m = specs.len();
    let scales = &cfg.scales;
    let zero = C64::new(0.0, 0.0);
    let blank = || MatrixElementEstimates {
        labels: specs.iter().map(|s| s.label.clone()).collect(),
        s: DMatrix::identity(m, m),
        h: DMatrix::from_element(m, m, zero),
        s_se: Some(DMatrix::from_element(m, m, zero)),
        h_se: Some(DMatrix::from_element(m, m, zero)),
        flags: Vec::new(),
        overlap_residuals: Vec::new(),
        shots: 0,
    };
    let mut mitigated = blank();
    let mut per_scale: Vec<MatrixElementEstimates> = scales.iter().map(|_| blank()).collect();
    let (mut fits, mut fallbacks) = (0, 0);
    let seeds: Vec<u64> = (0..scales.len()).map(|k| derive_seed(seed, &format!("zne/{k}"))).collect();

    for i in 0..m {
        let classes = groups.and_then(|g| g.diagonal_classes(&specs[i].label));
        let settings = plan_settings(h, classes.as_ref());
        let runs = scales
            .iter()
            .zip(&seeds)
            .map(|(&s, &sd)| direct_expectations(&specs[i], &settings, shots, noise, sd, s))
            .collect::<Result<Vec<_>>>()?;
        for (k, run) in runs.iter().enumerate() {
            let e = combine_diagonal(&settings, run);
            per_scale[k].h[(i, i)] = C64::new(e.value.re, 0.0);
            per_scale[k].h_se.as_mut().unwrap()[(i, i)] = e.se.unwrap_or_default();
            per_scale[k].shots += run.iter().map(|x| x.shots).sum::<u64>();
        }
        let mut mit = Vec::with_capacity(settings.len());
        for t in 0..settings.len() {
            let series: Vec<Measurement> = runs.iter().map(|r| r[t]).collect();
            if settings[t].word.is_identity() {
                mit.push(series[0]);
                continue;
            }
            let (v, fit) = extrapolated(scales, &series)?;
            fits += 1;
            fallbacks += fit.linear_fallback as usize;
            mit.push(v);
        }
        let e = combine_diagonal(&settings, &mit);
        mitigated.h[(i, i)] = C64::new(e.value.re, 0.0);
        mitigated.h_se.as_mut().unwrap()[(i, i)] = e.se.unwrap_or_default();

        for j in i + 1..m {
            let classes = groups.and_then(|g| g.off_diagonal_classes(&specs[i].label, &specs[j].label));
            let settings = plan_settings(h, classes.as_ref());
            let runs = scales
                .iter()
                .zip(&seeds)
                .map(|(&s, &sd)| hadamard_expectations(&specs[i], &specs[j], &settings, shots, noise, sd, s))
                .collect::<Result<Vec<_>>>()?;
            let put = |est: &mut MatrixElementEstimates, run: &[[Measurement; 2]]| {
                let (s, hv) = combine_off_diagonal(&settings, run);
                est.s[(i, j)] = s.value;
                est.s[(j, i)] = s.value.conj();
                est.h[(i, j)] = hv.value;
                est.h[(j, i)] = hv.value.conj();
                let (ss, hs) = (s.se.unwrap_or_default(), hv.se.unwrap_or_default());
                for (a, b) in [(i, j), (j, i)] {
                    est.s_se.as_mut().unwrap()[(a, b)] = ss;
                    est.h_se.as_mut().unwrap()[(a, b)] = hs;
                }
            };
            for (k, run) in runs.iter().enumerate() {
                put(&mut per_scale[k], run);
                per_scale[k].shots += run.iter().map(|x| x[0].shots + x[1].shots).sum::<u64>();
            }
            let mut mit = Vec::with_capacity(settings.len());
            for t in 0..settings.len() {
                let mut pair = [runs[0][t][0]; 2];
                for (ph, slot) in pair.iter_mut().enumerate() {
                    let series: Vec<Measurement> = runs.iter().map(|r| r[t][ph]).collect();
                    let (v, fit) = extrapolated(scales, &series)?;
                    fits += 1;
                    fallbacks += fit.linear_fallback as usize;
                    *slot = v;
                }
                mit.push(pair);
            }
            put(&mut mitigated, &mit);
        }
    }
    let total_shots = per_scale.iter().map(|e| e.shots).sum();
    mitigated.shots = total_shots;
    if shots == Shots::Exact {
        mitigated.s_se = None;
        mitigated.h_se = None;
        for e in &mut per_scale {
            e.s_se = None;
            e.h_se = None;
        }
    }
    Ok(ZneMatrices {
        mitigated,
        per_scale,
        fits,
        linear_fallbacks: fallbacks,
        total_shots,
    })
}
