//! Density-matrix simulation with per-native-gate noise channels.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::native::lower;
use crate::sim::{apply_gate_raw, counts_to_map, sample_counts, sample_index, Circuit, Gate, Statevector};

/// Largest register for density-matrix simulation.
pub const DM_MAX_QUBITS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Depolarizing,
    AmplitudeDamping,
    PhaseDamping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    #[serde(default = "default_p1")]
    pub p1: f64,
    #[serde(default = "default_p2")]
    pub p2: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "all_channels")]
    pub channels: Vec<ChannelKind>,
}

fn default_p1() -> f64 {
    3e-5
}
fn default_p2() -> f64 {
    1.5e-3
}
fn default_lambda() -> f64 {
    1.0
}
fn all_channels() -> Vec<ChannelKind> {
    vec![
        ChannelKind::Depolarizing,
        ChannelKind::AmplitudeDamping,
        ChannelKind::PhaseDamping,
    ]
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            p1: default_p1(),
            p2: default_p2(),
            lambda: default_lambda(),
            channels: all_channels(),
        }
    }
}

impl NoiseModel {
    pub fn scaled(lambda: f64) -> Self {
        NoiseModel {
            lambda,
            ..NoiseModel::default()
        }
    }

    pub fn rate_1q(&self) -> f64 {
        self.lambda * self.p1
    }

    pub fn rate_2q(&self) -> f64 {
        self.lambda * self.p2
    }

    pub fn has(&self, k: ChannelKind) -> bool {
        self.channels.contains(&k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(contract(format!("noise lambda {} must be >= 0", self.lambda)));
        }
        for (name, r) in [("lambda*p1", self.rate_1q()), ("lambda*p2", self.rate_2q())] {
            if !(0.0..=1.0).contains(&r) {
                return Err(contract(format!("effective rate {name} = {r} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.channels.is_empty() || (self.rate_1q() == 0.0 && self.rate_2q() == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    num_qubits: usize,
    /// Row-major D x D; entry (r, c) at r * D + c.
    data: Vec<C64>,
}

impl DensityMatrix {
    pub fn from_pure(psi: &Statevector) -> Result<Self> {
        let n = psi.num_qubits();
        check_size(n)?;
        let a = psi.amplitudes();
        let d = a.len();
        let mut data = vec![C64::new(0.0, 0.0); d * d];
        for r in 0..d {
            for c in 0..d {
                data[r * d + c] = a[r] * a[c].conj();
            }
        }
        Ok(DensityMatrix { num_qubits: n, data })
    }

    pub fn zero_state(n: usize) -> Result<Self> {
        DensityMatrix::from_pure(&Statevector::zero(n))
    }

    pub fn maximally_mixed(n: usize) -> Result<Self> {
        check_size(n)?;
        let d = 1usize << n;
        let mut data = vec![C64::new(0.0, 0.0); d * d];
        for k in 0..d {
            data[k * d + k] = C64::new(1.0 / d as f64, 0.0);
        }
        Ok(DensityMatrix { num_qubits: n, data })
    }

    pub fn from_matrix(m: &DMatrix<C64>) -> Result<Self> {
        let d = m.nrows();
        if d != m.ncols() || !d.is_power_of_two() {
            return Err(contract("density matrix must be square with power-of-two dimension"));
        }
        let n = d.trailing_zeros() as usize;
        check_size(n)?;
        let data = (0..d * d).map(|k| m[(k / d, k % d)]).collect();
        Ok(DensityMatrix { num_qubits: n, data })
    }

    pub fn to_matrix(&self) -> DMatrix<C64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |r, c| self.data[r * d + c])
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.num_qubits
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.dim() + c]
    }

    pub fn trace(&self) -> C64 {
        let d = self.dim();
        (0..d).map(|k| self.data[k * d + k]).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let d = self.dim();
        (0..d).map(|k| self.data[k * d + k].re.max(0.0)).collect()
    }

    /// <psi|rho|psi>.
    pub fn fidelity_with_pure(&self, psi: &Statevector) -> f64 {
        let a = psi.amplitudes();
        let d = self.dim();
        let mut acc = C64::new(0.0, 0.0);
        for r in 0..d {
            let mut row = C64::new(0.0, 0.0);
            for c in 0..d {
                row += self.data[r * d + c] * a[c];
            }
            acc += a[r].conj() * row;
        }
        acc.re
    }

    /// Tr(rho P) for a Pauli word.
    pub fn pauli_expectation(&self, word: &crate::pauli::PauliWord) -> C64 {
        let d = self.dim();
        (0..d)
            .map(|b| {
                let (img, ph) = word.apply_to_basis(b);
                self.data[b * d + img] * ph
            })
            .sum()
    }

    pub fn apply_unitary(&mut self, gate: &Gate) -> Result<()> {
        if gate.qubits().iter().any(|&q| q >= self.num_qubits) {
            return Err(contract("gate qubit outside density matrix"));
        }
        self.unitary_raw(gate);
        Ok(())
    }

    fn unitary_raw(&mut self, gate: &Gate) {
        let n = self.num_qubits;
        apply_gate_raw(&mut self.data, 2 * n, gate, false);
        apply_gate_raw(&mut self.data, 2 * n, &gate.shifted(n), true);
    }

    /// Applies a 4x4 real map to every single-qubit block [r00, r01, r10, r11] on qubit q.
    fn block_map_1q(&mut self, q: usize, m: &[[f64; 4]; 4]) {
        let n = self.num_qubits;
        let rb = 1usize << (2 * n - 1 - q);
        let cb = 1usize << (n - 1 - q);
        for i in 0..self.data.len() {
            if i & (rb | cb) != 0 {
                continue;
            }
            let idx = [i, i | cb, i | rb, i | rb | cb];
            let v = [self.data[idx[0]], self.data[idx[1]], self.data[idx[2]], self.data[idx[3]]];
            for r in 0..4 {
                self.data[idx[r]] = v[0] * m[r][0] + v[1] * m[r][1] + v[2] * m[r][2] + v[3] * m[r][3];
            }
        }
    }

    fn depolarize_2q(&mut self, a: usize, b: usize, p: f64) {
        if p == 0.0 {
            return;
        }
        let n = self.num_qubits;
        let ra = 1usize << (2 * n - 1 - a);
        let rb = 1usize << (2 * n - 1 - b);
        let ca = 1usize << (n - 1 - a);
        let cb = 1usize << (n - 1 - b);
        let all = ra | rb | ca | cb;
        let row_off = [0, rb, ra, ra | rb];
        let col_off = [0, cb, ca, ca | cb];
        for i in 0..self.data.len() {
            if i & all != 0 {
                continue;
            }
            let tr: C64 = (0..4).map(|k| self.data[i | row_off[k] | col_off[k]]).sum();
            for r in 0..4 {
                for c in 0..4 {
                    let k = i | row_off[r] | col_off[c];
                    self.data[k] *= 1.0 - p;
                    if r == c {
                        self.data[k] += tr * (p / 4.0);
                    }
                }
            }
        }
    }
}

fn check_size(n: usize) -> Result<()> {
    if n == 0 || n > DM_MAX_QUBITS {
        return Err(Error::Resource(format!(
            "{n}-qubit density matrix outside the 1..={DM_MAX_QUBITS} guardrail"
        )));
    }
    Ok(())
}

type BlockMap = [[f64; 4]; 4];

const IDENTITY_MAP: BlockMap = [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
];

fn depol_map(p: f64) -> BlockMap {
    [
        [1.0 - p / 2.0, 0.0, 0.0, p / 2.0],
        [0.0, 1.0 - p, 0.0, 0.0],
        [0.0, 0.0, 1.0 - p, 0.0],
        [p / 2.0, 0.0, 0.0, 1.0 - p / 2.0],
    ]
}

fn amp_damp_map(g: f64) -> BlockMap {
    let s = (1.0 - g).sqrt();
    [
        [1.0, 0.0, 0.0, g],
        [0.0, s, 0.0, 0.0],
        [0.0, 0.0, s, 0.0],
        [0.0, 0.0, 0.0, 1.0 - g],
    ]
}

fn phase_damp_map(l: f64) -> BlockMap {
    let s = (1.0 - l).sqrt();
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, s, 0.0, 0.0],
        [0.0, 0.0, s, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

fn compose(after: &BlockMap, before: &BlockMap) -> BlockMap {
    let mut m = [[0.0; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            m[r][c] = (0..4).map(|k| after[r][k] * before[k][c]).sum();
        }
    }
    m
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(contract(format!("channel rate {rate} outside [0, 1]")));
    }
    Ok(())
}

/// Applies one channel. Depolarizing accepts one or two qubits (replacing the
/// support marginal by I/2 or I/4 with probability `rate`); damping channels act
/// independently on each listed qubit.
pub fn apply_channel(rho: &DensityMatrix, kind: ChannelKind, qubits: &[usize], rate: f64) -> Result<DensityMatrix> {
    check_rate(rate)?;
    if qubits.iter().any(|&q| q >= rho.num_qubits) {
        return Err(contract("channel qubit outside density matrix"));
    }
    let mut out = rho.clone();
    match (kind, qubits.len()) {
        (ChannelKind::Depolarizing, 1) => out.block_map_1q(qubits[0], &depol_map(rate)),
        (ChannelKind::Depolarizing, 2) => {
            if qubits[0] == qubits[1] {
                return Err(contract("two-qubit depolarizing needs distinct qubits"));
            }
            out.depolarize_2q(qubits[0], qubits[1], rate)
        }
        (ChannelKind::Depolarizing, k) => return Err(contract(format!("depolarizing on {k} qubits"))),
        (ChannelKind::AmplitudeDamping, _) => {
            for &q in qubits {
                out.block_map_1q(q, &amp_damp_map(rate));
            }
        }
        (ChannelKind::PhaseDamping, _) => {
            for &q in qubits {
                out.block_map_1q(q, &phase_damp_map(rate));
            }
        }
    }
    Ok(out)
}

/// Precomputed per-gate noise action for a model.
#[derive(Debug, Clone)]
pub struct NoiseKernel {
    /// depolarizing, then amplitude damping, then phase damping at lambda*p1
    after_1q: Option<BlockMap>,
    depol_2q: f64,
    /// per-qubit damping after a two-qubit gate at lambda*p2
    damp_2q: Option<BlockMap>,
}

impl NoiseKernel {
    pub fn new(model: &NoiseModel) -> Result<Self> {
        model.validate()?;
        let (r1, r2) = (model.rate_1q(), model.rate_2q());
        let mut m1 = IDENTITY_MAP;
        let mut m2 = IDENTITY_MAP;
        if model.has(ChannelKind::Depolarizing) {
            m1 = compose(&depol_map(r1), &m1);
        }
        if model.has(ChannelKind::AmplitudeDamping) {
            m1 = compose(&amp_damp_map(r1), &m1);
            m2 = compose(&amp_damp_map(r2), &m2);
        }
        if model.has(ChannelKind::PhaseDamping) {
            m1 = compose(&phase_damp_map(r1), &m1);
            m2 = compose(&phase_damp_map(r2), &m2);
        }
        Ok(NoiseKernel {
            after_1q: (m1 != IDENTITY_MAP).then_some(m1),
            depol_2q: if model.has(ChannelKind::Depolarizing) { r2 } else { 0.0 },
            damp_2q: (m2 != IDENTITY_MAP).then_some(m2),
        })
    }

    /// Applies one native gate followed by its noise.
    pub fn apply_native(&self, rho: &mut DensityMatrix, g: &Gate) {
        rho.unitary_raw(g);
        let q = g.qubits();
        match q.len() {
            1 => {
                if let Some(m) = &self.after_1q {
                    rho.block_map_1q(q[0], m);
                }
            }
            2 => {
                rho.depolarize_2q(q[0], q[1], self.depol_2q);
                if let Some(m) = &self.damp_2q {
                    rho.block_map_1q(q[0], m);
                    rho.block_map_1q(q[1], m);
                }
            }
            _ => unreachable!("natives act on at most two qubits"),
        }
    }

    pub fn apply_gate(&self, rho: &mut DensityMatrix, g: &Gate) {
        for native in lower(g) {
            self.apply_native(rho, &native);
        }
    }
}

/// Runs a circuit with every native gate followed by the model's channels.
pub fn noisy_run(circuit: &Circuit, model: &NoiseModel, initial: &DensityMatrix) -> Result<DensityMatrix> {
    check_size(circuit.num_qubits)?;
    if circuit.num_qubits != initial.num_qubits {
        return Err(contract("circuit and density matrix qubit counts differ"));
    }
    circuit.validate()?;
    let kernel = NoiseKernel::new(model)?;
    let mut rho = initial.clone();
    for g in &circuit.gates {
        kernel.apply_gate(&mut rho, g);
    }
    Ok(rho)
}

/// Single computational-basis draw from the diagonal of rho.
pub fn sample_one<R: Rng + ?Sized>(rho: &DensityMatrix, rng: &mut R) -> usize {
    sample_index(&rho.diagonal(), rng)
}

pub fn sample_from_density(rho: &DensityMatrix, shots: u64, seed: u64) -> Result<BTreeMap<String, u64>> {
    if shots == 0 {
        return Err(contract("shots must be >= 1"));
    }
    let counts = sample_counts(&rho.diagonal(), shots, seed);
    Ok(counts_to_map(&counts, rho.num_qubits))
}
