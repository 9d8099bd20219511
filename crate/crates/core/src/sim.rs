//! Dense statevector simulation, gate definitions and circuit files.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::pauli::DENSE_MAX_QUBITS;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

pub fn bitstring(index: usize, n: usize) -> String {
    (0..n)
        .map(|q| if (index >> (n - 1 - q)) & 1 == 1 { '1' } else { '0' })
        .collect()
}

pub fn parse_bitstring(s: &str) -> Result<usize> {
    let mut v = 0usize;
    for (k, c) in s.chars().enumerate() {
        v = (v << 1)
            | match c {
                '0' => 0,
                '1' => 1,
                _ => return Err(contract(format!("bitstring {s:?}: invalid character at {k}"))),
            };
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    num_qubits: usize,
    amps: Vec<C64>,
}

impl Statevector {
    pub fn zero(num_qubits: usize) -> Self {
        Statevector::basis(num_qubits, 0)
    }

    pub fn basis(num_qubits: usize, index: usize) -> Self {
        let mut amps = vec![ZERO; 1 << num_qubits];
        amps[index] = ONE;
        Statevector { num_qubits, amps }
    }

    pub fn from_bitstring(bits: &str) -> Result<Self> {
        Ok(Statevector::basis(bits.len(), parse_bitstring(bits)?))
    }

    /// Wraps amplitudes; the vector must be normalized within 1e-10.
    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        let d = amps.len();
        if d == 0 || !d.is_power_of_two() {
            return Err(contract(format!("amplitude vector length {d} is not a power of two")));
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(contract(format!("state not normalized (norm {norm})")));
        }
        Ok(Statevector {
            num_qubits: d.trailing_zeros() as usize,
            amps,
        })
    }

    /// Normalizes an arbitrary nonzero vector.
    pub fn normalized(mut amps: Vec<C64>) -> Result<Self> {
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(contract("cannot normalize the zero vector"));
        }
        amps.iter_mut().for_each(|a| *a /= norm);
        Statevector::from_amplitudes(amps)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn apply_gate(&mut self, gate: &Gate) -> Result<()> {
        gate.check(self.num_qubits)?;
        apply_gate_raw(&mut self.amps, self.num_qubits, gate, false);
        Ok(())
    }

    /// Dense projector |psi><psi|.
    pub fn projector(&self) -> DMatrix<C64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |r, c| self.amps[r] * self.amps[c].conj())
    }
}

/// <a|b>.
pub fn inner_product(a: &Statevector, b: &Statevector) -> Result<C64> {
    if a.num_qubits != b.num_qubits {
        return Err(contract(format!(
            "inner product of {}-qubit and {}-qubit states",
            a.num_qubits, b.num_qubits
        )));
    }
    Ok(a.amps.iter().zip(&b.amps).map(|(x, y)| x.conj() * y).sum())
}

#[derive(Debug, Clone, PartialEq)]
pub enum GateKind {
    H,
    X,
    Z,
    S,
    Sdg,
    Phase(f64),
    Rz(f64),
    Ry(f64),
    Cnot,
    Cz,
    Crz(f64),
    Givens(f64),
    Cswap,
    /// Row-major 2x2 unitary.
    U1q(Box<[C64; 4]>),
    /// Row-major 4x4 unitary; the first listed qubit is the high bit.
    U2q(Box<[C64; 16]>),
}

impl GateKind {
    pub fn arity(&self) -> usize {
        match self {
            GateKind::H
            | GateKind::X
            | GateKind::Z
            | GateKind::S
            | GateKind::Sdg
            | GateKind::Phase(_)
            | GateKind::Rz(_)
            | GateKind::Ry(_)
            | GateKind::U1q(_) => 1,
            GateKind::Cswap => 3,
            _ => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GateKind::H => "H",
            GateKind::X => "X",
            GateKind::Z => "Z",
            GateKind::S => "S",
            GateKind::Sdg => "Sdg",
            GateKind::Phase(_) => "PHASE",
            GateKind::Rz(_) => "RZ",
            GateKind::Ry(_) => "RY",
            GateKind::Cnot => "CNOT",
            GateKind::Cz => "CZ",
            GateKind::Crz(_) => "CRZ",
            GateKind::Givens(_) => "GIVENS",
            GateKind::Cswap => "CSWAP",
            GateKind::U1q(_) => "U1Q",
            GateKind::U2q(_) => "U2Q",
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            GateKind::Phase(t)
            | GateKind::Rz(t)
            | GateKind::Ry(t)
            | GateKind::Crz(t)
            | GateKind::Givens(t) => vec![*t],
            GateKind::U1q(m) => m.iter().flat_map(|c| [c.re, c.im]).collect(),
            GateKind::U2q(m) => m.iter().flat_map(|c| [c.re, c.im]).collect(),
            _ => vec![],
        }
    }

    pub fn from_name(name: &str, params: &[f64]) -> Result<GateKind> {
        let want = |k: usize| -> Result<()> {
            if params.len() != k {
                return Err(contract(format!(
                    "gate {name} expects {k} parameters, got {}",
                    params.len()
                )));
            }
            if params.iter().any(|p| !p.is_finite()) {
                return Err(contract(format!("gate {name} has a non-finite parameter")));
            }
            Ok(())
        };
        let kind = match name {
            "H" | "X" | "Z" | "S" | "Sdg" | "CNOT" | "CZ" | "CSWAP" => {
                want(0)?;
                match name {
                    "H" => GateKind::H,
                    "X" => GateKind::X,
                    "Z" => GateKind::Z,
                    "S" => GateKind::S,
                    "Sdg" => GateKind::Sdg,
                    "CNOT" => GateKind::Cnot,
                    "CZ" => GateKind::Cz,
                    _ => GateKind::Cswap,
                }
            }
            "PHASE" | "RZ" | "RY" | "CRZ" | "GIVENS" => {
                want(1)?;
                let t = params[0];
                match name {
                    "PHASE" => GateKind::Phase(t),
                    "RZ" => GateKind::Rz(t),
                    "RY" => GateKind::Ry(t),
                    "CRZ" => GateKind::Crz(t),
                    _ => GateKind::Givens(t),
                }
            }
            "U1Q" => {
                want(8)?;
                let mut m = [ZERO; 4];
                for (k, c) in m.iter_mut().enumerate() {
                    *c = C64::new(params[2 * k], params[2 * k + 1]);
                }
                check_unitary(&m, 2, name)?;
                GateKind::U1q(Box::new(m))
            }
            "U2Q" => {
                want(32)?;
                let mut m = [ZERO; 16];
                for (k, c) in m.iter_mut().enumerate() {
                    *c = C64::new(params[2 * k], params[2 * k + 1]);
                }
                check_unitary(&m, 4, name)?;
                GateKind::U2q(Box::new(m))
            }
            _ => return Err(contract(format!("unknown gate name {name:?}"))),
        };
        Ok(kind)
    }

    /// Row-major matrix of dimension 2^arity; the first listed qubit is the high bit.
    pub fn matrix(&self) -> Vec<C64> {
        let i = C64::new(0.0, 1.0);
        let r = |x: f64| C64::new(x, 0.0);
        match self {
            GateKind::H => vec![r(FRAC_1_SQRT_2), r(FRAC_1_SQRT_2), r(FRAC_1_SQRT_2), r(-FRAC_1_SQRT_2)],
            GateKind::X => vec![ZERO, ONE, ONE, ZERO],
            GateKind::Z => vec![ONE, ZERO, ZERO, -ONE],
            GateKind::S => vec![ONE, ZERO, ZERO, i],
            GateKind::Sdg => vec![ONE, ZERO, ZERO, -i],
            GateKind::Phase(t) => vec![ONE, ZERO, ZERO, C64::from_polar(1.0, *t)],
            GateKind::Rz(t) => vec![C64::from_polar(1.0, -t / 2.0), ZERO, ZERO, C64::from_polar(1.0, t / 2.0)],
            GateKind::Ry(t) => {
                let (s, c) = (t / 2.0).sin_cos();
                vec![r(c), r(-s), r(s), r(c)]
            }
            GateKind::U1q(m) => m.to_vec(),
            GateKind::U2q(m) => m.to_vec(),
            GateKind::Cnot => permutation_matrix(4, &[0, 1, 3, 2]),
            GateKind::Cz => diag_matrix(&[ONE, ONE, ONE, -ONE]),
            GateKind::Crz(t) => diag_matrix(&[
                ONE,
                ONE,
                C64::from_polar(1.0, -t / 2.0),
                C64::from_polar(1.0, t / 2.0),
            ]),
            GateKind::Givens(t) => {
                let (s, c) = t.sin_cos();
                let mut m = vec![ZERO; 16];
                m[0] = ONE;
                m[5] = r(c);
                m[6] = r(-s);
                m[9] = r(s);
                m[10] = r(c);
                m[15] = ONE;
                m
            }
            GateKind::Cswap => permutation_matrix(8, &[0, 1, 2, 3, 4, 6, 5, 7]),
        }
    }

    pub fn inverse(&self) -> GateKind {
        match self {
            GateKind::S => GateKind::Sdg,
            GateKind::Sdg => GateKind::S,
            GateKind::Phase(t) => GateKind::Phase(-t),
            GateKind::Rz(t) => GateKind::Rz(-t),
            GateKind::Ry(t) => GateKind::Ry(-t),
            GateKind::Crz(t) => GateKind::Crz(-t),
            GateKind::Givens(t) => GateKind::Givens(-t),
            GateKind::U1q(m) => GateKind::U1q(Box::new(dagger::<4>(m, 2))),
            GateKind::U2q(m) => GateKind::U2q(Box::new(dagger::<16>(m, 4))),
            k => k.clone(),
        }
    }
}

fn dagger<const L: usize>(m: &[C64; L], d: usize) -> [C64; L] {
    let mut out = [ZERO; L];
    for r in 0..d {
        for c in 0..d {
            out[c * d + r] = m[r * d + c].conj();
        }
    }
    out
}

fn check_unitary(m: &[C64], d: usize, name: &str) -> Result<()> {
    for r in 0..d {
        for c in 0..d {
            let v: C64 = (0..d).map(|k| m[k * d + r].conj() * m[k * d + c]).sum();
            let want = if r == c { 1.0 } else { 0.0 };
            if (v - want).norm() > 1e-8 {
                return Err(contract(format!("{name} matrix is not unitary")));
            }
        }
    }
    Ok(())
}

fn permutation_matrix(d: usize, image: &[usize]) -> Vec<C64> {
    let mut m = vec![ZERO; d * d];
    for (col, &row) in image.iter().enumerate() {
        m[row * d + col] = ONE;
    }
    m
}

fn diag_matrix(diag: &[C64]) -> Vec<C64> {
    let d = diag.len();
    let mut m = vec![ZERO; d * d];
    for (k, &v) in diag.iter().enumerate() {
        m[k * d + k] = v;
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub kind: GateKind,
    qubits: [usize; 3],
}

impl Gate {
    pub fn new(kind: GateKind, qubits: &[usize]) -> Result<Gate> {
        if qubits.len() != kind.arity() {
            return Err(contract(format!(
                "gate {} acts on {} qubits, got {}",
                kind.name(),
                kind.arity(),
                qubits.len()
            )));
        }
        for a in 0..qubits.len() {
            for b in 0..a {
                if qubits[a] == qubits[b] {
                    return Err(contract(format!("gate {} repeats qubit {}", kind.name(), qubits[a])));
                }
            }
        }
        let mut q = [0usize; 3];
        q[..qubits.len()].copy_from_slice(qubits);
        Ok(Gate { kind, qubits: q })
    }

    pub fn one(kind: GateKind, q: usize) -> Gate {
        debug_assert_eq!(kind.arity(), 1);
        Gate { kind, qubits: [q, 0, 0] }
    }

    pub fn two(kind: GateKind, a: usize, b: usize) -> Gate {
        debug_assert_eq!(kind.arity(), 2);
        assert_ne!(a, b, "two-qubit gate on a single qubit");
        Gate { kind, qubits: [a, b, 0] }
    }

    pub fn cswap(c: usize, a: usize, b: usize) -> Gate {
        assert!(c != a && c != b && a != b);
        Gate {
            kind: GateKind::Cswap,
            qubits: [c, a, b],
        }
    }

    pub fn qubits(&self) -> &[usize] {
        &self.qubits[..self.kind.arity()]
    }

    pub fn inverse(&self) -> Gate {
        Gate {
            kind: self.kind.inverse(),
            qubits: self.qubits,
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        if let Some(&q) = self.qubits().iter().find(|&&q| q >= n) {
            return Err(contract(format!(
                "gate {} addresses qubit {q} in a {n}-qubit register",
                self.kind.name()
            )));
        }
        Ok(())
    }

    /// Same gate with qubit indices shifted by `offset`.
    pub fn shifted(&self, offset: usize) -> Gate {
        let mut g = self.clone();
        for q in g.qubits.iter_mut().take(self.kind.arity()) {
            *q += offset;
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    pub num_qubits: usize,
    pub gates: Vec<Gate>,
    pub label: Option<String>,
}

impl Circuit {
    pub fn new(num_qubits: usize) -> Self {
        Circuit {
            num_qubits,
            gates: Vec::new(),
            label: None,
        }
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = Some(label.to_string());
        self
    }

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        gate.check(self.num_qubits)?;
        self.gates.push(gate);
        Ok(())
    }

    pub fn add(&mut self, kind: GateKind, qubits: &[usize]) -> Result<()> {
        let g = Gate::new(kind, qubits)?;
        self.push(g)
    }

    pub fn extend(&mut self, other: &Circuit) -> Result<()> {
        self.append_shifted(other, 0)
    }

    /// Appends `other` with every qubit index moved up by `offset`.
    pub fn append_shifted(&mut self, other: &Circuit, offset: usize) -> Result<()> {
        for g in &other.gates {
            self.push(g.shifted(offset))?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (k, g) in self.gates.iter().enumerate() {
            g.check(self.num_qubits)
                .map_err(|e| contract(format!("gate {k}: {e}")))?;
        }
        Ok(())
    }

    pub fn inverse(&self) -> Circuit {
        Circuit {
            num_qubits: self.num_qubits,
            gates: self.gates.iter().rev().map(Gate::inverse).collect(),
            label: self.label.clone(),
        }
    }

    /// Dense unitary of the whole circuit (column k = image of basis state k).
    pub fn unitary(&self) -> Result<DMatrix<C64>> {
        if self.num_qubits > DENSE_MAX_QUBITS {
            return Err(Error::Resource(format!("{}-qubit unitary", self.num_qubits)));
        }
        let d = 1usize << self.num_qubits;
        let mut u = DMatrix::zeros(d, d);
        for k in 0..d {
            let out = run_circuit(self, &Statevector::basis(self.num_qubits, k))?;
            for (r, a) in out.amps.iter().enumerate() {
                u[(r, k)] = *a;
            }
        }
        Ok(u)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&CircuitFile::from(self)).expect("circuit serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Circuit> {
        let file: CircuitFile = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
            location: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        let mut c = Circuit::new(file.num_qubits);
        c.label = file.label;
        for (k, g) in file.gates.iter().enumerate() {
            let loc = || format!("gate {k} ({})", g.name);
            let kind = GateKind::from_name(&g.name, &g.params).map_err(|e| Error::Parse {
                location: loc(),
                message: e.to_string(),
            })?;
            let gate = Gate::new(kind, &g.qubits).map_err(|e| Error::Parse {
                location: loc(),
                message: e.to_string(),
            })?;
            c.push(gate).map_err(|e| Error::Parse {
                location: loc(),
                message: e.to_string(),
            })?;
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Circuit> {
        let bytes = std::fs::read(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Circuit::from_json(&bytes)
    }
}

#[derive(Serialize, Deserialize)]
struct GateEntry {
    name: String,
    qubits: Vec<usize>,
    #[serde(default)]
    params: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CircuitFile {
    num_qubits: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    gates: Vec<GateEntry>,
}

impl From<&Circuit> for CircuitFile {
    fn from(c: &Circuit) -> Self {
        CircuitFile {
            num_qubits: c.num_qubits,
            label: c.label.clone(),
            gates: c
                .gates
                .iter()
                .map(|g| GateEntry {
                    name: g.kind.name().to_string(),
                    qubits: g.qubits().to_vec(),
                    params: g.kind.params(),
                })
                .collect(),
        }
    }
}

pub fn run_circuit(circuit: &Circuit, initial: &Statevector) -> Result<Statevector> {
    if circuit.num_qubits != initial.num_qubits {
        return Err(contract(format!(
            "circuit has {} qubits, state has {}",
            circuit.num_qubits, initial.num_qubits
        )));
    }
    circuit.validate()?;
    let mut s = initial.clone();
    for g in &circuit.gates {
        apply_gate_raw(&mut s.amps, s.num_qubits, g, false);
    }
    Ok(s)
}

/// Applies `gate` to an n-qubit amplitude vector (qubit q at bit n-1-q). With
/// `conj` the complex-conjugated matrix is used, which is what the column side
/// of a vectorized density matrix needs.
pub(crate) fn apply_gate_raw(amps: &mut [C64], n: usize, gate: &Gate, conj: bool) {
    let q = gate.qubits();
    let bit = |k: usize| 1usize << (n - 1 - q[k]);
    match &gate.kind {
        GateKind::X => {
            let m = bit(0);
            for i in 0..amps.len() {
                if i & m == 0 {
                    amps.swap(i, i | m);
                }
            }
        }
        GateKind::Z => phase_on(amps, bit(0), -ONE),
        GateKind::S => phase_on(amps, bit(0), if conj { C64::new(0.0, -1.0) } else { C64::new(0.0, 1.0) }),
        GateKind::Sdg => phase_on(amps, bit(0), if conj { C64::new(0.0, 1.0) } else { C64::new(0.0, -1.0) }),
        GateKind::Phase(t) => phase_on(amps, bit(0), C64::from_polar(1.0, if conj { -t } else { *t })),
        GateKind::H => {
            let m = bit(0);
            for i in 0..amps.len() {
                if i & m == 0 {
                    let (a, b) = (amps[i], amps[i | m]);
                    amps[i] = (a + b) * FRAC_1_SQRT_2;
                    amps[i | m] = (a - b) * FRAC_1_SQRT_2;
                }
            }
        }
        GateKind::Cnot => {
            let (c, t) = (bit(0), bit(1));
            for i in 0..amps.len() {
                if i & c != 0 && i & t == 0 {
                    amps.swap(i, i | t);
                }
            }
        }
        GateKind::Cz => phase_on(amps, bit(0) | bit(1), -ONE),
        GateKind::Cswap => {
            let (c, a, b) = (bit(0), bit(1), bit(2));
            for i in 0..amps.len() {
                if i & c != 0 && i & a != 0 && i & b == 0 {
                    amps.swap(i, (i & !a) | b);
                }
            }
        }
        GateKind::Rz(_) | GateKind::Ry(_) | GateKind::U1q(_) => {
            let mut m: [C64; 4] = gate.kind.matrix().try_into().expect("2x2");
            if conj {
                m.iter_mut().for_each(|x| *x = x.conj());
            }
            apply_1q(amps, bit(0), &m);
        }
        GateKind::Crz(_) | GateKind::Givens(_) | GateKind::U2q(_) => {
            let mut m: [C64; 16] = gate.kind.matrix().try_into().expect("4x4");
            if conj {
                m.iter_mut().for_each(|x| *x = x.conj());
            }
            apply_2q(amps, bit(0), bit(1), &m);
        }
    }
}

/// Multiplies amplitudes whose index has all bits of `mask` set by `phase`.
fn phase_on(amps: &mut [C64], mask: usize, phase: C64) {
    for (i, a) in amps.iter_mut().enumerate() {
        if i & mask == mask {
            *a *= phase;
        }
    }
}

pub(crate) fn apply_1q(amps: &mut [C64], m0: usize, u: &[C64; 4]) {
    for i in 0..amps.len() {
        if i & m0 == 0 {
            let (a, b) = (amps[i], amps[i | m0]);
            amps[i] = u[0] * a + u[1] * b;
            amps[i | m0] = u[2] * a + u[3] * b;
        }
    }
}

/// `hi` is the bit of the first listed qubit.
pub(crate) fn apply_2q(amps: &mut [C64], hi: usize, lo: usize, u: &[C64; 16]) {
    for i in 0..amps.len() {
        if i & (hi | lo) == 0 {
            let idx = [i, i | lo, i | hi, i | hi | lo];
            let v = [amps[idx[0]], amps[idx[1]], amps[idx[2]], amps[idx[3]]];
            for r in 0..4 {
                amps[idx[r]] = u[4 * r] * v[0] + u[4 * r + 1] * v[1] + u[4 * r + 2] * v[2] + u[4 * r + 3] * v[3];
            }
        }
    }
}

/// Draws one index from a discrete distribution (weights need not be normalized).
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (k, &p) in probs.iter().enumerate() {
        if u < p {
            return k;
        }
        u -= p;
    }
    // rounding fallthrough: last index with nonzero weight
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Multinomial draw of `shots` outcomes from `probs`, returned as index counts.
pub fn sample_counts(probs: &[f64], shots: u64, seed: u64) -> Vec<u64> {
    let total: f64 = probs.iter().sum();
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for &p in probs {
        acc += p / total;
        cdf.push(acc);
    }
    let last_nonzero = probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; probs.len()];
    for _ in 0..shots {
        let u: f64 = rng.gen();
        let k = cdf.partition_point(|&c| c <= u).min(last_nonzero);
        counts[k] += 1;
    }
    counts
}

pub(crate) fn counts_to_map(counts: &[u64], n: usize) -> BTreeMap<String, u64> {
    counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(k, &c)| (bitstring(k, n), c))
        .collect()
}

/// Computational-basis measurement counts keyed by bitstring.
pub fn sample_bitstrings(state: &Statevector, shots: u64, seed: u64) -> Result<BTreeMap<String, u64>> {
    if shots == 0 {
        return Err(contract("shots must be >= 1"));
    }
    let counts = sample_counts(&state.probabilities(), shots, seed);
    Ok(counts_to_map(&counts, state.num_qubits))
}
