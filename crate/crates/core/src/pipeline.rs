//! NOQE circuits, Hadamard-test measurement, matrix assembly and the GEVP solve.
//!
//! Register layout of the Hadamard-test circuit: register A is qubits 0..N, register
//! B is N..2N and the ancilla is qubit 2N.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::estimators::{
    bootstrap_se, hamiltonian_from_estimates, linear, overlap_from_estimates, EstimatorOptions, PulledBack,
    ShadowEstimate,
};
use crate::native::lower;
use crate::noise::{noisy_run, DensityMatrix, NoiseKernel, NoiseModel};
use crate::pauli::{Pauli, PauliSum, PauliWord};
use crate::shadows::{acquire, derive_seed, ShadowDataset};
use crate::sim::{apply_gate_raw, parse_bitstring, run_circuit, Circuit, Gate, GateKind, Statevector};
use crate::C64;

/// Overlap eigenvalues below this are dropped by default in the GEVP.
pub const DEFAULT_S_MIN: f64 = 1e-4;

const TOL: f64 = 1e-10;

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSpec {
    pub label: String,
    pub num_qubits: usize,
    /// Compiled e^tau including any absorbed orbital rotation; acts on |hf>.
    pub ansatz: Circuit,
    pub hf_occupation: String,
}

impl ReferenceSpec {
    /// Validates and builds a spec; `hf` defaults to N/2 ones then N/2 zeros.
    pub fn new(label: &str, ansatz: Circuit, hf: Option<&str>) -> Result<Self> {
        let n = ansatz.num_qubits;
        if n == 0 || n % 2 != 0 {
            return Err(contract(format!("reference {label}: N = {n} must be even and positive")));
        }
        let hf = match hf {
            Some(s) => s.to_string(),
            None => "1".repeat(n / 2) + &"0".repeat(n / 2),
        };
        if hf.len() != n {
            return Err(contract(format!("reference {label}: occupation {hf} has {} bits, N = {n}", hf.len())));
        }
        let hf_index = parse_bitstring(&hf)?;
        if hf_index == 0 {
            return Err(contract(format!("reference {label}: occupation must have at least one electron")));
        }
        ansatz.validate()?;

        let vac = run_circuit(&ansatz, &Statevector::zero(n))?;
        let a0 = vac.amplitudes()[0];
        if (a0.norm() - 1.0).abs() > TOL {
            return Err(contract(format!(
                "reference {label}: ansatz does not fix the vacuum (|<0|A|0>| = {:.12})",
                a0.norm()
            )));
        }
        // The auxiliary and Hadamard circuits superpose the vacuum with the reference,
        // so a vacuum phase would rotate every reconstructed overlap.
        if (a0 - 1.0).norm() > TOL {
            return Err(contract(format!(
                "reference {label}: ansatz multiplies the vacuum by the phase {a0}"
            )));
        }
        let weight = hf_index.count_ones();
        let out = run_circuit(&ansatz, &Statevector::basis(n, hf_index))?;
        let leak: f64 = out
            .amplitudes()
            .iter()
            .enumerate()
            .filter(|(b, _)| b.count_ones() != weight)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        if leak.sqrt() > TOL {
            return Err(contract(format!(
                "reference {label}: ansatz changes the particle number (leaked norm {:.3e})",
                leak.sqrt()
            )));
        }
        Ok(ReferenceSpec {
            label: label.to_string(),
            num_qubits: n,
            ansatz,
            hf_occupation: hf,
        })
    }

    pub fn occupied(&self) -> Vec<usize> {
        self.hf_occupation
            .chars()
            .enumerate()
            .filter(|(_, c)| *c == '1')
            .map(|(q, _)| q)
            .collect()
    }

    pub fn state(&self) -> Result<Statevector> {
        run_circuit(&build_reference_circuit(self), &Statevector::zero(self.num_qubits))
    }
}

/// X gates realizing the occupation, then the ansatz.
pub fn build_reference_circuit(spec: &ReferenceSpec) -> Circuit {
    let mut c = Circuit::new(spec.num_qubits).with_label(&spec.label);
    for q in spec.occupied() {
        c.gates.push(Gate::one(GateKind::X, q));
    }
    c.gates.extend(spec.ansatz.gates.iter().cloned());
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuxKind {
    R,
    I,
}

/// (|0..0> + |psi>)/sqrt2 for R, (|0..0> + i|psi>)/sqrt2 for I.
pub fn build_auxiliary_circuit(spec: &ReferenceSpec, kind: AuxKind) -> Circuit {
    let suffix = match kind {
        AuxKind::R => "R",
        AuxKind::I => "I",
    };
    let mut c = Circuit::new(spec.num_qubits).with_label(&format!("{}_{suffix}", spec.label));
    let occ = spec.occupied();
    c.gates.push(Gate::one(GateKind::H, occ[0]));
    for w in occ.windows(2) {
        c.gates.push(Gate::two(GateKind::Cnot, w[0], w[1]));
    }
    if kind == AuxKind::I {
        c.gates.push(Gate::one(GateKind::S, occ[0]));
    }
    c.gates.extend(spec.ansatz.gates.iter().cloned());
    c
}

/// Angles per e^tau subroutine on N qubits: N-1 neighbour Givens rotations and a
/// controlled-RZ on every pair.
pub fn uccd_angles_per_subroutine(n: usize) -> usize {
    (n - 1) + n * (n - 1) / 2
}

/// One subroutine: Givens on (q, q+1) for each q, then CRZ on all pairs.
pub fn uccd_subroutine(n: usize, angles: &[f64]) -> Result<Circuit> {
    if n < 2 {
        return Err(contract("subroutine needs at least two qubits"));
    }
    let k = uccd_angles_per_subroutine(n);
    if angles.len() != k {
        return Err(contract(format!("subroutine on {n} qubits takes {k} angles, got {}", angles.len())));
    }
    let mut c = Circuit::new(n);
    let mut it = angles.iter();
    for q in 0..n - 1 {
        c.gates.push(Gate::two(GateKind::Givens(*it.next().unwrap()), q, q + 1));
    }
    for a in 0..n {
        for b in a + 1..n {
            c.gates.push(Gate::two(GateKind::Crz(*it.next().unwrap()), a, b));
        }
    }
    Ok(c)
}

/// Four subroutines, optionally followed by an orbital rotation of N-1 neighbour Givens.
pub fn uccd_ansatz(n: usize, subroutine_angles: &[f64], orbital_rotation: Option<&[f64]>) -> Result<Circuit> {
    let k = uccd_angles_per_subroutine(n);
    if subroutine_angles.len() != 4 * k {
        return Err(contract(format!(
            "ansatz takes 4 x {k} subroutine angles, got {}",
            subroutine_angles.len()
        )));
    }
    let mut c = Circuit::new(n);
    for chunk in subroutine_angles.chunks(k) {
        c.extend(&uccd_subroutine(n, chunk)?)?;
    }
    if let Some(rot) = orbital_rotation {
        if rot.len() != n - 1 {
            return Err(contract(format!("orbital rotation takes {} angles, got {}", n - 1, rot.len())));
        }
        for (q, &t) in rot.iter().enumerate() {
            c.gates.push(Gate::two(GateKind::Givens(t), q, q + 1));
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FirstStage {
    /// Simplified stage when both occupations match, general otherwise.
    Auto,
    Simplified,
    General,
}

pub fn build_hadamard_circuit(spec_i: &ReferenceSpec, spec_j: &ReferenceSpec, theta: f64) -> Result<Circuit> {
    build_hadamard_circuit_with(spec_i, spec_j, theta, FirstStage::Auto)
}

/// 2N+1-qubit circuit ending in (|psi_i>|+> + e^{i theta}|psi_j>|->)/sqrt2 with B in the vacuum.
pub fn build_hadamard_circuit_with(
    spec_i: &ReferenceSpec,
    spec_j: &ReferenceSpec,
    theta: f64,
    stage: FirstStage,
) -> Result<Circuit> {
    let n = spec_i.num_qubits;
    if spec_j.num_qubits != n {
        return Err(contract(format!(
            "registers differ: {} has {n} qubits, {} has {}",
            spec_i.label, spec_j.label, spec_j.num_qubits
        )));
    }
    let same_hf = spec_i.hf_occupation == spec_j.hf_occupation;
    let simplified = match stage {
        FirstStage::Auto => same_hf,
        FirstStage::Simplified if !same_hf => {
            return Err(contract("simplified first stage needs equal occupations"));
        }
        FirstStage::Simplified => true,
        FirstStage::General => false,
    };
    let anc = 2 * n;
    let mut c = Circuit::new(2 * n + 1).with_label(&format!("hadamard_{}_{}", spec_i.label, spec_j.label));
    let occ_i = spec_i.occupied();
    for &q in &occ_i {
        c.gates.push(Gate::one(GateKind::X, q));
    }
    c.gates.push(Gate::one(GateKind::H, anc));
    c.gates.push(Gate::one(GateKind::Phase(theta), anc));
    if simplified {
        // controlled swap of |hf>|vac>: only occupied wires move
        for &q in &occ_i {
            c.gates.push(Gate::two(GateKind::Cnot, anc, q));
            c.gates.push(Gate::two(GateKind::Cnot, anc, n + q));
        }
    } else {
        for q in 0..n {
            c.gates.push(Gate::cswap(anc, q, n + q));
        }
        let hj = spec_j.hf_occupation.as_bytes();
        for (q, &b) in spec_i.hf_occupation.as_bytes().iter().enumerate() {
            if b != hj[q] {
                c.gates.push(Gate::two(GateKind::Cnot, anc, n + q));
            }
        }
    }
    c.append_shifted(&spec_i.ansatz, 0)?;
    c.append_shifted(&spec_j.ansatz, n)?;
    for q in 0..n {
        c.gates.push(Gate::cswap(anc, q, n + q));
    }
    c.gates.push(Gate::one(GateKind::H, anc));
    Ok(c)
}

/// Gates rotating the measurement basis of `word` (on qubits offset..) to Z.
fn basis_rotation(word: &PauliWord, offset: usize) -> Vec<Gate> {
    let mut g = Vec::new();
    for (q, p) in word.letters().iter().enumerate() {
        match p {
            Pauli::X => g.push(Gate::one(GateKind::H, offset + q)),
            Pauli::Y => {
                g.push(Gate::one(GateKind::Sdg, offset + q));
                g.push(Gate::one(GateKind::H, offset + q));
            }
            _ => {}
        }
    }
    g
}

/// Basis-index mask of the non-identity letters of `word` placed at qubit `offset`
/// of an `n`-qubit register.
fn support_mask(word: &PauliWord, offset: usize, n: usize) -> usize {
    word.letters()
        .iter()
        .enumerate()
        .filter(|(_, p)| **p != Pauli::I)
        .fold(0, |m, (q, _)| m | 1 << (n - 1 - offset - q))
}

/// One group of Pauli terms sharing a representative up to fixed factors:
/// <psi_i|P_m|psi_j> = f_m <psi_i|P_rep|psi_j>.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupClass {
    pub representative: PauliWord,
    pub members: Vec<(PauliWord, C64)>,
}

/// Grouping of the Hamiltonian terms for one matrix element.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Grouping {
    pub classes: Vec<GroupClass>,
    /// Terms whose element is identically zero for these states; never measured.
    pub vanishing: Vec<PauliWord>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroupTable {
    off_diagonal: Vec<((String, String), Grouping)>,
    diagonal: BTreeMap<String, Grouping>,
}

#[derive(Deserialize)]
struct MemberJson {
    pauli: String,
    factor_re: f64,
    #[serde(default)]
    factor_im: f64,
}

#[derive(Deserialize)]
struct ClassJson {
    representative: String,
    members: Vec<MemberJson>,
}

#[derive(Deserialize)]
struct PairJson {
    pair: (String, String),
    classes: Vec<ClassJson>,
    #[serde(default)]
    vanishing: Vec<String>,
}

#[derive(Deserialize)]
struct DiagJson {
    classes: Vec<ClassJson>,
    #[serde(default)]
    vanishing: Vec<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PairsJson {
    One(PairJson),
    Many(Vec<PairJson>),
}

#[derive(Deserialize)]
struct TableJson {
    #[serde(default)]
    off_diagonal: Option<PairsJson>,
    #[serde(default)]
    diagonal: BTreeMap<String, DiagJson>,
}

fn parse_grouping(cs: Vec<ClassJson>, vanishing: Vec<String>, loc: &str) -> Result<Grouping> {
    let perr = |message: String| Error::Parse {
        location: loc.to_string(),
        message,
    };
    let vanishing = vanishing
        .iter()
        .map(|w| PauliWord::parse(w).map_err(|e| perr(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let classes = cs
        .into_iter()
        .map(|c| {
            let representative = PauliWord::parse(&c.representative).map_err(|e| perr(e.to_string()))?;
            let members = c
                .members
                .into_iter()
                .map(|m| {
                    let w = PauliWord::parse(&m.pauli).map_err(|e| perr(e.to_string()))?;
                    if w.num_qubits() != representative.num_qubits() {
                        return Err(perr(format!("member {w} and representative differ in length")));
                    }
                    Ok((w, C64::new(m.factor_re, m.factor_im)))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(GroupClass {
                representative,
                members,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Grouping { classes, vanishing })
}

impl GroupTable {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let t: TableJson = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
            location: format!("groups line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        let pairs = match t.off_diagonal {
            None => Vec::new(),
            Some(PairsJson::One(p)) => vec![p],
            Some(PairsJson::Many(v)) => v,
        };
        let mut off_diagonal = Vec::new();
        for p in pairs {
            let loc = format!("groups.off_diagonal[{},{}]", p.pair.0, p.pair.1);
            off_diagonal.push((p.pair, parse_grouping(p.classes, p.vanishing, &loc)?));
        }
        let mut diagonal = BTreeMap::new();
        for (label, d) in t.diagonal {
            let loc = format!("groups.diagonal.{label}");
            diagonal.insert(label, parse_grouping(d.classes, d.vanishing, &loc)?);
        }
        Ok(GroupTable {
            off_diagonal,
            diagonal,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        GroupTable::parse(&crate::io::read(path)?)
    }

    /// Classes for <psi_i|.|psi_j>; a table stored for (j, i) is used with conjugated factors.
    pub fn off_diagonal_classes(&self, li: &str, lj: &str) -> Option<Grouping> {
        for ((a, b), g) in &self.off_diagonal {
            if a == li && b == lj {
                return Some(g.clone());
            }
            if a == lj && b == li {
                let classes = g
                    .classes
                    .iter()
                    .map(|c| GroupClass {
                        representative: c.representative.clone(),
                        members: c.members.iter().map(|(w, f)| (w.clone(), f.conj())).collect(),
                    })
                    .collect();
                return Some(Grouping {
                    classes,
                    vanishing: g.vanishing.clone(),
                });
            }
        }
        None
    }

    pub fn diagonal_classes(&self, label: &str) -> Option<Grouping> {
        self.diagonal.get(label).cloned()
    }
}

/// A measured representative and the weight sum_m w_m f_m it carries in H.
#[derive(Debug, Clone, PartialEq)]
pub struct Setting {
    pub word: PauliWord,
    pub coefficient: C64,
}

/// Measurement settings for H: identity first, one per class that touches H, and a
/// singleton for every term neither a class nor the vanishing list covers.
pub fn plan_settings(h: &PauliSum, grouping: Option<&Grouping>) -> Vec<Setting> {
    let n = h.num_qubits();
    let mut settings = vec![Setting {
        word: PauliWord::identity(n),
        coefficient: zero(),
    }];
    let mut covered: Vec<&PauliWord> = grouping.map_or(Vec::new(), |g| g.vanishing.iter().collect());
    let add = |word: &PauliWord, c: C64, settings: &mut Vec<Setting>| {
        match settings.iter_mut().find(|s| s.word == *word) {
            Some(s) => s.coefficient += c,
            None => settings.push(Setting {
                word: word.clone(),
                coefficient: c,
            }),
        }
    };
    for class in grouping.map_or(&[][..], |g| &g.classes[..]) {
        let mut coef = zero();
        let mut touched = false;
        for (w, f) in &class.members {
            if covered.contains(&w) {
                continue;
            }
            if let Some(c) = h.coefficient(w) {
                coef += c * f;
                covered.push(w);
                touched = true;
            }
        }
        if touched {
            add(&class.representative, coef, &mut settings);
        }
    }
    for (w, c) in h.terms() {
        if !covered.contains(&w) {
            add(w, *c, &mut settings);
        }
    }
    settings
}

/// An expectation of a +-1 observable with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub value: f64,
    pub se: f64,
    pub shots: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shots {
    /// Exact expectations (shots -> infinity).
    Exact,
    PerSetting(u64),
}

enum Prepared {
    Pure(Statevector),
    Mixed(DensityMatrix, NoiseKernel),
}

impl Prepared {
    fn new(c: &Circuit, noise: Option<&NoiseModel>) -> Result<Self> {
        match noise.filter(|m| !m.is_noiseless()) {
            None => Ok(Prepared::Pure(run_circuit(c, &Statevector::zero(c.num_qubits))?)),
            Some(m) => Ok(Prepared::Mixed(
                noisy_run(c, m, &DensityMatrix::zero_state(c.num_qubits)?)?,
                NoiseKernel::new(m)?,
            )),
        }
    }

    /// Outcome distribution after the (noisy) rotation gates.
    fn probabilities(&self, rotation: &[Gate]) -> Vec<f64> {
        match self {
            Prepared::Pure(psi) => {
                let n = psi.num_qubits();
                let mut amps = psi.amplitudes().to_vec();
                for g in rotation {
                    apply_gate_raw(&mut amps, n, g, false);
                }
                amps.iter().map(|a| a.norm_sqr()).collect()
            }
            Prepared::Mixed(rho, kernel) => {
                if rotation.is_empty() {
                    return rho.diagonal();
                }
                let mut r = rho.clone();
                for g in rotation {
                    kernel.apply_gate(&mut r, g);
                }
                r.diagonal()
            }
        }
    }
}

/// Measures the parity observable `mask` (a product of Z's after rotation).
fn measure_parity(probs: &[f64], mask: usize, shots: Shots, seed: u64) -> Measurement {
    let total: f64 = probs.iter().sum();
    let p_plus: f64 = probs
        .iter()
        .enumerate()
        .filter(|(b, _)| (b & mask).count_ones() % 2 == 0)
        .map(|(_, p)| p)
        .sum::<f64>()
        / total;
    match shots {
        Shots::Exact => Measurement {
            value: 2.0 * p_plus - 1.0,
            se: 0.0,
            shots: 0,
        },
        Shots::PerSetting(k) => {
            // the parity of a full bitstring draw is a Bernoulli(p_plus) draw
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let plus = (0..k).filter(|_| rng.gen::<f64>() < p_plus).count() as f64;
            let n = k as f64;
            let value = 2.0 * plus / n - 1.0;
            let se = if k > 1 {
                ((1.0 - value * value) / (n - 1.0)).max(0.0).sqrt()
            } else {
                1.0
            };
            Measurement { value, se, shots: k }
        }
    }
}

/// Raw <P (x) Z_anc> at theta = 0 and pi/2 for every setting of a pair.
pub fn hadamard_expectations(
    spec_i: &ReferenceSpec,
    spec_j: &ReferenceSpec,
    settings: &[Setting],
    shots: Shots,
    noise: Option<&NoiseModel>,
    seed: u64,
    fold_scale: f64,
) -> Result<Vec<[Measurement; 2]>> {
    let n = spec_i.num_qubits;
    let total = 2 * n + 1;
    let anc_mask = 1usize;
    let mut out = vec![[Measurement { value: 0.0, se: 0.0, shots: 0 }; 2]; settings.len()];
    for (t, theta) in [0.0, FRAC_PI_2].into_iter().enumerate() {
        let c = build_hadamard_circuit(spec_i, spec_j, theta)?;
        let c = crate::zne::fold_native(&c, fold_scale)?;
        let prepared = Prepared::new(&c, noise)?;
        for (k, s) in settings.iter().enumerate() {
            let probs = prepared.probabilities(&basis_rotation(&s.word, 0));
            let mask = support_mask(&s.word, 0, total) | anc_mask;
            let tag = format!("hadamard/{}/{}/{t}/{}", spec_i.label, spec_j.label, s.word);
            out[k][t] = measure_parity(&probs, mask, shots, derive_seed(seed, &tag));
        }
    }
    Ok(out)
}

/// Raw <P> on the N-qubit reference for every non-identity setting (identity gets 1).
pub fn direct_expectations(
    spec: &ReferenceSpec,
    settings: &[Setting],
    shots: Shots,
    noise: Option<&NoiseModel>,
    seed: u64,
    fold_scale: f64,
) -> Result<Vec<Measurement>> {
    let n = spec.num_qubits;
    let c = crate::zne::fold_native(&build_reference_circuit(spec), fold_scale)?;
    let prepared = Prepared::new(&c, noise)?;
    settings
        .iter()
        .map(|s| {
            if s.word.is_identity() {
                return Ok(Measurement {
                    value: 1.0,
                    se: 0.0,
                    shots: 0,
                });
            }
            let probs = prepared.probabilities(&basis_rotation(&s.word, 0));
            let tag = format!("direct/{}/{}", spec.label, s.word);
            Ok(measure_parity(
                &probs,
                support_mask(&s.word, 0, n),
                shots,
                derive_seed(seed, &tag),
            ))
        })
        .collect()
}

/// S_ij and H_ij from the two phases: Re = <.>_0, Im = -<.>_{pi/2}.
pub fn combine_off_diagonal(settings: &[Setting], m: &[[Measurement; 2]]) -> (Estimate, Estimate) {
    let v = |k: usize| C64::new(m[k][0].value, -m[k][1].value);
    let id = settings.iter().position(|s| s.word.is_identity()).expect("identity setting");
    let s = Estimate {
        value: v(id),
        se: Some(C64::new(m[id][0].se, m[id][1].se)),
    };
    let mut h = zero();
    let (mut var_re, mut var_im) = (0.0, 0.0);
    for (k, st) in settings.iter().enumerate() {
        let c = st.coefficient;
        h += c * v(k);
        let (sa, sb) = (m[k][0].se.powi(2), m[k][1].se.powi(2));
        var_re += c.re * c.re * sa + c.im * c.im * sb;
        var_im += c.im * c.im * sa + c.re * c.re * sb;
    }
    (
        s,
        Estimate {
            value: h,
            se: Some(C64::new(var_re.sqrt(), var_im.sqrt())),
        },
    )
}

pub fn combine_diagonal(settings: &[Setting], m: &[Measurement]) -> Estimate {
    let mut h = zero();
    let mut var = 0.0;
    for (st, x) in settings.iter().zip(m) {
        h += st.coefficient * x.value;
        var += st.coefficient.norm_sqr() * x.se * x.se;
    }
    Estimate {
        value: h,
        se: Some(C64::new(var.sqrt(), 0.0)),
    }
}

pub use crate::estimators::Estimate;

#[derive(Debug, Clone, PartialEq)]
pub struct HadamardElements {
    pub s: Estimate,
    pub h: Estimate,
    pub settings: usize,
    pub shots: u64,
}

/// S_ij and H_ij for i != j from Hadamard-test circuits.
pub fn hadamard_estimate_elements(
    spec_i: &ReferenceSpec,
    spec_j: &ReferenceSpec,
    h: &PauliSum,
    shots: Shots,
    noise: Option<&NoiseModel>,
    seed: u64,
    groups: Option<&GroupTable>,
) -> Result<HadamardElements> {
    check_obs(spec_i, h)?;
    if let Shots::PerSetting(0) = shots {
        return Err(contract("shots must be >= 1 per setting"));
    }
    let classes = groups.and_then(|g| g.off_diagonal_classes(&spec_i.label, &spec_j.label));
    let settings = plan_settings(h, classes.as_ref());
    let m = hadamard_expectations(spec_i, spec_j, &settings, shots, noise, seed, 1.0)?;
    let (s, hv) = combine_off_diagonal(&settings, &m);
    Ok(HadamardElements {
        s,
        h: hv,
        settings: settings.len(),
        shots: m.iter().map(|x| x[0].shots + x[1].shots).sum(),
    })
}

/// H_ii by direct measurement of the reference.
pub fn direct_estimate_diagonal(
    spec: &ReferenceSpec,
    h: &PauliSum,
    shots: Shots,
    noise: Option<&NoiseModel>,
    seed: u64,
    groups: Option<&GroupTable>,
) -> Result<HadamardElements> {
    check_obs(spec, h)?;
    if let Shots::PerSetting(0) = shots {
        return Err(contract("shots must be >= 1 per setting"));
    }
    let classes = groups.and_then(|g| g.diagonal_classes(&spec.label));
    let settings = plan_settings(h, classes.as_ref());
    let m = direct_expectations(spec, &settings, shots, noise, seed, 1.0)?;
    Ok(HadamardElements {
        s: Estimate {
            value: C64::new(1.0, 0.0),
            se: Some(zero()),
        },
        h: combine_diagonal(&settings, &m),
        settings: settings.iter().filter(|s| !s.word.is_identity()).count(),
        shots: m.iter().map(|x| x.shots).sum(),
    })
}

fn check_obs(spec: &ReferenceSpec, h: &PauliSum) -> Result<()> {
    if h.num_qubits() != spec.num_qubits {
        return Err(contract(format!(
            "observable acts on {} qubits, reference {} has {}",
            h.num_qubits(),
            spec.label,
            spec.num_qubits
        )));
    }
    Ok(())
}

/// Number of measurement settings the Hadamard path uses for all elements.
pub fn hadamard_setting_count(specs: &[ReferenceSpec], h: &PauliSum, groups: Option<&GroupTable>) -> usize {
    let mut total = 0;
    for (i, si) in specs.iter().enumerate() {
        let d = groups.and_then(|g| g.diagonal_classes(&si.label));
        total += plan_settings(h, d.as_ref()).iter().filter(|s| !s.word.is_identity()).count();
        for sj in &specs[i + 1..] {
            let o = groups.and_then(|g| g.off_diagonal_classes(&si.label, &sj.label));
            // two phases per setting
            total += 2 * plan_settings(h, o.as_ref()).len();
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Shadow,
    Hadamard,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementFlag {
    pub i: usize,
    pub j: usize,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixElementEstimates {
    pub labels: Vec<String>,
    pub s: DMatrix<C64>,
    pub h: DMatrix<C64>,
    pub s_se: Option<DMatrix<C64>>,
    pub h_se: Option<DMatrix<C64>>,
    pub flags: Vec<ElementFlag>,
    /// |Re^2 + Im^2 - |S|^2| per shadow overlap, keyed by (i, j).
    pub overlap_residuals: Vec<(usize, usize, f64)>,
    /// Measurement shots (Hadamard) or snapshots (shadow) consumed.
    pub shots: u64,
}

impl MatrixElementEstimates {
    pub fn size(&self) -> usize {
        self.labels.len()
    }
}

fn hermitize(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Statevector-oracle matrices.
pub fn exact_matrices(specs: &[ReferenceSpec], h: &PauliSum) -> Result<MatrixElementEstimates> {
    if specs.is_empty() {
        return Err(contract("need at least one reference"));
    }
    let states = specs.iter().map(ReferenceSpec::state).collect::<Result<Vec<_>>>()?;
    let m = specs.len();
    let mut s = DMatrix::from_element(m, m, zero());
    let mut hm = DMatrix::from_element(m, m, zero());
    for i in 0..m {
        for j in 0..m {
            s[(i, j)] = crate::sim::inner_product(&states[i], &states[j])?;
            hm[(i, j)] = h.matrix_element(&states[i], &states[j])?;
        }
        s[(i, i)] = C64::new(1.0, 0.0);
    }
    Ok(MatrixElementEstimates {
        labels: specs.iter().map(|s| s.label.clone()).collect(),
        s: hermitize(&s),
        h: hermitize(&hm),
        s_se: None,
        h_se: None,
        flags: Vec::new(),
        overlap_residuals: Vec::new(),
        shots: 0,
    })
}

/// The three datasets of one reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceDatasets {
    pub psi: ShadowDataset,
    pub real: ShadowDataset,
    pub imag: ShadowDataset,
}

impl ReferenceDatasets {
    pub fn iter(&self) -> impl Iterator<Item = &ShadowDataset> {
        [&self.psi, &self.real, &self.imag].into_iter()
    }
}

/// Dataset labels and seeds for one reference: psi, psi_R, psi_I.
pub fn dataset_jobs(spec: &ReferenceSpec, seed: u64) -> [(String, Circuit, u64); 3] {
    let job = |label: String, c: Circuit| {
        let s = derive_seed(seed, &label);
        (label, c, s)
    };
    [
        job(spec.label.clone(), build_reference_circuit(spec)),
        job(format!("{}_R", spec.label), build_auxiliary_circuit(spec, AuxKind::R)),
        job(format!("{}_I", spec.label), build_auxiliary_circuit(spec, AuxKind::I)),
    ]
}

pub fn acquire_reference_datasets(
    spec: &ReferenceSpec,
    n: usize,
    noise: Option<&NoiseModel>,
    seed: u64,
) -> Result<ReferenceDatasets> {
    let [a, b, c] = dataset_jobs(spec, seed);
    Ok(ReferenceDatasets {
        psi: acquire(&a.1, n, noise, a.2, &a.0)?,
        real: acquire(&b.1, n, noise, b.2, &b.0)?,
        imag: acquire(&c.1, n, noise, c.2, &c.0)?,
    })
}

/// Pulled-back snapshots of one reference's three datasets.
#[derive(Debug, Clone)]
pub struct PulledReference {
    pub psi: PulledBack,
    pub real: PulledBack,
    pub imag: PulledBack,
}

impl PulledReference {
    pub fn new(d: &ReferenceDatasets) -> Self {
        PulledReference {
            psi: PulledBack::new(&d.psi),
            real: PulledBack::new(&d.real),
            imag: PulledBack::new(&d.imag),
        }
    }

    /// Acquires and pulls back one dataset at a time so only pullbacks stay in memory.
    pub fn acquire(spec: &ReferenceSpec, n: usize, noise: Option<&NoiseModel>, seed: u64) -> Result<Self> {
        let [a, b, c] = dataset_jobs(spec, seed);
        let pull = |(label, circ, s): (String, Circuit, u64)| -> Result<PulledBack> {
            Ok(PulledBack::new(&acquire(&circ, n, noise, s, &label)?))
        };
        Ok(PulledReference {
            psi: pull(a)?,
            real: pull(b)?,
            imag: pull(c)?,
        })
    }

    fn parts(&self) -> [&PulledBack; 3] {
        [&self.psi, &self.real, &self.imag]
    }
}

struct ShadowValues {
    s: DMatrix<C64>,
    h: DMatrix<C64>,
    flags: Vec<ElementFlag>,
    residuals: Vec<(usize, usize, f64)>,
}

/// Elements from per-reference estimates laid out as [psi, R, I] for each reference.
fn shadow_values(ests: &[ShadowEstimate], h: &PauliSum, delta: f64) -> Result<ShadowValues> {
    let m = ests.len() / 3;
    let e = |i: usize, k: usize| &ests[3 * i + k];
    let mut s = DMatrix::from_element(m, m, zero());
    let mut hm = DMatrix::from_element(m, m, zero());
    let mut flags = Vec::new();
    let mut residuals = Vec::new();
    for i in 0..m {
        s[(i, i)] = C64::new(1.0, 0.0);
        hm[(i, i)] = C64::new(linear(e(i, 0), h)?.re, 0.0);
        for j in i + 1..m {
            let ov = overlap_from_estimates(e(i, 0), e(i, 1), e(i, 2), e(j, 0), e(j, 1));
            residuals.push((i, j, ov.residual));
            let hij = match hamiltonian_from_estimates(e(i, 0), e(j, 0), h, ov.value, delta) {
                Ok(v) => v,
                Err(Error::UnreliableDivision {
                    numerator, overlap, ..
                }) => {
                    flags.push(ElementFlag {
                        i,
                        j,
                        kind: "unreliable_division".into(),
                        message: format!("|S| = {:.3e} below delta = {delta}", overlap.norm()),
                    });
                    if overlap.norm() > 0.0 {
                        numerator / overlap.conj()
                    } else {
                        zero()
                    }
                }
                Err(err) => return Err(err),
            };
            s[(i, j)] = ov.value;
            s[(j, i)] = ov.value.conj();
            hm[(i, j)] = hij;
            hm[(j, i)] = hij.conj();
        }
    }
    Ok(ShadowValues {
        s,
        h: hermitize(&hm),
        flags,
        residuals,
    })
}

/// Shadow-path matrices from pulled-back datasets; bootstrap SEs redraw all of them jointly.
pub fn shadow_matrices(
    labels: &[String],
    refs: &[PulledReference],
    h: &PauliSum,
    opts: &EstimatorOptions,
) -> Result<MatrixElementEstimates> {
    if refs.is_empty() || labels.len() != refs.len() {
        return Err(contract("need one label per reference and at least one reference"));
    }
    let nq = refs[0].psi.num_qubits();
    if h.num_qubits() != nq || refs.iter().flat_map(|r| r.parts()).any(|p| p.num_qubits() != nq) {
        return Err(contract("datasets and observable must share the qubit count"));
    }
    let parts: Vec<&PulledBack> = refs.iter().flat_map(|r| r.parts()).collect();
    let ests = parts
        .iter()
        .map(|p| opts.estimate(p, None))
        .collect::<Result<Vec<_>>>()?;
    let v = shadow_values(&ests, h, opts.delta)?;
    let m = refs.len();
    let (s_se, h_se) = if opts.bootstrap > 0 {
        let se = bootstrap_se(&parts, opts, |e| match shadow_values(e, h, opts.delta) {
            Ok(x) => x.s.iter().chain(x.h.iter()).copied().collect(),
            Err(_) => vec![C64::new(f64::NAN, f64::NAN); 2 * m * m],
        })?;
        // column-major, matching DMatrix::iter
        (
            Some(DMatrix::from_column_slice(m, m, &se[..m * m])),
            Some(DMatrix::from_column_slice(m, m, &se[m * m..])),
        )
    } else {
        (None, None)
    };
    Ok(MatrixElementEstimates {
        labels: labels.to_vec(),
        s: hermitize(&v.s),
        h: v.h,
        s_se,
        h_se,
        flags: v.flags,
        overlap_residuals: v.residuals,
        shots: parts.iter().map(|p| p.len() as u64).sum(),
    })
}

/// Shadow-path matrices from per-dataset estimates laid out as [psi, R, I] per
/// reference. Lets callers estimate and drop one dataset at a time; no SEs.
pub fn shadow_matrices_from_estimates(
    labels: &[String],
    ests: &[ShadowEstimate],
    h: &PauliSum,
    delta: f64,
) -> Result<MatrixElementEstimates> {
    if labels.is_empty() || ests.len() != 3 * labels.len() {
        return Err(contract("need three estimates per label and at least one label"));
    }
    if ests.iter().any(|e| e.matrix.nrows() != 1 << h.num_qubits()) {
        return Err(contract("estimates and observable must share the qubit count"));
    }
    let v = shadow_values(ests, h, delta)?;
    Ok(MatrixElementEstimates {
        labels: labels.to_vec(),
        s: hermitize(&v.s),
        h: v.h,
        s_se: None,
        h_se: None,
        flags: v.flags,
        overlap_residuals: v.residuals,
        shots: ests.iter().map(|e| e.n.round() as u64).sum(),
    })
}

/// Hadamard-path matrices: direct diagonals and one Hadamard run per pair.
pub fn hadamard_matrices(
    specs: &[ReferenceSpec],
    h: &PauliSum,
    shots: Shots,
    noise: Option<&NoiseModel>,
    seed: u64,
    groups: Option<&GroupTable>,
) -> Result<MatrixElementEstimates> {
    if specs.is_empty() {
        return Err(contract("need at least one reference"));
    }
    let m = specs.len();
    let mut s = DMatrix::from_element(m, m, zero());
    let mut hm = DMatrix::from_element(m, m, zero());
    let mut s_se = DMatrix::from_element(m, m, zero());
    let mut h_se = DMatrix::from_element(m, m, zero());
    let mut total = 0;
    for i in 0..m {
        let d = direct_estimate_diagonal(&specs[i], h, shots, noise, seed, groups)?;
        s[(i, i)] = C64::new(1.0, 0.0);
        hm[(i, i)] = C64::new(d.h.value.re, 0.0);
        h_se[(i, i)] = d.h.se.unwrap_or_default();
        total += d.shots;
        for j in i + 1..m {
            let e = hadamard_estimate_elements(&specs[i], &specs[j], h, shots, noise, seed, groups)?;
            s[(i, j)] = e.s.value;
            s[(j, i)] = e.s.value.conj();
            hm[(i, j)] = e.h.value;
            hm[(j, i)] = e.h.value.conj();
            s_se[(i, j)] = e.s.se.unwrap_or_default();
            s_se[(j, i)] = s_se[(i, j)];
            h_se[(i, j)] = e.h.se.unwrap_or_default();
            h_se[(j, i)] = h_se[(i, j)];
            total += e.shots;
        }
    }
    let with_se = matches!(shots, Shots::PerSetting(_));
    Ok(MatrixElementEstimates {
        labels: specs.iter().map(|s| s.label.clone()).collect(),
        s: hermitize(&s),
        h: hermitize(&hm),
        s_se: with_se.then_some(s_se),
        h_se: with_se.then_some(h_se),
        flags: Vec::new(),
        overlap_residuals: Vec::new(),
        shots: total,
    })
}

/// Options for [`assemble_matrices`].
#[derive(Debug, Clone, PartialEq)]
pub struct AssembleOptions {
    pub method: Method,
    /// Snapshots per dataset (shadow) or shots per setting (Hadamard; 0 means exact).
    pub budget: u64,
    pub noise: Option<NoiseModel>,
    pub estimator: EstimatorOptions,
    pub seed: u64,
}

pub fn assemble_matrices(
    specs: &[ReferenceSpec],
    h: &PauliSum,
    groups: Option<&GroupTable>,
    opts: &AssembleOptions,
) -> Result<MatrixElementEstimates> {
    if specs.is_empty() {
        return Err(contract("need at least one reference"));
    }
    let noise = opts.noise.as_ref();
    match opts.method {
        Method::Exact => exact_matrices(specs, h),
        Method::Hadamard => {
            let shots = if opts.budget == 0 {
                Shots::Exact
            } else {
                Shots::PerSetting(opts.budget)
            };
            hadamard_matrices(specs, h, shots, noise, opts.seed, groups)
        }
        Method::Shadow => {
            if opts.budget == 0 {
                return Err(contract("shadow budget must be >= 1 snapshot"));
            }
            let refs = specs
                .iter()
                .map(|s| PulledReference::acquire(s, opts.budget as usize, noise, opts.seed))
                .collect::<Result<Vec<_>>>()?;
            let labels: Vec<String> = specs.iter().map(|s| s.label.clone()).collect();
            shadow_matrices(&labels, &refs, h, &opts.estimator)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GevpResult {
    /// Ascending.
    pub energies: Vec<f64>,
    /// Coefficient vector per energy, normalized so c^dagger S c = 1.
    pub coefficients: Vec<Vec<C64>>,
    pub retained: usize,
    /// Overlap eigenvalues below s_min.
    pub discarded: Vec<f64>,
    pub overlap_eigenvalues: Vec<f64>,
    /// ||H c - E S c|| per energy.
    pub residuals: Vec<f64>,
    /// Spectrum bounds of the orthogonalized H.
    pub projected_range: (f64, f64),
}

/// Canonical orthogonalization: drop overlap eigenvalues below `s_min`, solve in the rest.
pub fn solve_gevp(s: &DMatrix<C64>, h: &DMatrix<C64>, s_min: f64) -> Result<GevpResult> {
    let m = s.nrows();
    if m == 0 || s.ncols() != m || h.nrows() != m || h.ncols() != m {
        return Err(contract("S and H must be square and of equal size"));
    }
    if !(s_min > 0.0 && s_min < 1.0) {
        return Err(contract(format!("s_min = {s_min} outside (0, 1)")));
    }
    if s.iter().chain(h.iter()).any(|x| !x.re.is_finite() || !x.im.is_finite()) {
        return Err(Error::Degenerate("non-finite matrix element".into()));
    }
    let (s, h) = (hermitize(s), hermitize(h));
    let eig = s.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let overlap_eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let keep: Vec<usize> = order.iter().copied().filter(|&k| eig.eigenvalues[k] >= s_min).collect();
    let discarded: Vec<f64> = overlap_eigenvalues.iter().copied().filter(|&x| x < s_min).collect();
    if keep.is_empty() {
        return Err(Error::Degenerate(format!(
            "all overlap eigenvalues below s_min = {s_min}: {overlap_eigenvalues:?}"
        )));
    }
    let r = keep.len();
    let x = DMatrix::from_fn(m, r, |row, col| {
        let k = keep[col];
        eig.eigenvectors[(row, k)] / eig.eigenvalues[k].sqrt()
    });
    let ht = hermitize(&(x.adjoint() * &h * &x));
    let he = ht.symmetric_eigen();
    let mut idx: Vec<usize> = (0..r).collect();
    idx.sort_by(|&a, &b| he.eigenvalues[a].total_cmp(&he.eigenvalues[b]));
    let mut energies = Vec::with_capacity(r);
    let mut coefficients = Vec::with_capacity(r);
    let mut residuals = Vec::with_capacity(r);
    for &k in &idx {
        let e = he.eigenvalues[k];
        let mut c = &x * he.eigenvectors.column(k);
        // fix the phase: largest component real and positive
        let big = (0..m).max_by(|&a, &b| c[a].norm().total_cmp(&c[b].norm())).unwrap_or(0);
        if c[big].norm() > 0.0 {
            let ph = c[big].conj() / c[big].norm();
            c *= ph;
        }
        let res = (&h * &c - (&s * &c) * C64::new(e, 0.0)).norm();
        energies.push(e);
        residuals.push(res);
        coefficients.push(c.iter().copied().collect());
    }
    let projected_range = (energies[0], energies[r - 1]);
    Ok(GevpResult {
        energies,
        coefficients,
        retained: r,
        discarded,
        overlap_eigenvalues,
        residuals,
        projected_range,
    })
}

/// Gate counts after lowering to natives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateCensus {
    pub one_qubit: usize,
    pub two_qubit: usize,
    pub natives: usize,
    /// Source gates by name before lowering.
    pub source: BTreeMap<String, usize>,
}

pub fn resource_report(c: &Circuit) -> GateCensus {
    let mut census = GateCensus {
        one_qubit: 0,
        two_qubit: 0,
        natives: 0,
        source: BTreeMap::new(),
    };
    for g in &c.gates {
        *census.source.entry(g.kind.name().to_string()).or_default() += 1;
        for nat in lower(g) {
            match nat.qubits().len() {
                1 => census.one_qubit += 1,
                _ => census.two_qubit += 1,
            }
            census.natives += 1;
        }
    }
    census
}

/// Census of the shadow circuits (reference and auxiliary) against the Hadamard baseline
/// for the first pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceComparison {
    pub shadow_reference: GateCensus,
    pub shadow_auxiliary: GateCensus,
    pub hadamard: Option<GateCensus>,
    /// Largest shadow circuit over the baseline, two-qubit and one-qubit natives.
    pub ratio_two_qubit: Option<f64>,
    pub ratio_one_qubit: Option<f64>,
}

pub fn compare_resources(specs: &[ReferenceSpec]) -> Result<ResourceComparison> {
    let first = specs.first().ok_or_else(|| contract("need at least one reference"))?;
    let shadow_reference = resource_report(&build_reference_circuit(first));
    let shadow_auxiliary = resource_report(&build_auxiliary_circuit(first, AuxKind::I));
    let hadamard = match specs.get(1) {
        Some(second) => Some(resource_report(&build_hadamard_circuit(first, second, 0.0)?)),
        None => None,
    };
    let ratio = |f: fn(&GateCensus) -> usize| {
        hadamard.as_ref().map(|b| {
            let s = f(&shadow_reference).max(f(&shadow_auxiliary));
            s as f64 / f(b) as f64
        })
    };
    Ok(ResourceComparison {
        ratio_two_qubit: ratio(|c| c.two_qubit),
        ratio_one_qubit: ratio(|c| c.one_qubit),
        shadow_reference,
        shadow_auxiliary,
        hadamard,
    })
}
