//! Pauli words, Pauli sums and their dense / statevector actions.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::sim::Statevector;

/// Largest qubit count for which dense D x D matrices are built.
pub const DENSE_MAX_QUBITS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn from_char(c: char) -> Option<Pauli> {
        match c {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn matrix(self) -> [[C64; 2]; 2] {
        let o = C64::new(0.0, 0.0);
        let l = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        match self {
            Pauli::I => [[l, o], [o, l]],
            Pauli::X => [[o, l], [l, o]],
            Pauli::Y => [[o, -i], [i, o]],
            Pauli::Z => [[l, o], [o, -l]],
        }
    }
}

/// A tensor product of single-qubit Paulis; the first letter acts on qubit 0,
/// which is the most significant bit of a basis index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliWord {
    letters: Vec<Pauli>,
}

impl PauliWord {
    pub fn new(letters: Vec<Pauli>) -> Self {
        PauliWord { letters }
    }

    pub fn identity(n: usize) -> Self {
        PauliWord {
            letters: vec![Pauli::I; n],
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let mut letters = Vec::with_capacity(s.len());
        for (pos, c) in s.chars().enumerate() {
            let p = Pauli::from_char(c).ok_or_else(|| Error::Parse {
                location: format!("character {pos} of {s:?}"),
                message: format!("invalid Pauli letter {c:?}"),
            })?;
            letters.push(p);
        }
        if letters.is_empty() {
            return Err(Error::Parse {
                location: "word".into(),
                message: "empty Pauli word".into(),
            });
        }
        Ok(PauliWord { letters })
    }

    pub fn num_qubits(&self) -> usize {
        self.letters.len()
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.letters
    }

    pub fn is_identity(&self) -> bool {
        self.letters.iter().all(|&p| p == Pauli::I)
    }

    /// Bit masks in basis-index convention (qubit q at bit N-1-q): (x, z, number of Y).
    pub fn masks(&self) -> (usize, usize, u32) {
        let n = self.letters.len();
        let (mut x, mut z, mut ny) = (0usize, 0usize, 0u32);
        for (q, &p) in self.letters.iter().enumerate() {
            let bit = 1usize << (n - 1 - q);
            match p {
                Pauli::I => {}
                Pauli::X => x |= bit,
                Pauli::Z => z |= bit,
                Pauli::Y => {
                    x |= bit;
                    z |= bit;
                    ny += 1;
                }
            }
        }
        (x, z, ny)
    }

    /// P|b> = phase * |b ^ x>.
    pub fn apply_to_basis(&self, b: usize) -> (usize, C64) {
        let (x, z, ny) = self.masks();
        (b ^ x, basis_phase(b, z, ny))
    }

    pub fn apply(&self, state: &[C64]) -> Vec<C64> {
        let (x, z, ny) = self.masks();
        let mut out = vec![C64::new(0.0, 0.0); state.len()];
        for (b, &a) in state.iter().enumerate() {
            out[b ^ x] += a * basis_phase(b, z, ny);
        }
        out
    }

    /// <a|P|b>.
    pub fn matrix_element(&self, a: &[C64], b: &[C64]) -> C64 {
        let (x, z, ny) = self.masks();
        let mut acc = C64::new(0.0, 0.0);
        for (k, &amp) in b.iter().enumerate() {
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            acc += a[k ^ x].conj() * amp * basis_phase(k, z, ny);
        }
        acc
    }
}

/// i^ny * (-1)^{popcount(b & z)}, with Y = i X Z.
#[inline]
fn basis_phase(b: usize, z: usize, ny: u32) -> C64 {
    let sign = if (b & z).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
    match ny % 4 {
        0 => C64::new(sign, 0.0),
        1 => C64::new(0.0, sign),
        2 => C64::new(-sign, 0.0),
        _ => C64::new(0.0, -sign),
    }
}

impl fmt::Display for PauliWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.letters {
            write!(f, "{}", p.as_char())?;
        }
        Ok(())
    }
}

fn check_dense(n: usize) -> Result<()> {
    if n > DENSE_MAX_QUBITS {
        return Err(Error::Resource(format!(
            "dense matrix for {n} qubits exceeds the {DENSE_MAX_QUBITS}-qubit guardrail"
        )));
    }
    Ok(())
}

/// Dense 2^N x 2^N matrix of a Pauli word.
pub fn materialize(word: &PauliWord) -> Result<DMatrix<C64>> {
    let n = word.num_qubits();
    check_dense(n)?;
    let d = 1usize << n;
    let (x, z, ny) = word.masks();
    let mut m = DMatrix::zeros(d, d);
    for b in 0..d {
        m[(b ^ x, b)] = basis_phase(b, z, ny);
    }
    Ok(m)
}

/// Tr(H^2) <= B with B = D * sum |w_k|^2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrobeniusBound {
    pub b: f64,
    pub d: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PauliSum {
    num_qubits: usize,
    terms: Vec<(PauliWord, C64)>,
    unit_label: String,
    hermitian: bool,
}

impl PauliSum {
    /// Builds a sum, merging duplicate words in first-appearance order.
    pub fn new(num_qubits: usize, terms: Vec<(PauliWord, C64)>, unit_label: &str) -> Result<Self> {
        if num_qubits == 0 {
            return Err(contract("num_qubits must be >= 1"));
        }
        let mut merged: Vec<(PauliWord, C64)> = Vec::with_capacity(terms.len());
        for (k, (w, c)) in terms.into_iter().enumerate() {
            if w.num_qubits() != num_qubits {
                return Err(contract(format!(
                    "term {k}: word {w} has length {} but num_qubits is {num_qubits}",
                    w.num_qubits()
                )));
            }
            match merged.iter_mut().find(|(mw, _)| *mw == w) {
                Some(slot) => slot.1 += c,
                None => merged.push((w, c)),
            }
        }
        let hermitian = merged.iter().all(|(_, c)| c.im.abs() < 1e-12);
        Ok(PauliSum {
            num_qubits,
            terms: merged,
            unit_label: unit_label.to_string(),
            hermitian,
        })
    }

    pub fn from_strs(num_qubits: usize, terms: &[(&str, f64)]) -> Result<Self> {
        let t = terms
            .iter()
            .map(|(w, c)| Ok((PauliWord::parse(w)?, C64::new(*c, 0.0))))
            .collect::<Result<Vec<_>>>()?;
        PauliSum::new(num_qubits, t, "")
    }

    pub fn identity(num_qubits: usize, c: f64) -> Self {
        PauliSum::new(num_qubits, vec![(PauliWord::identity(num_qubits), C64::new(c, 0.0))], "")
            .expect("valid identity sum")
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn terms(&self) -> &[(PauliWord, C64)] {
        &self.terms
    }

    /// Omega, the number of distinct Pauli terms.
    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn unit_label(&self) -> &str {
        &self.unit_label
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn coefficient(&self, word: &PauliWord) -> Option<C64> {
        self.terms.iter().find(|(w, _)| w == word).map(|(_, c)| *c)
    }

    pub fn frobenius_bound(&self) -> FrobeniusBound {
        let d = 1usize << self.num_qubits;
        let s: f64 = self.terms.iter().map(|(_, c)| c.norm_sqr()).sum();
        FrobeniusBound { b: d as f64 * s, d }
    }

    pub fn materialize(&self) -> Result<DMatrix<C64>> {
        check_dense(self.num_qubits)?;
        let d = 1usize << self.num_qubits;
        let mut m = DMatrix::zeros(d, d);
        for (w, c) in &self.terms {
            let (x, z, ny) = w.masks();
            for b in 0..d {
                m[(b ^ x, b)] += c * basis_phase(b, z, ny);
            }
        }
        Ok(m)
    }

    /// H|psi> without building the dense matrix.
    pub fn apply(&self, state: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); state.len()];
        for (w, c) in &self.terms {
            let (x, z, ny) = w.masks();
            for (b, &a) in state.iter().enumerate() {
                out[b ^ x] += c * a * basis_phase(b, z, ny);
            }
        }
        out
    }

    /// <a|H|b>.
    pub fn matrix_element(&self, a: &Statevector, b: &Statevector) -> Result<C64> {
        if a.num_qubits() != self.num_qubits || b.num_qubits() != self.num_qubits {
            return Err(contract("qubit count mismatch between observable and states"));
        }
        Ok(self
            .terms
            .iter()
            .map(|(w, c)| c * w.matrix_element(a.amplitudes(), b.amplitudes()))
            .sum())
    }

    /// sum_k w_k <psi|P_k|psi>.
    pub fn expectation(&self, state: &Statevector) -> Result<C64> {
        self.matrix_element(state, state)
    }

    /// Tr(H M) for a dense D x D matrix, one entry per row and term.
    pub fn trace_product(&self, m: &DMatrix<C64>) -> Result<C64> {
        let d = 1usize << self.num_qubits;
        if m.nrows() != d || m.ncols() != d {
            return Err(contract("matrix dimension does not match observable"));
        }
        let mut acc = C64::new(0.0, 0.0);
        for (w, c) in &self.terms {
            let (x, z, ny) = w.masks();
            let t: C64 = (0..d).map(|b| basis_phase(b, z, ny) * m[(b, b ^ x)]).sum();
            acc += c * t;
        }
        Ok(acc)
    }
}

#[derive(Deserialize)]
struct HamiltonianFile {
    num_qubits: usize,
    #[serde(default)]
    unit: Option<String>,
    terms: Vec<TermEntry>,
}

#[derive(Deserialize)]
struct TermEntry {
    pauli: String,
    re: f64,
    #[serde(default)]
    im: f64,
}

/// Parses the Hamiltonian JSON format:
/// `{"num_qubits": N, "unit": "Hartree", "terms": [{"pauli": "XZ..", "re": .., "im": ..}]}`.
pub fn parse_hamiltonian(bytes: &[u8]) -> Result<PauliSum> {
    let file: HamiltonianFile = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
        location: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    if file.num_qubits == 0 {
        return Err(Error::Parse {
            location: "num_qubits".into(),
            message: "must be >= 1".into(),
        });
    }
    let mut terms = Vec::with_capacity(file.terms.len());
    for (k, t) in file.terms.iter().enumerate() {
        let loc = || format!("term {k} ({:?})", t.pauli);
        let w = PauliWord::parse(&t.pauli).map_err(|e| Error::Parse {
            location: loc(),
            message: e.to_string(),
        })?;
        if w.num_qubits() != file.num_qubits {
            return Err(Error::Parse {
                location: loc(),
                message: format!(
                    "word length {} does not match num_qubits {}",
                    w.num_qubits(),
                    file.num_qubits
                ),
            });
        }
        if !t.re.is_finite() || !t.im.is_finite() {
            return Err(Error::Parse {
                location: loc(),
                message: "non-finite coefficient".into(),
            });
        }
        terms.push((w, C64::new(t.re, t.im)));
    }
    PauliSum::new(file.num_qubits, terms, file.unit.as_deref().unwrap_or(""))
}

pub fn load_hamiltonian(path: &std::path::Path) -> Result<PauliSum> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_hamiltonian(&bytes)
}
