//! Clifford tableaux: uniform sampling, synthesis into gates, and basis-state pullback.
//!
//! Row i < N holds the image U X_i U^dagger, row N+i holds U Z_i U^dagger. Storage is
//! column-major over rows: `xs[q]` has bit `row` set when that row has an X or Y on
//! qubit q, likewise `zs[q]` for Z or Y; `signs` has bit `row` set for a minus sign.

use rand::Rng;

use crate::error::{contract, Error, Result};
use crate::pauli::{Pauli, PauliWord};
use crate::sim::{apply_gate_raw, Circuit, Gate, GateKind, Statevector};

pub const MAX_QUBITS: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CliffordTableau {
    n: usize,
    xs: [u32; MAX_QUBITS],
    zs: [u32; MAX_QUBITS],
    signs: u32,
}

impl CliffordTableau {
    pub fn identity(n: usize) -> Self {
        assert!((1..=MAX_QUBITS).contains(&n), "tableau width {n} out of range");
        let mut t = CliffordTableau {
            n,
            xs: [0; MAX_QUBITS],
            zs: [0; MAX_QUBITS],
            signs: 0,
        };
        for q in 0..n {
            t.xs[q] = 1 << q;
            t.zs[q] = 1 << (n + q);
        }
        t
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    /// Row as (x mask, z mask, minus sign) with bit q for qubit q.
    pub fn row(&self, row: usize) -> (u32, u32, bool) {
        let (mut x, mut z) = (0u32, 0u32);
        for q in 0..self.n {
            x |= ((self.xs[q] >> row) & 1) << q;
            z |= ((self.zs[q] >> row) & 1) << q;
        }
        (x, z, (self.signs >> row) & 1 == 1)
    }

    /// Row as a Pauli word plus sign (+1 or -1).
    pub fn row_pauli(&self, row: usize) -> (f64, PauliWord) {
        let (x, z, s) = self.row(row);
        let letters = (0..self.n)
            .map(|q| match ((x >> q) & 1, (z >> q) & 1) {
                (0, 0) => Pauli::I,
                (1, 0) => Pauli::X,
                (0, 1) => Pauli::Z,
                _ => Pauli::Y,
            })
            .collect();
        (if s { -1.0 } else { 1.0 }, PauliWord::new(letters))
    }

    fn from_rows(n: usize, rows: &[(u32, u32)], signs: u32) -> Self {
        let mut t = CliffordTableau {
            n,
            xs: [0; MAX_QUBITS],
            zs: [0; MAX_QUBITS],
            signs,
        };
        for (r, &(x, z)) in rows.iter().enumerate() {
            for q in 0..n {
                t.xs[q] |= ((x >> q) & 1) << r;
                t.zs[q] |= ((z >> q) & 1) << r;
            }
        }
        t
    }

    /// M Lambda M^T = Lambda over GF(2).
    pub fn is_symplectic(&self) -> bool {
        let n = self.n;
        let rows: Vec<(u32, u32, bool)> = (0..2 * n).map(|r| self.row(r)).collect();
        for i in 0..2 * n {
            for j in 0..2 * n {
                let w = ((rows[i].0 & rows[j].1).count_ones() + (rows[i].1 & rows[j].0).count_ones()) % 2;
                let want = u32::from(i.abs_diff(j) == n);
                if w != want {
                    return false;
                }
            }
        }
        true
    }

    fn h(&mut self, q: usize) {
        self.signs ^= self.xs[q] & self.zs[q];
        std::mem::swap(&mut self.xs[q], &mut self.zs[q]);
    }

    fn s(&mut self, q: usize) {
        self.signs ^= self.xs[q] & self.zs[q];
        self.zs[q] ^= self.xs[q];
    }

    fn sdg(&mut self, q: usize) {
        self.signs ^= self.xs[q] & !self.zs[q];
        self.zs[q] ^= self.xs[q];
    }

    fn cnot(&mut self, c: usize, t: usize) {
        self.signs ^= self.xs[c] & self.zs[t] & !(self.xs[t] ^ self.zs[c]);
        self.xs[t] ^= self.xs[c];
        self.zs[c] ^= self.zs[t];
    }

    fn cz(&mut self, a: usize, b: usize) {
        self.signs ^= self.xs[a] & self.xs[b] & (self.zs[a] ^ self.zs[b]);
        self.zs[a] ^= self.xs[b];
        self.zs[b] ^= self.xs[a];
    }

    /// Left-multiplies the represented unitary by a Clifford gate (U -> G U).
    pub fn apply_gate(&mut self, gate: &Gate) -> Result<()> {
        let q = gate.qubits();
        if q.iter().any(|&k| k >= self.n) {
            return Err(contract("gate qubit outside tableau"));
        }
        match gate.kind {
            GateKind::H => self.h(q[0]),
            GateKind::S => self.s(q[0]),
            GateKind::Sdg => self.sdg(q[0]),
            GateKind::X => self.signs ^= self.zs[q[0]],
            GateKind::Z => self.signs ^= self.xs[q[0]],
            GateKind::Cnot => self.cnot(q[0], q[1]),
            GateKind::Cz => self.cz(q[0], q[1]),
            ref k => return Err(contract(format!("{} is not a supported Clifford gate", k.name()))),
        }
        Ok(())
    }

    pub fn from_circuit(c: &Circuit) -> Result<Self> {
        if c.num_qubits == 0 || c.num_qubits > MAX_QUBITS {
            return Err(contract(format!("tableau width {} out of range", c.num_qubits)));
        }
        let mut t = CliffordTableau::identity(c.num_qubits);
        for g in &c.gates {
            t.apply_gate(g)?;
        }
        Ok(t)
    }

    /// Gates G_1..G_k with G_k...G_1 U proportional to the identity. Applied in
    /// order to |b> they give U^dagger|b>.
    pub fn reduction_gates(&self) -> Vec<Gate> {
        let n = self.n;
        let mut t = self.clone();
        let mut out = Vec::with_capacity(4 * n * n);
        macro_rules! op {
            ($kind:expr, $a:expr) => {{
                let g = Gate::one($kind, $a);
                t.apply_gate(&g).expect("clifford");
                out.push(g);
            }};
            ($kind:expr, $a:expr, $b:expr) => {{
                let g = Gate::two($kind, $a, $b);
                t.apply_gate(&g).expect("clifford");
                out.push(g);
            }};
        }
        let bit = |m: u32, row: usize| (m >> row) & 1 == 1;
        for i in 0..n {
            let d = i;
            if (i..n).all(|k| !bit(t.xs[k], d)) {
                let k = (i..n).find(|&k| bit(t.zs[k], d)).expect("destabilizer row is nonzero");
                op!(GateKind::H, k);
            }
            if !bit(t.xs[i], d) {
                let j = (i + 1..n).find(|&k| bit(t.xs[k], d)).expect("x support");
                op!(GateKind::Cnot, j, i);
            }
            for k in i + 1..n {
                if bit(t.xs[k], d) {
                    op!(GateKind::Cnot, i, k);
                }
            }
            if bit(t.zs[i], d) {
                op!(GateKind::Sdg, i);
            }
            for k in i + 1..n {
                if bit(t.zs[k], d) {
                    op!(GateKind::Cz, i, k);
                }
            }
            let s = n + i;
            let already_z = (i..n).all(|k| !bit(t.xs[k], s)) && (i + 1..n).all(|k| !bit(t.zs[k], s));
            if !already_z {
                op!(GateKind::H, i);
                for k in i + 1..n {
                    if bit(t.xs[k], s) {
                        op!(GateKind::Cnot, i, k);
                    }
                }
                if bit(t.zs[i], s) {
                    op!(GateKind::Sdg, i);
                }
                for k in i + 1..n {
                    if bit(t.zs[k], s) {
                        op!(GateKind::Cz, i, k);
                    }
                }
                op!(GateKind::H, i);
            }
        }
        for i in 0..n {
            if bit(t.signs, i) {
                op!(GateKind::Z, i);
            }
            if bit(t.signs, n + i) {
                op!(GateKind::X, i);
            }
        }
        debug_assert_eq!(t, CliffordTableau::identity(n));
        out
    }

    /// Deterministic circuit over {H, S, CNOT, CZ, X, Z} implementing the tableau up to phase.
    pub fn to_circuit(&self) -> Circuit {
        let red = self.reduction_gates();
        Circuit {
            num_qubits: self.n,
            gates: red.iter().rev().map(Gate::inverse).collect(),
            label: None,
        }
    }

    /// U^dagger |b> for a basis index b (qubit 0 = most significant bit).
    pub fn pullback_basis_state(&self, b: usize) -> Result<Statevector> {
        if b >> self.n != 0 {
            return Err(contract(format!("outcome {b} does not fit in {} qubits", self.n)));
        }
        let mut s = Statevector::basis(self.n, b);
        self.pullback_into(b, s.amplitudes_mut());
        Ok(s)
    }

    /// Writes U^dagger|b> into `amps` (length 2^N).
    pub fn pullback_into(&self, b: usize, amps: &mut [crate::C64]) {
        amps.iter_mut().for_each(|a| *a = crate::C64::new(0.0, 0.0));
        amps[b] = crate::C64::new(1.0, 0.0);
        for g in self.reduction_gates() {
            apply_gate_raw(amps, self.n, &g, false);
        }
    }

    /// Bravyi-Maslov canonical-form sampler; uniform over the Clifford group modulo phase.
    pub fn sample_uniform<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        assert!((1..=MAX_QUBITS).contains(&n), "tableau width {n} out of range");
        let (had, perm) = sample_qmallows(n, rng);
        let gamma1 = random_symmetric(n, rng);
        let gamma2 = random_symmetric(n, rng);
        let delta1 = random_unit_lower(n, rng);
        let delta2 = random_unit_lower(n, rng);

        let table1 = block_table(n, &gamma1, &delta1);
        let table2 = block_table(n, &gamma2, &delta2);
        let mut table: Vec<u32> = (0..2 * n)
            .map(|r| if r < n { table2[perm[r]] } else { table2[n + perm[r - n]] })
            .collect();
        for (q, &h) in had.iter().enumerate() {
            if h {
                table.swap(q, n + q);
            }
        }
        let prod: Vec<u32> = table1
            .iter()
            .map(|&row| {
                let mut acc = 0u32;
                for (k, &tr) in table.iter().enumerate() {
                    if (row >> k) & 1 == 1 {
                        acc ^= tr;
                    }
                }
                acc
            })
            .collect();
        let mask = (1u32 << n) - 1;
        let rows: Vec<(u32, u32)> = prod.iter().map(|&r| (r & mask, (r >> n) & mask)).collect();
        let signs = rng.gen::<u32>() & ((1u32 << (2 * n)) - 1);
        CliffordTableau::from_rows(n, &rows, signs)
    }

    /// Row-major 2N x 2N bit matrix (row: x_0..x_{N-1}, z_0..z_{N-1}) packed MSB-first
    /// into bytes, and the 2N sign bits packed the same way; both lowercase hex.
    pub fn to_hex(&self) -> (String, String) {
        let n = self.n;
        let mut bits = Vec::with_capacity(4 * n * n);
        let mut sign_bits = Vec::with_capacity(2 * n);
        for r in 0..2 * n {
            let (x, z, s) = self.row(r);
            bits.extend((0..n).map(|q| (x >> q) & 1 == 1));
            bits.extend((0..n).map(|q| (z >> q) & 1 == 1));
            sign_bits.push(s);
        }
        (hex::encode(pack_bits(&bits)), hex::encode(pack_bits(&sign_bits)))
    }

    pub fn from_hex(n: usize, table: &str, signs: &str) -> Result<Self> {
        let bad = |m: &str| Error::Format {
            location: "tableau".into(),
            message: m.to_string(),
        };
        if !(1..=MAX_QUBITS).contains(&n) {
            return Err(bad("width out of range"));
        }
        let tb = hex::decode(table).map_err(|e| bad(&format!("table hex: {e}")))?;
        let sb = hex::decode(signs).map_err(|e| bad(&format!("sign hex: {e}")))?;
        if tb.len() != (4 * n * n).div_ceil(8) || sb.len() != (2 * n).div_ceil(8) {
            return Err(bad(&format!("hex length does not match {n} qubits")));
        }
        let get = |bytes: &[u8], k: usize| (bytes[k / 8] >> (7 - k % 8)) & 1 == 1;
        let mut rows = Vec::with_capacity(2 * n);
        let mut sgn = 0u32;
        for r in 0..2 * n {
            let (mut x, mut z) = (0u32, 0u32);
            for q in 0..n {
                x |= u32::from(get(&tb, r * 2 * n + q)) << q;
                z |= u32::from(get(&tb, r * 2 * n + n + q)) << q;
            }
            rows.push((x, z));
            sgn |= u32::from(get(&sb, r)) << r;
        }
        let t = CliffordTableau::from_rows(n, &rows, sgn);
        if !t.is_symplectic() {
            return Err(bad("matrix is not symplectic"));
        }
        Ok(t)
    }
}

fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (k, &b) in bits.iter().enumerate() {
        if b {
            out[k / 8] |= 1 << (7 - k % 8);
        }
    }
    out
}

fn sample_qmallows<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (Vec<bool>, Vec<usize>) {
    let mut had = vec![false; n];
    let mut perm = vec![0usize; n];
    let mut inds: Vec<usize> = (0..n).collect();
    for i in 0..n {
        let m = (n - i) as i32;
        let eps = 4f64.powi(-m);
        let r: f64 = rng.gen();
        let index = -((r + (1.0 - r) * eps).log2().ceil() as i32);
        had[i] = index < m;
        let k = if index < m { index } else { 2 * m - index - 1 };
        perm[i] = inds.remove(k as usize);
    }
    (had, perm)
}

/// Row masks of a random symmetric matrix with random diagonal.
fn random_symmetric<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<u32> {
    let mut m = vec![0u32; n];
    for i in 0..n {
        if rng.gen::<bool>() {
            m[i] |= 1 << i;
        }
        for j in 0..i {
            if rng.gen::<bool>() {
                m[i] |= 1 << j;
                m[j] |= 1 << i;
            }
        }
    }
    m
}

fn random_unit_lower<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<u32> {
    (0..n)
        .map(|i| {
            let mut row = 1u32 << i;
            for j in 0..i {
                if rng.gen::<bool>() {
                    row |= 1 << j;
                }
            }
            row
        })
        .collect()
}

fn mat_mul(a: &[u32], b: &[u32]) -> Vec<u32> {
    a.iter()
        .map(|&row| {
            let mut acc = 0u32;
            for (k, &br) in b.iter().enumerate() {
                if (row >> k) & 1 == 1 {
                    acc ^= br;
                }
            }
            acc
        })
        .collect()
}

fn transpose(a: &[u32], n: usize) -> Vec<u32> {
    (0..n)
        .map(|c| (0..n).fold(0u32, |acc, r| acc | (((a[r] >> c) & 1) << r)))
        .collect()
}

/// Inverse of a unit lower-triangular GF(2) matrix by forward substitution.
fn inverse_unit_lower(a: &[u32], n: usize) -> Vec<u32> {
    let mut inv = vec![0u32; n];
    for i in 0..n {
        let mut row = 1u32 << i;
        for j in 0..i {
            if (a[i] >> j) & 1 == 1 {
                row ^= inv[j];
            }
        }
        inv[i] = row;
    }
    inv
}

/// [[delta, 0], [gamma delta, delta^{-T}]] as 2N row masks over 2N columns.
fn block_table(n: usize, gamma: &[u32], delta: &[u32]) -> Vec<u32> {
    let gd = mat_mul(gamma, delta);
    let inv_t = transpose(&inverse_unit_lower(delta, n), n);
    let mut rows = Vec::with_capacity(2 * n);
    rows.extend(delta.iter().copied());
    rows.extend((0..n).map(|i| gd[i] | (inv_t[i] << n)));
    rows
}
