//! Lowering of circuit gates to the native set used for noise placement and resource counts.
//!
//! Natives are arbitrary one-qubit gates plus CNOT, CZ and two-qubit unitaries (U2Q).
//! GIVENS becomes two U2Q exponentials, CRZ becomes RZ plus a ZZ exponential, CSWAP
//! becomes the seven-gate CNOT / controlled-sqrt(X) network.

use num_complex::Complex64 as C64;

use crate::sim::{Gate, GateKind};

const O: C64 = C64 { re: 0.0, im: 0.0 };
const L: C64 = C64 { re: 1.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

pub(crate) const PX: [C64; 4] = [O, L, L, O];
pub(crate) const PY: [C64; 4] = [O, C64 { re: 0.0, im: -1.0 }, I, O];
pub(crate) const PZ: [C64; 4] = [L, O, O, C64 { re: -1.0, im: 0.0 }];

pub(crate) fn kron2(a: &[C64; 4], b: &[C64; 4]) -> [C64; 16] {
    let mut m = [O; 16];
    for r in 0..4 {
        for c in 0..4 {
            m[r * 4 + c] = a[(r >> 1) * 2 + (c >> 1)] * b[(r & 1) * 2 + (c & 1)];
        }
    }
    m
}

/// exp(i alpha P) for an involutory 4x4 Pauli product P.
fn exp_i(alpha: f64, p: &[C64; 16]) -> [C64; 16] {
    let (s, c) = alpha.sin_cos();
    let mut m = [O; 16];
    for k in 0..16 {
        m[k] = I * s * p[k];
    }
    for k in 0..4 {
        m[k * 5] += c;
    }
    m
}

fn controlled_sqrt_x(dagger: bool) -> [C64; 16] {
    let a = C64::new(0.5, if dagger { -0.5 } else { 0.5 });
    let b = C64::new(0.5, if dagger { 0.5 } else { -0.5 });
    let mut m = [O; 16];
    m[0] = L;
    m[5] = L;
    m[10] = a;
    m[11] = b;
    m[14] = b;
    m[15] = a;
    m
}

fn u2q(m: [C64; 16], a: usize, b: usize) -> Gate {
    Gate::two(GateKind::U2q(Box::new(m)), a, b)
}

/// Native decomposition of one gate; exact up to global phase.
pub fn lower(gate: &Gate) -> Vec<Gate> {
    let q = gate.qubits();
    match gate.kind {
        GateKind::Givens(t) => vec![
            u2q(exp_i(t / 2.0, &kron2(&PX, &PY)), q[0], q[1]),
            u2q(exp_i(-t / 2.0, &kron2(&PY, &PX)), q[0], q[1]),
        ],
        GateKind::Crz(t) => vec![
            Gate::one(GateKind::Rz(t / 2.0), q[1]),
            u2q(exp_i(t / 4.0, &kron2(&PZ, &PZ)), q[0], q[1]),
        ],
        GateKind::Cswap => {
            let (c, a, b) = (q[0], q[1], q[2]);
            vec![
                Gate::two(GateKind::Cnot, b, a),
                u2q(controlled_sqrt_x(false), a, b),
                Gate::two(GateKind::Cnot, c, a),
                u2q(controlled_sqrt_x(true), a, b),
                Gate::two(GateKind::Cnot, c, a),
                u2q(controlled_sqrt_x(false), c, b),
                Gate::two(GateKind::Cnot, b, a),
            ]
        }
        _ => vec![gate.clone()],
    }
}

pub fn lower_all(gates: &[Gate]) -> Vec<Gate> {
    gates.iter().flat_map(lower).collect()
}
