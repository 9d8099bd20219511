#![allow(dead_code)]

use nalgebra::DMatrix;
use noqe::sim::{Circuit, Gate};
use noqe::C64;
use rand::Rng;

/// Embeds a k-qubit gate matrix into the full 2^n space by explicit index bookkeeping.
pub fn embed(gate: &Gate, n: usize) -> DMatrix<C64> {
    let u = gate.kind.matrix();
    let qs = gate.qubits();
    let k = qs.len();
    let dk = 1usize << k;
    let d = 1usize << n;
    let mut m = DMatrix::zeros(d, d);
    for col in 0..d {
        let bits: Vec<usize> = (0..n).map(|q| (col >> (n - 1 - q)) & 1).collect();
        let sub = qs.iter().fold(0usize, |acc, &q| (acc << 1) | bits[q]);
        for out in 0..dk {
            let amp = u[out * dk + sub];
            if amp.norm() == 0.0 {
                continue;
            }
            let mut nb = bits.clone();
            for (i, &q) in qs.iter().enumerate() {
                nb[q] = (out >> (k - 1 - i)) & 1;
            }
            let row = nb.iter().enumerate().fold(0usize, |acc, (q, &b)| acc | (b << (n - 1 - q)));
            m[(row, col)] += amp;
        }
    }
    m
}

pub fn dense_unitary(c: &Circuit) -> DMatrix<C64> {
    let d = 1usize << c.num_qubits;
    let mut u = DMatrix::identity(d, d);
    for g in &c.gates {
        u = embed(g, c.num_qubits) * u;
    }
    u
}

/// min over global phase of ||a - e^{i phi} b||_F.
pub fn phase_distance(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    let ip: C64 = a.iter().zip(b.iter()).map(|(x, y)| y.conj() * x).sum();
    let ph = if ip.norm() > 0.0 { ip / ip.norm() } else { C64::new(1.0, 0.0) };
    (a - b * ph).norm()
}

pub fn random_state<R: Rng>(n: usize, rng: &mut R) -> Vec<C64> {
    let d = 1usize << n;
    let v: Vec<C64> = (0..d).map(|_| C64::new(gauss(rng), gauss(rng))).collect();
    let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|a| a / norm).collect()
}

pub fn gauss<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn data_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/h2")
}

pub fn h2_hamiltonian() -> noqe::pauli::PauliSum {
    noqe::pauli::load_hamiltonian(&data_dir().join("hamiltonian.json")).unwrap()
}

/// HF occupation |1100> followed by the bundled ansatz `ref{k}.json`.
pub fn h2_prep(k: usize) -> Circuit {
    let ansatz = Circuit::load(&data_dir().join(format!("ref{k}.json"))).unwrap();
    let mut c = Circuit::new(4);
    c.add(noqe::sim::GateKind::X, &[0]).unwrap();
    c.add(noqe::sim::GateKind::X, &[1]).unwrap();
    c.extend(&ansatz).unwrap();
    c
}

pub fn dataset(num_qubits: usize, snapshots: Vec<noqe::shadows::Snapshot>, label: &str) -> noqe::shadows::ShadowDataset {
    noqe::shadows::ShadowDataset {
        label: label.to_string(),
        num_qubits,
        snapshots,
        meta: noqe::shadows::DatasetMeta {
            seed: 0,
            noise: None,
            circuit_hash: String::new(),
            created: "test".into(),
            seed_scheme: "test".into(),
        },
    }
}

pub fn random_snapshots<R: Rng>(num_qubits: usize, n: usize, rng: &mut R) -> Vec<noqe::shadows::Snapshot> {
    (0..n)
        .map(|_| noqe::shadows::Snapshot {
            tableau: noqe::clifford::CliffordTableau::sample_uniform(num_qubits, rng),
            outcome: rng.gen_range(0..1usize << num_qubits),
        })
        .collect()
}

pub fn projector(psi: &[C64]) -> DMatrix<C64> {
    let v = nalgebra::DVector::from_vec(psi.to_vec());
    &v * v.adjoint()
}

/// GHZ on qubits 0,1, optional S on qubit 0, then the bundled ansatz.
pub fn h2_aux(k: usize, imag: bool) -> Circuit {
    use noqe::sim::GateKind;
    let ansatz = Circuit::load(&data_dir().join(format!("ref{k}.json"))).unwrap();
    let mut c = Circuit::new(4);
    c.add(GateKind::H, &[0]).unwrap();
    c.add(GateKind::Cnot, &[0, 1]).unwrap();
    if imag {
        c.add(GateKind::S, &[0]).unwrap();
    }
    c.extend(&ansatz).unwrap();
    c
}

pub fn state_of(c: &Circuit) -> Vec<C64> {
    noqe::sim::run_circuit(c, &noqe::sim::Statevector::zero(c.num_qubits)).unwrap().into_amplitudes()
}

pub fn exact_estimate(rho: DMatrix<C64>) -> noqe::estimators::ShadowEstimate {
    let trace = rho.trace();
    noqe::estimators::ShadowEstimate { matrix: rho, m: 1, n: 1.0, trace }
}
