mod common;

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use noqe::clifford::CliffordTableau;
use noqe::pauli::materialize;
use noqe::sim::{bitstring, Circuit, GateKind};
use noqe::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Checks U P_row U^dagger against the tableau rows with the dense unitary of `c`.
fn conjugation_matches(t: &CliffordTableau, c: &Circuit) -> bool {
    let n = t.num_qubits();
    let u = common::dense_unitary(c);
    for q in 0..n {
        for (row, letter) in [(q, 'X'), (n + q, 'Z')] {
            let w: String = (0..n).map(|k| if k == q { letter } else { 'I' }).collect();
            let p = materialize(&noqe::pauli::PauliWord::parse(&w).unwrap()).unwrap();
            let img = &u * p * u.adjoint();
            let (sign, word) = t.row_pauli(row);
            let want = materialize(&word).unwrap() * C64::new(sign, 0.0);
            if (img - want).norm() > 1e-10 {
                return false;
            }
        }
    }
    true
}

#[test]
fn sampled_tableaux_are_symplectic() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in 1..=4 {
        for _ in 0..10_000 {
            assert!(CliffordTableau::sample_uniform(n, &mut rng).is_symplectic());
        }
    }
}

#[test]
fn identity_tableau_gives_empty_circuit() {
    for n in 1..=5 {
        assert!(CliffordTableau::identity(n).to_circuit().is_empty());
    }
}

#[test]
fn hadamard_tableau_gives_hadamard() {
    let mut c = Circuit::new(1);
    c.add(GateKind::H, &[0]).unwrap();
    let t = CliffordTableau::from_circuit(&c).unwrap();
    let out = t.to_circuit();
    let d = common::phase_distance(&common::dense_unitary(&out), &common::dense_unitary(&c));
    assert!(d <= 1e-10);
    assert!(out.gates.iter().all(|g| g.kind == GateKind::H));
}

#[test]
fn to_circuit_conjugates_paulis_like_the_tableau() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for n in 1..=4 {
        for _ in 0..200 {
            let t = CliffordTableau::sample_uniform(n, &mut rng);
            let c = t.to_circuit();
            assert!(c.gates.iter().all(|g| matches!(
                g.kind,
                GateKind::H | GateKind::S | GateKind::Cnot | GateKind::Cz | GateKind::X | GateKind::Z
            )));
            assert!(conjugation_matches(&t, &c));
            assert_eq!(CliffordTableau::from_circuit(&c).unwrap(), t);
        }
    }
}

#[test]
fn to_circuit_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t = CliffordTableau::sample_uniform(4, &mut rng);
    assert_eq!(t.to_circuit(), t.clone().to_circuit());
}

#[test]
fn from_circuit_rejects_non_clifford() {
    let mut c = Circuit::new(1);
    c.add(GateKind::Rz(0.1), &[0]).unwrap();
    assert!(CliffordTableau::from_circuit(&c).is_err());
}

#[test]
fn pullback_examples() {
    let id = CliffordTableau::identity(3);
    let s = id.pullback_basis_state(0).unwrap();
    assert_eq!(s.amplitudes()[0], C64::new(1.0, 0.0));

    let mut c = Circuit::new(1);
    c.add(GateKind::H, &[0]).unwrap();
    let t = CliffordTableau::from_circuit(&c).unwrap();
    let s = t.pullback_basis_state(1).unwrap();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let ph = s.amplitudes()[0] / C64::new(r, 0.0);
    assert!((s.amplitudes()[0] - ph * r).norm() < 1e-12);
    assert!((s.amplitudes()[1] + ph * r).norm() < 1e-12);
    assert!(t.pullback_basis_state(2).is_err());
}

#[test]
fn pullback_matches_dense_adjoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for n in 1..=4 {
        for _ in 0..100 {
            let t = CliffordTableau::sample_uniform(n, &mut rng);
            let u = common::dense_unitary(&t.to_circuit());
            let b = rng.gen_range(0..1usize << n);
            let got = DVector::from_vec(t.pullback_basis_state(b).unwrap().into_amplitudes());
            let mut e = DVector::zeros(1 << n);
            e[b] = C64::new(1.0, 0.0);
            let want = u.adjoint() * e;
            let ip = want.dotc(&got);
            assert!((ip.norm() - 1.0).abs() < 1e-10, "pullback differs beyond phase");
        }
    }
}

/// The 24 one-qubit Cliffords modulo phase are labelled by their signed images of X and Z.
#[test]
fn one_qubit_sampling_is_uniform_over_24_classes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws = 100_000usize;
    let mut counts: HashMap<(String, bool, String, bool), usize> = HashMap::new();
    for _ in 0..draws {
        let t = CliffordTableau::sample_uniform(1, &mut rng);
        let (sx, px) = t.row_pauli(0);
        let (sz, pz) = t.row_pauli(1);
        *counts.entry((px.to_string(), sx < 0.0, pz.to_string(), sz < 0.0)).or_default() += 1;
    }
    assert_eq!(counts.len(), 24);
    let p = 1.0 / 24.0;
    let expect = draws as f64 * p;
    let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
    let mut chi2 = 0.0;
    for &c in counts.values() {
        assert!((c as f64 - expect).abs() <= 5.0 * sigma);
        chi2 += (c as f64 - expect).powi(2) / expect;
    }
    // chi-square 99.9% critical value with 23 degrees of freedom
    assert!(chi2 < 49.728, "chi2 = {chi2}");
}

#[test]
fn two_qubit_measurement_channel_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let psi = common::random_state(2, &mut rng);
    let rho = DVector::from_vec(psi.clone()) * DVector::from_vec(psi.clone()).adjoint();
    let d = 4usize;
    let mut acc = DMatrix::<C64>::zeros(d, d);
    let draws = 100_000;
    for _ in 0..draws {
        let t = CliffordTableau::sample_uniform(2, &mut rng);
        let out = noqe::sim::run_circuit(&t.to_circuit(), &noqe::sim::Statevector::from_amplitudes(psi.clone()).unwrap())
            .unwrap();
        let b = noqe::sim::sample_index(&out.probabilities(), &mut rng);
        let s = DVector::from_vec(t.pullback_basis_state(b).unwrap().into_amplitudes());
        acc += &s * s.adjoint();
    }
    acc /= C64::new(draws as f64, 0.0);
    let want = (rho + DMatrix::<C64>::identity(d, d)) / C64::new(5.0, 0.0);
    assert!((acc - want).norm() <= 0.01);
    let _ = bitstring(0, 2);
}
