mod common;

use nalgebra::{DMatrix, DVector};
use noqe::native::lower;
use noqe::noise::{
    apply_channel, noisy_run, sample_from_density, ChannelKind, DensityMatrix, NoiseModel,
};
use noqe::sim::{run_circuit, Circuit, Gate, GateKind, Statevector};
use noqe::{Error, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ALL: [ChannelKind; 3] = [
    ChannelKind::Depolarizing,
    ChannelKind::AmplitudeDamping,
    ChannelKind::PhaseDamping,
];

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn op1(m: [C64; 4], q: usize, n: usize) -> DMatrix<C64> {
    common::embed(&Gate::one(GateKind::U1q(Box::new(m)), q), n)
}

fn paulis() -> [[C64; 4]; 4] {
    let (o, l, i) = (c(0.0), c(1.0), C64::new(0.0, 1.0));
    [[l, o, o, l], [o, l, l, o], [o, -i, i, o], [l, o, o, -l]]
}

fn kraus_apply(rho: &DMatrix<C64>, ks: &[DMatrix<C64>]) -> DMatrix<C64> {
    ks.iter().map(|k| k * rho * k.adjoint()).fold(rho * c(0.0), |a, b| a + b)
}

/// Kraus-operator oracle for one channel on the listed qubits.
fn oracle_channel(rho: &DMatrix<C64>, kind: ChannelKind, qs: &[usize], p: f64, n: usize) -> DMatrix<C64> {
    match (kind, qs.len()) {
        (ChannelKind::Depolarizing, 1) => {
            let ks: Vec<_> = paulis()
                .iter()
                .enumerate()
                .map(|(k, m)| op1(*m, qs[0], n) * c(if k == 0 { (1.0 - 0.75 * p).sqrt() } else { (p / 4.0).sqrt() }))
                .collect();
            kraus_apply(rho, &ks)
        }
        (ChannelKind::Depolarizing, 2) => {
            let mut ks = Vec::new();
            for (a, pa) in paulis().iter().enumerate() {
                for (b, pb) in paulis().iter().enumerate() {
                    let w = if a == 0 && b == 0 { (1.0 - 15.0 * p / 16.0).sqrt() } else { (p / 16.0).sqrt() };
                    ks.push(op1(*pa, qs[0], n) * op1(*pb, qs[1], n) * c(w));
                }
            }
            kraus_apply(rho, &ks)
        }
        (ChannelKind::AmplitudeDamping, _) => qs.iter().fold(rho.clone(), |r, &q| {
            let k0 = op1([c(1.0), c(0.0), c(0.0), c((1.0 - p).sqrt())], q, n);
            let k1 = op1([c(0.0), c(p.sqrt()), c(0.0), c(0.0)], q, n);
            kraus_apply(&r, &[k0, k1])
        }),
        (ChannelKind::PhaseDamping, _) => qs.iter().fold(rho.clone(), |r, &q| {
            let k0 = op1([c(1.0), c(0.0), c(0.0), c((1.0 - p).sqrt())], q, n);
            let k1 = op1([c(0.0), c(0.0), c(0.0), c(p.sqrt())], q, n);
            kraus_apply(&r, &[k0, k1])
        }),
        _ => unreachable!(),
    }
}

/// Dense reference for noisy_run: lowered natives, each followed by its channels.
fn oracle_run(circ: &Circuit, model: &NoiseModel, rho0: &DMatrix<C64>) -> DMatrix<C64> {
    let n = circ.num_qubits;
    let mut rho = rho0.clone();
    for g in &circ.gates {
        for nat in lower(g) {
            let u = common::embed(&nat, n);
            rho = &u * rho * u.adjoint();
            let q = nat.qubits();
            let rate = if q.len() == 1 { model.rate_1q() } else { model.rate_2q() };
            for kind in ALL {
                if !model.channels.contains(&kind) {
                    continue;
                }
                rho = oracle_channel(&rho, kind, q, rate, n);
            }
        }
    }
    rho
}

fn random_dm<R: Rng>(n: usize, rank: usize, rng: &mut R) -> DMatrix<C64> {
    let d = 1usize << n;
    let mut m = DMatrix::zeros(d, d);
    let mut total = 0.0;
    for _ in 0..rank {
        let w: f64 = rng.gen();
        total += w;
        let v = DVector::from_vec(common::random_state(n, rng));
        m += &v * v.adjoint() * c(w);
    }
    m / c(total)
}

fn min_eigenvalue(m: &DMatrix<C64>) -> f64 {
    let h = (m + m.adjoint()) * c(0.5);
    h.symmetric_eigenvalues().min()
}

fn random_circuit<R: Rng>(n: usize, len: usize, rng: &mut R) -> Circuit {
    let mut circ = Circuit::new(n);
    for _ in 0..len {
        let a = rng.gen_range(0..n);
        let mut b = rng.gen_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let t = rng.gen_range(-3.0..3.0);
        let g = match rng.gen_range(0..8) {
            0 => Gate::one(GateKind::H, a),
            1 => Gate::one(GateKind::Ry(t), a),
            2 => Gate::one(GateKind::Phase(t), a),
            3 => Gate::two(GateKind::Cnot, a, b),
            4 => Gate::two(GateKind::Givens(t), a, b),
            5 => Gate::two(GateKind::Crz(t), a, b),
            6 if n >= 3 => {
                let cq = (0..n).find(|&q| q != a && q != b).unwrap();
                Gate::cswap(cq, a, b)
            }
            _ => Gate::one(GateKind::S, a),
        };
        circ.push(g).unwrap();
    }
    circ
}

#[test]
fn lowering_matches_gate_up_to_phase() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let t = rng.gen_range(-4.0..4.0);
        for g in [
            Gate::two(GateKind::Givens(t), 0, 2),
            Gate::two(GateKind::Crz(t), 2, 1),
            Gate::cswap(1, 2, 0),
            Gate::two(GateKind::Cnot, 1, 0),
        ] {
            let natives = Circuit { num_qubits: 3, gates: lower(&g), label: None };
            assert!(natives.gates.iter().all(|x| x.qubits().len() <= 2));
            let want = common::embed(&g, 3);
            assert!(common::phase_distance(&common::dense_unitary(&natives), &want) < 1e-12, "{:?}", g.kind);
        }
    }
}

#[test]
fn zero_rate_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rho = DensityMatrix::from_matrix(&random_dm(3, 3, &mut rng)).unwrap();
    for kind in ALL {
        let out = apply_channel(&rho, kind, &[1], 0.0).unwrap();
        assert!((out.to_matrix() - rho.to_matrix()).norm() < 1e-15);
    }
}

#[test]
fn full_amplitude_damping_decays_one() {
    let rho = DensityMatrix::from_pure(&Statevector::from_bitstring("1").unwrap()).unwrap();
    let out = apply_channel(&rho, ChannelKind::AmplitudeDamping, &[0], 1.0).unwrap();
    assert!((out.get(0, 0) - c(1.0)).norm() < 1e-15);
    assert!(out.get(1, 1).norm() < 1e-15);
}

#[test]
fn depolarizing_mixes_target_marginal() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = 0.13;
    let psi = Statevector::from_amplitudes(common::random_state(1, &mut rng)).unwrap();
    let rho = DensityMatrix::from_pure(&psi).unwrap();
    let out = apply_channel(&rho, ChannelKind::Depolarizing, &[0], p).unwrap();
    let want = rho.to_matrix() * c(1.0 - p) + DMatrix::identity(2, 2) * c(p / 2.0);
    assert!((out.to_matrix() - want).norm() <= 1e-12);
}

#[test]
fn bad_rates_are_contract_errors() {
    let rho = DensityMatrix::zero_state(2).unwrap();
    for r in [-0.1, 1.5, f64::NAN] {
        assert!(matches!(apply_channel(&rho, ChannelKind::PhaseDamping, &[0], r), Err(Error::Contract(_))));
    }
    let bad = NoiseModel { lambda: 1e4, ..NoiseModel::default() };
    assert!(noisy_run(&Circuit::new(2), &bad, &rho).is_err());
}

#[test]
fn channels_match_kraus_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..30 {
        let rho = random_dm(3, 2, &mut rng);
        let dm = DensityMatrix::from_matrix(&rho).unwrap();
        let p = rng.gen::<f64>();
        for kind in ALL {
            let qs: &[usize] = if kind == ChannelKind::Depolarizing { &[2, 0] } else { &[1, 2] };
            let got = apply_channel(&dm, kind, qs, p).unwrap().to_matrix();
            assert!((got - oracle_channel(&rho, kind, qs, p, 3)).norm() < 1e-12, "{kind:?}");
        }
    }
}

#[test]
fn channels_are_cptp_on_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let n = rng.gen_range(1..=3);
        let rho = DensityMatrix::from_matrix(&random_dm(n, rng.gen_range(1..=4), &mut rng)).unwrap();
        let kind = ALL[rng.gen_range(0..3)];
        let q = rng.gen_range(0..n);
        let qs = if kind == ChannelKind::Depolarizing && n > 1 && rng.gen() {
            vec![q, (q + 1) % n]
        } else {
            vec![q]
        };
        let out = apply_channel(&rho, kind, &qs, rng.gen()).unwrap();
        assert!((out.trace() - rho.trace()).norm() <= 1e-12);
        let m = out.to_matrix();
        assert!((&m - m.adjoint()).norm() < 1e-12);
        assert!(min_eigenvalue(&m) >= -1e-8);
    }
}

#[test]
fn noiseless_limit_matches_statevector() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let circ = random_circuit(3, 20, &mut rng);
    let model = NoiseModel { lambda: 0.0, ..NoiseModel::default() };
    let out = noisy_run(&circ, &model, &DensityMatrix::zero_state(3).unwrap()).unwrap();
    let psi = DVector::from_vec(run_circuit(&circ, &Statevector::zero(3)).unwrap().into_amplitudes());
    assert!((out.to_matrix() - &psi * psi.adjoint()).norm() <= 1e-10);
}

#[test]
fn single_h_fidelity_bound() {
    let mut circ = Circuit::new(1);
    circ.add(GateKind::H, &[0]).unwrap();
    let out = noisy_run(&circ, &NoiseModel::default(), &DensityMatrix::zero_state(1).unwrap()).unwrap();
    let ideal = run_circuit(&circ, &Statevector::zero(1)).unwrap();
    assert!(out.fidelity_with_pure(&ideal) >= 1.0 - 5.0 * 3e-5);
}

#[test]
fn noisy_run_matches_dense_oracle_and_is_cptp() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let circ = random_circuit(3, 20, &mut rng);
    let model = NoiseModel { p1: 0.01, p2: 0.03, lambda: 1.5, ..NoiseModel::default() };
    let rho0 = random_dm(3, 2, &mut rng);
    let out = noisy_run(&circ, &model, &DensityMatrix::from_matrix(&rho0).unwrap()).unwrap();
    assert!((out.trace() - c(1.0)).norm() <= 1e-10);
    assert!((out.to_matrix() - oracle_run(&circ, &model, &rho0)).norm() < 1e-10);

    let partial = NoiseModel { channels: vec![ChannelKind::AmplitudeDamping], ..model.clone() };
    let out = noisy_run(&circ, &partial, &DensityMatrix::from_matrix(&rho0).unwrap()).unwrap();
    assert!((out.to_matrix() - oracle_run(&circ, &partial, &rho0)).norm() < 1e-10);
}

#[test]
fn lambda_scaling_equals_scaled_rates() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let circ = random_circuit(3, 15, &mut rng);
    let rho0 = DensityMatrix::zero_state(3).unwrap();
    let (p1, p2, lam) = (3e-3, 2e-2, 1.25);
    let a = noisy_run(&circ, &NoiseModel { p1, p2, lambda: lam, ..NoiseModel::default() }, &rho0).unwrap();
    let b = noisy_run(&circ, &NoiseModel { p1: lam * p1, p2: lam * p2, lambda: 1.0, ..NoiseModel::default() }, &rho0)
        .unwrap();
    assert_eq!(a, b);
}

#[test]
fn fidelity_decreases_with_lambda() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let circ = random_circuit(4, 30, &mut rng);
    let ideal = run_circuit(&circ, &Statevector::zero(4)).unwrap();
    let mut last = f64::INFINITY;
    for lam in [0.0, 0.5, 1.0, 1.5] {
        let out = noisy_run(&circ, &NoiseModel::scaled(lam), &DensityMatrix::zero_state(4).unwrap()).unwrap();
        let f = out.fidelity_with_pure(&ideal);
        assert!(f <= last + 1e-14, "fidelity rose at lambda {lam}");
        last = f;
    }
    assert!(last < 1.0);
}

#[test]
fn guardrail_is_resource_error() {
    assert!(matches!(DensityMatrix::zero_state(11), Err(Error::Resource(_))));
}

#[test]
fn sample_pure_basis_density() {
    let rho = DensityMatrix::from_pure(&Statevector::from_bitstring("11").unwrap()).unwrap();
    let counts = sample_from_density(&rho, 10, 3).unwrap();
    assert_eq!(counts.len(), 1);
    assert_eq!(counts["11"], 10);
}

#[test]
fn sample_maximally_mixed() {
    let rho = DensityMatrix::maximally_mixed(2).unwrap();
    let counts = sample_from_density(&rho, 100_000, 4).unwrap();
    let sigma = (100_000.0f64 * 0.25 * 0.75).sqrt();
    assert_eq!(counts.len(), 4);
    for v in counts.values() {
        assert!((*v as f64 - 25_000.0).abs() <= 5.0 * sigma);
    }
    assert_eq!(counts, sample_from_density(&rho, 100_000, 4).unwrap());
}

#[test]
fn noise_config_json_defaults() {
    let m: NoiseModel = serde_json::from_str(r#"{"lambda": 0.5}"#).unwrap();
    assert_eq!(m.p1, 3e-5);
    assert_eq!(m.p2, 1.5e-3);
    assert_eq!(m.channels.len(), 3);
    let m: NoiseModel = serde_json::from_str(r#"{"p1":0.1,"p2":0.2,"lambda":1,"channels":["phase_damping"]}"#).unwrap();
    assert_eq!(m.channels, vec![ChannelKind::PhaseDamping]);
}
