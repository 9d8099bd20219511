mod common;

use noqe::noise::{noisy_run, DensityMatrix, NoiseModel};
use noqe::pipeline::{
    build_hadamard_circuit, exact_matrices, hadamard_matrices, solve_gevp, GroupTable, ReferenceSpec, Shots,
    DEFAULT_S_MIN,
};
use noqe::sim::{run_circuit, Circuit, Gate, GateKind, Statevector};
use noqe::zne::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{data_dir, dense_unitary, h2_hamiltonian, phase_distance};

fn random_circuit(n: usize, len: usize, rng: &mut ChaCha8Rng) -> Circuit {
    let mut c = Circuit::new(n);
    for _ in 0..len {
        let a = rng.gen_range(0..n);
        let mut b = rng.gen_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let t = rng.gen_range(-3.0..3.0);
        let g = match rng.gen_range(0..7) {
            0 => Gate::one(GateKind::H, a),
            1 => Gate::one(GateKind::S, a),
            2 => Gate::one(GateKind::Ry(t), a),
            3 => Gate::one(GateKind::Rz(t), a),
            4 => Gate::two(GateKind::Cnot, a, b),
            5 => Gate::two(GateKind::Givens(t), a, b),
            _ => Gate::two(GateKind::Crz(t), a, b),
        };
        c.push(g).unwrap();
    }
    c
}

#[test]
fn scale_one_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let c = random_circuit(3, 12, &mut rng);
    assert_eq!(fold_circuit(&c, 1.0).unwrap(), c);
}

#[test]
fn scale_three_triples_gate_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let c = random_circuit(3, 10, &mut rng);
    let f = fold_circuit(&c, 3.0).unwrap();
    assert_eq!(f.len(), 30);
    assert!(phase_distance(&dense_unitary(&f), &dense_unitary(&c)) < 1e-10);
}

#[test]
fn scale_one_and_a_half_on_ten_gates() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let c = random_circuit(3, 10, &mut rng);
    let f = fold_circuit(&c, 1.5).unwrap();
    assert!((14..=16).contains(&f.len()), "{} gates", f.len());
    assert!(phase_distance(&dense_unitary(&f), &dense_unitary(&c)) < 1e-10);
}

#[test]
fn gate_count_tracks_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let c = random_circuit(3, 40, &mut rng);
    for s in DEFAULT_SCALES {
        let f = fold_circuit(&c, s).unwrap();
        assert!((f.len() as f64 - s * 40.0).abs() <= 1.0, "scale {s}: {} gates", f.len());
    }
}

#[test]
fn fold_rejects_scale_below_one() {
    assert!(fold_circuit(&Circuit::new(1), 0.9).is_err());
    assert!(fold_circuit(&Circuit::new(1), f64::NAN).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn folding_preserves_the_unitary(seed in any::<u64>(), len in 1usize..25) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_circuit(3, len, &mut rng);
        let u = dense_unitary(&c);
        for s in DEFAULT_SCALES {
            let f = fold_circuit(&c, s).unwrap();
            prop_assert!(phase_distance(&dense_unitary(&f), &u) <= 1e-9);
        }
    }
}

fn pts(f: impl Fn(f64) -> f64) -> Vec<(f64, f64, f64)> {
    DEFAULT_SCALES.iter().map(|&x| (x, f(x), 0.01)).collect()
}

#[test]
fn constant_data_extrapolates_to_the_constant() {
    let fit = extrapolate(&pts(|_| -0.83)).unwrap();
    assert!((fit.value + 0.83).abs() < 1e-12);
}

#[test]
fn recovers_synthetic_exponential() {
    let (a, b, c) = (0.7, 0.25, 0.9);
    let fit = extrapolate(&pts(|x| a + b * (-c * x).exp())).unwrap();
    assert!(!fit.linear_fallback);
    assert!((fit.value - (a + b)).abs() < 1e-6, "{fit:?}");
    assert!((fit.c - c).abs() < 1e-4);
}

#[test]
fn extrapolation_exactness_over_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let (a, b, c): (f64, f64, f64) = (rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.05..3.0));
        if b.abs() < 0.05 {
            continue;
        }
        let fit = extrapolate(&pts(|x| a + b * (-c * x).exp())).unwrap();
        assert!((fit.value - (a + b)).abs() < 1e-6, "a={a} b={b} c={c}: {fit:?}");
    }
}

#[test]
fn linear_data_falls_back_to_a_line() {
    let fit = extrapolate(&pts(|x| 1.0 - 0.1 * x)).unwrap();
    assert!(fit.linear_fallback);
    assert!((fit.value - 1.0).abs() < 1e-9);
}

#[test]
fn extrapolation_rejects_degenerate_input() {
    assert!(extrapolate(&[(1.0, 1.0, 0.1), (2.0, 1.0, 0.1)]).is_err());
    assert!(extrapolate(&[(1.0, 1.0, 0.1), (1.0, 0.9, 0.1), (1.0, 0.8, 0.1)]).is_err());
}

#[test]
fn default_scales_are_accepted() {
    let cfg: ZneConfig = serde_json::from_str(r#"{"shots_per_scale": 100}"#).unwrap();
    assert_eq!(cfg.scales, vec![1.0, 1.5, 2.0, 2.5, 3.0]);
    cfg.validate().unwrap();
    let bad: ZneConfig = serde_json::from_str(r#"{"scales": [1, 1, 2], "shots_per_scale": 1}"#).unwrap();
    assert!(bad.validate().is_err());
}

fn h2_specs() -> Vec<ReferenceSpec> {
    (1..=2)
        .map(|k| {
            let a = Circuit::load(&data_dir().join(format!("ref{k}.json"))).unwrap();
            ReferenceSpec::new(&format!("psi_{k}"), a, None).unwrap()
        })
        .collect()
}

#[test]
fn infidelity_grows_with_scale() {
    let specs = h2_specs();
    let c = build_hadamard_circuit(&specs[0], &specs[1], 0.0).unwrap();
    let ideal = run_circuit(&c, &Statevector::zero(9)).unwrap();
    let model = NoiseModel::scaled(1.0);
    let mut last = -1.0;
    for s in DEFAULT_SCALES {
        let rho = noisy_run(&fold_native(&c, s).unwrap(), &model, &DensityMatrix::zero_state(9).unwrap()).unwrap();
        let infid = 1.0 - rho.fidelity_with_pure(&ideal);
        assert!(infid >= last, "scale {s}: {infid} < {last}");
        last = infid;
    }
}

#[test]
fn noiseless_zne_equals_unmitigated() {
    let specs = h2_specs();
    let h = h2_hamiltonian();
    let groups = GroupTable::load(&data_dir().join("groups.json")).unwrap();
    let cfg = ZneConfig {
        scales: DEFAULT_SCALES.to_vec(),
        shots_per_scale: 2000,
    };
    let z = zne_hadamard_matrices(&specs, &h, Some(&groups), &cfg, None, 5).unwrap();
    let plain = hadamard_matrices(&specs, &h, Shots::PerSetting(2000), None, 99, Some(&groups)).unwrap();
    let e_z = solve_gevp(&z.mitigated.s, &z.mitigated.h, DEFAULT_S_MIN).unwrap().energies[0];
    let e_p = solve_gevp(&plain.s, &plain.h, DEFAULT_S_MIN).unwrap().energies[0];
    // element-wise: mitigated vs unmitigated within combined 3 SE
    let (zs, ps) = (z.mitigated.h_se.as_ref().unwrap(), plain.h_se.as_ref().unwrap());
    for (i, j) in [(0, 0), (0, 1), (1, 1)] {
        let tol = 3.0 * (zs[(i, j)].re.powi(2) + ps[(i, j)].re.powi(2)).sqrt();
        assert!((z.mitigated.h[(i, j)].re - plain.h[(i, j)].re).abs() <= tol, "H{i}{j}");
    }
    assert!(e_z.is_finite() && e_p.is_finite());
    // 17 settings at each of 5 scales
    assert_eq!(z.total_shots, 5 * 17 * 2000);
    assert_eq!(z.total_shots, z.per_scale.iter().map(|e| e.shots).sum::<u64>());
}

#[test]
fn exact_noiseless_zne_reproduces_oracle() {
    let specs = h2_specs();
    let h = h2_hamiltonian();
    let cfg = ZneConfig {
        scales: DEFAULT_SCALES.to_vec(),
        shots_per_scale: 0,
    };
    let z = zne_hadamard_matrices(&specs, &h, None, &cfg, None, 0).unwrap();
    let exact = exact_matrices(&specs, &h).unwrap();
    assert!((&z.mitigated.h - &exact.h).norm() < 1e-9);
    assert!((&z.mitigated.s - &exact.s).norm() < 1e-9);
}

#[test]
fn exact_noisy_zne_reduces_bias() {
    let specs = h2_specs();
    let h = h2_hamiltonian();
    let groups = GroupTable::load(&data_dir().join("groups.json")).unwrap();
    let cfg = ZneConfig {
        scales: DEFAULT_SCALES.to_vec(),
        shots_per_scale: 0,
    };
    let model = NoiseModel::scaled(1.0);
    let z = zne_hadamard_matrices(&specs, &h, Some(&groups), &cfg, Some(&model), 0).unwrap();
    let exact = exact_matrices(&specs, &h).unwrap();
    let e0 = solve_gevp(&exact.s, &exact.h, DEFAULT_S_MIN).unwrap().energies[0];
    let raw = &z.per_scale[0];
    let e_raw = solve_gevp(&raw.s, &raw.h, DEFAULT_S_MIN).unwrap().energies[0];
    let e_mit = solve_gevp(&z.mitigated.s, &z.mitigated.h, DEFAULT_S_MIN).unwrap().energies[0];
    assert!((e_mit - e0).abs() < (e_raw - e0).abs(), "raw {e_raw} mitigated {e_mit} exact {e0}");
}

#[test]
fn native_fold_tracks_two_qubit_count() {
    let specs = h2_specs();
    let c = build_hadamard_circuit(&specs[0], &specs[1], 0.3).unwrap();
    let two_q = |c: &Circuit| c.gates.iter().filter(|g| g.qubits().len() == 2).count() as f64;
    let base = fold_native(&c, 1.0).unwrap();
    let g2 = two_q(&base);
    let u = dense_unitary(&c);
    for s in DEFAULT_SCALES {
        let f = fold_native(&c, s).unwrap();
        assert!((two_q(&f) - s * g2).abs() <= 1.0, "scale {s}: {} vs {}", two_q(&f), s * g2);
        assert!(phase_distance(&dense_unitary(&f), &u) < 1e-9, "scale {s}");
    }
}
