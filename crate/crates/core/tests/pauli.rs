mod common;

use nalgebra::DMatrix;
use noqe::pauli::{materialize, parse_hamiltonian, PauliSum, PauliWord};
use noqe::sim::Statevector;
use noqe::{Error, C64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

#[test]
fn z_is_diag_one_minus_one() {
    let m = materialize(&PauliWord::parse("Z").unwrap()).unwrap();
    assert_eq!(m, DMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)]));
}

#[test]
fn ii_is_identity() {
    let m = materialize(&PauliWord::parse("II").unwrap()).unwrap();
    assert_eq!(m, DMatrix::<C64>::identity(4, 4));
}

#[test]
fn xy_is_kron_and_involutory() {
    let x = DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]);
    let y = DMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]);
    let m = materialize(&PauliWord::parse("XY").unwrap()).unwrap();
    assert!((&m - kron(&x, &y)).norm() < 1e-15);
    assert!((&m * &m - DMatrix::<C64>::identity(4, 4)).norm() < 1e-12);
}

#[test]
fn every_two_qubit_word_is_unitary_hermitian_involutory() {
    for a in "IXYZ".chars() {
        for b in "IXYZ".chars() {
            let m = materialize(&PauliWord::parse(&format!("{a}{b}")).unwrap()).unwrap();
            let id = DMatrix::<C64>::identity(4, 4);
            assert!((&m - m.adjoint()).norm() < 1e-12);
            assert!((&m * m.adjoint() - &id).norm() < 1e-12);
            assert!((&m * &m - &id).norm() < 1e-12);
        }
    }
}

#[test]
fn dense_guardrail() {
    let w = PauliWord::identity(13);
    assert!(matches!(materialize(&w), Err(Error::Resource(_))));
}

#[test]
fn zzii_on_1100() {
    let h = PauliSum::from_strs(4, &[("ZZII", 1.0)]).unwrap();
    let s = Statevector::from_bitstring("1100").unwrap();
    assert!((h.expectation(&s).unwrap() - c(1.0, 0.0)).norm() < 1e-14);
}

#[test]
fn x_on_plus() {
    let h = PauliSum::from_strs(1, &[("X", 1.0)]).unwrap();
    let s = Statevector::from_amplitudes(vec![c(0.5f64.sqrt(), 0.), c(0.5f64.sqrt(), 0.)]).unwrap();
    assert!((h.expectation(&s).unwrap() - c(1.0, 0.0)).norm() < 1e-14);
}

#[test]
fn expectation_qubit_mismatch() {
    let h = PauliSum::from_strs(2, &[("ZZ", 1.0)]).unwrap();
    assert!(matches!(h.expectation(&Statevector::zero(3)), Err(Error::Contract(_))));
}

#[test]
fn h2_ground_state_expectation_is_lowest_eigenvalue() {
    let h = noqe::pauli::load_hamiltonian(&common::data_dir().join("hamiltonian.json")).unwrap();
    let m = h.materialize().unwrap();
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let (k, e0) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    let v: Vec<C64> = eig.eigenvectors.column(k).iter().copied().collect();
    let psi = Statevector::normalized(v).unwrap();
    let val = h.expectation(&psi).unwrap();
    assert!((val.re - e0).abs() < 1e-10 && val.im.abs() < 1e-10);
}

#[test]
fn parse_single_term() {
    let h = parse_hamiltonian(br#"{"num_qubits":1,"terms":[{"pauli":"Z","re":0.5,"im":0}]}"#).unwrap();
    assert_eq!(h.term_count(), 1);
    assert!(h.is_hermitian());
}

#[test]
fn parse_length_mismatch_names_term() {
    let err = parse_hamiltonian(br#"{"num_qubits":4,"terms":[{"pauli":"ZZZZ","re":1,"im":0},{"pauli":"ZZZ","re":0.5,"im":0}]}"#)
        .unwrap_err();
    match err {
        Error::Parse { location, .. } => assert!(location.contains("term 1"), "{location}"),
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn parse_bad_letter_and_nonfinite() {
    assert!(matches!(
        parse_hamiltonian(br#"{"num_qubits":1,"terms":[{"pauli":"Q","re":1,"im":0}]}"#),
        Err(Error::Parse { .. })
    ));
    assert!(matches!(
        parse_hamiltonian(br#"{"num_qubits":1,"terms":[{"pauli":"Z","re":1e999,"im":0}]}"#),
        Err(Error::Parse { .. })
    ));
}

#[test]
fn parse_merges_duplicates() {
    let h = parse_hamiltonian(
        br#"{"num_qubits":2,"terms":[{"pauli":"ZZ","re":0.2,"im":0},{"pauli":"XI","re":1,"im":0},{"pauli":"ZZ","re":0.3,"im":0}]}"#,
    )
    .unwrap();
    assert_eq!(h.term_count(), 2);
    assert_eq!(h.terms()[0].0.to_string(), "ZZ");
    assert!((h.terms()[0].1 - c(0.5, 0.0)).norm() < 1e-15);
}

#[test]
fn parse_complex_coefficient_clears_hermitian_flag() {
    let h = parse_hamiltonian(br#"{"num_qubits":1,"terms":[{"pauli":"Z","re":0.5,"im":0.1}]}"#).unwrap();
    assert!(!h.is_hermitian());
}

#[test]
fn bundled_hamiltonian_is_hermitian() {
    let h = noqe::pauli::load_hamiltonian(&common::data_dir().join("hamiltonian.json")).unwrap();
    assert!(h.is_hermitian());
    let m = h.materialize().unwrap();
    assert!((&m - m.adjoint()).norm() <= 1e-10);
    assert_eq!(h.unit_label(), "Hartree");
}

fn word_strategy(n: usize) -> impl Strategy<Value = String> {
    proptest::collection::vec(prop_oneof![Just('I'), Just('X'), Just('Y'), Just('Z')], n)
        .prop_map(|v| v.into_iter().collect())
}

proptest! {
    #[test]
    fn frobenius_bound_matches_trace_of_square(
        n in 1usize..=4,
        seed in any::<u64>(),
        k in 1usize..=30,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let words: Vec<String> = (0..k)
            .map(|_| (0..n).map(|_| ['I', 'X', 'Y', 'Z'][rand::Rng::gen_range(&mut rng, 0..4)]).collect())
            .collect();
        let terms: Vec<(PauliWord, C64)> = words.iter()
            .map(|w| (PauliWord::parse(w).unwrap(), C64::new(common::gauss(&mut rng), 0.0)))
            .collect();
        let h = PauliSum::new(n, terms, "").unwrap();
        let m = h.materialize().unwrap();
        let tr: f64 = (&m * &m).trace().re;
        let fb = h.frobenius_bound();
        prop_assert!((tr - fb.b).abs() <= 1e-8 * fb.d as f64);
    }

    #[test]
    fn expectation_equals_dense_quadratic_form(seed in any::<u64>(), words in proptest::collection::vec(word_strategy(3), 1..10)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let terms: Vec<(PauliWord, C64)> = words.iter()
            .map(|w| (PauliWord::parse(w).unwrap(), C64::new(common::gauss(&mut rng), 0.0)))
            .collect();
        let h = PauliSum::new(3, terms, "").unwrap();
        let psi = common::random_state(3, &mut rng);
        let v = nalgebra::DVector::from_vec(psi.clone());
        let dense = (v.adjoint() * h.materialize().unwrap() * &v)[(0, 0)];
        let fast = h.expectation(&Statevector::from_amplitudes(psi).unwrap()).unwrap();
        prop_assert!((dense - fast).norm() <= 1e-10);
    }
}
