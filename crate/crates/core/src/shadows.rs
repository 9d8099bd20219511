//! Randomized global-Clifford measurements, snapshot inversion and dataset files.
//!
//! Each snapshot draws a fresh uniform Clifford U, measures U|psi> once in the
//! computational basis and stores (U, b). The random stream for snapshot k is
//! ChaCha8 keyed by sha256 of the master seed with stream id k, so a dataset does
//! not depend on thread count or scheduling.

use std::io::{BufRead, BufReader};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clifford::{CliffordTableau, MAX_QUBITS};
use crate::error::{contract, Error, Result};
use crate::noise::{noisy_run, sample_one, DensityMatrix, NoiseKernel, NoiseModel, DM_MAX_QUBITS};
use crate::sim::{apply_gate_raw, bitstring, parse_bitstring, run_circuit, sample_index, Circuit, Statevector};
use crate::C64;

pub const SEED_SCHEME: &str = "chacha8(key=sha256(\"noqe-shadow\"||seed_le), stream=index)";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub tableau: CliffordTableau,
    pub outcome: usize,
}

impl Snapshot {
    pub fn num_qubits(&self) -> usize {
        self.tableau.num_qubits()
    }

    /// U^dagger |b>.
    pub fn pullback(&self) -> Vec<C64> {
        let mut amps = vec![C64::new(0.0, 0.0); 1 << self.num_qubits()];
        self.tableau.pullback_into(self.outcome, &mut amps);
        amps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: u64,
    pub noise: Option<NoiseModel>,
    pub circuit_hash: String,
    pub created: String,
    pub seed_scheme: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShadowDataset {
    pub label: String,
    pub num_qubits: usize,
    pub snapshots: Vec<Snapshot>,
    pub meta: DatasetMeta,
}

impl ShadowDataset {
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }
}

/// Derives an independent 64-bit seed for a named sub-job.
pub fn derive_seed(master: u64, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(tag.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

fn stream_key(seed: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"noqe-shadow");
    h.update(seed.to_le_bytes());
    h.finalize().into()
}

fn index_rng(key: &[u8; 32], index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(*key);
    rng.set_stream(index as u64);
    rng
}

pub fn circuit_hash(c: &Circuit) -> String {
    hex::encode(Sha256::digest(c.to_json().as_bytes()))
}

/// Acquires `n` snapshots of the state prepared by `prep` from |0...0>.
///
/// Without noise the prepared statevector is rotated by each sampled Clifford. With
/// noise the prepared density matrix is computed once under the model and each
/// measurement circuit `to_circuit(U)` is run through the same per-gate channels.
pub fn acquire(prep: &Circuit, n: usize, noise: Option<&NoiseModel>, seed: u64, label: &str) -> Result<ShadowDataset> {
    if n == 0 {
        return Err(contract("snapshot count must be >= 1"));
    }
    let nq = prep.num_qubits;
    if nq == 0 || nq > MAX_QUBITS {
        return Err(Error::Resource(format!("{nq}-qubit shadows outside the 1..={MAX_QUBITS} guardrail")));
    }
    prep.validate()?;
    let key = stream_key(seed);
    let noise = noise.filter(|m| !m.is_noiseless());

    let snapshots: Vec<Snapshot> = match noise {
        None => {
            let psi = run_circuit(prep, &Statevector::zero(nq))?;
            (0..n)
                .into_par_iter()
                .map_init(
                    || vec![C64::new(0.0, 0.0); 1 << nq],
                    |buf, k| {
                        let mut rng = index_rng(&key, k);
                        let tableau = CliffordTableau::sample_uniform(nq, &mut rng);
                        buf.copy_from_slice(psi.amplitudes());
                        for g in &tableau.to_circuit().gates {
                            apply_gate_raw(buf, nq, g, false);
                        }
                        let probs: Vec<f64> = buf.iter().map(|a| a.norm_sqr()).collect();
                        let outcome = sample_index(&probs, &mut rng);
                        Snapshot { tableau, outcome }
                    },
                )
                .collect()
        }
        Some(model) => {
            if nq > DM_MAX_QUBITS {
                return Err(Error::Resource(format!(
                    "noisy acquisition needs a {nq}-qubit density matrix (limit {DM_MAX_QUBITS})"
                )));
            }
            let rho0 = noisy_run(prep, model, &DensityMatrix::zero_state(nq)?)?;
            let kernel = NoiseKernel::new(model)?;
            (0..n)
                .into_par_iter()
                .map(|k| {
                    let mut rng = index_rng(&key, k);
                    let tableau = CliffordTableau::sample_uniform(nq, &mut rng);
                    let mut rho = rho0.clone();
                    for g in &tableau.to_circuit().gates {
                        kernel.apply_gate(&mut rho, g);
                    }
                    let outcome = sample_one(&rho, &mut rng);
                    Snapshot { tableau, outcome }
                })
                .collect()
        }
    };

    Ok(ShadowDataset {
        label: label.to_string(),
        num_qubits: nq,
        snapshots,
        meta: DatasetMeta {
            seed,
            noise: noise.cloned(),
            circuit_hash: circuit_hash(prep),
            created: format!("noqe {}", env!("CARGO_PKG_VERSION")),
            seed_scheme: SEED_SCHEME.to_string(),
        },
    })
}

/// Inverse-channel snapshot (D+1)|s><s| - I with |s> = U^dagger|b>.
pub fn snapshot_matrix(s: &Snapshot) -> DMatrix<C64> {
    let v = s.pullback();
    let d = v.len();
    let scale = (d + 1) as f64;
    DMatrix::from_fn(d, d, |r, c| {
        let mut x = v[r] * v[c].conj() * scale;
        if r == c {
            x -= 1.0;
        }
        x
    })
}

/// Draws a bootstrap multiplicity vector (multinomial with n trials over n items).
pub fn resample_counts<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut w = vec![0.0; n];
    for _ in 0..n {
        w[rng.gen_range(0..n)] += 1.0;
    }
    w
}

#[derive(Serialize, Deserialize)]
struct Header {
    label: String,
    num_qubits: usize,
    n: usize,
    seed: u64,
    noise: Option<NoiseModel>,
    circuit_hash: String,
    created: String,
    seed_scheme: String,
    checksum: String,
}

#[derive(Serialize, Deserialize)]
struct Record {
    t: String,
    s: String,
    b: String,
}

fn record_line(s: &Snapshot) -> String {
    let (t, sg) = s.tableau.to_hex();
    let rec = Record {
        t,
        s: sg,
        b: bitstring(s.outcome, s.num_qubits()),
    };
    serde_json::to_string(&rec).expect("record serializes")
}

/// Serializes to the line format: a JSON header, then one JSON record per snapshot.
pub fn to_jsonl(ds: &ShadowDataset) -> String {
    let lines: Vec<String> = ds.snapshots.iter().map(record_line).collect();
    let mut h = Sha256::new();
    for l in &lines {
        h.update(l.as_bytes());
        h.update(b"\n");
    }
    let header = Header {
        label: ds.label.clone(),
        num_qubits: ds.num_qubits,
        n: ds.len(),
        seed: ds.meta.seed,
        noise: ds.meta.noise.clone(),
        circuit_hash: ds.meta.circuit_hash.clone(),
        created: ds.meta.created.clone(),
        seed_scheme: ds.meta.seed_scheme.clone(),
        checksum: hex::encode(h.finalize()),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for l in lines {
        out.push_str(&l);
        out.push('\n');
    }
    out
}

/// Writes atomically through a sibling temp file.
pub fn save(ds: &ShadowDataset, path: &Path) -> Result<()> {
    crate::io::write_atomic(path, to_jsonl(ds).as_bytes())
}

pub fn load(path: &Path) -> Result<ShadowDataset> {
    let f = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_reader(BufReader::new(f))
}

pub fn from_reader<R: BufRead>(reader: R) -> Result<ShadowDataset> {
    let fmt = |location: String, message: String| Error::Format { location, message };
    let mut lines = reader.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| fmt("header".into(), "empty file".into()))?
        .map_err(|e| fmt("header".into(), e.to_string()))?;
    let header: Header = serde_json::from_str(&header_line).map_err(|e| fmt("header".into(), e.to_string()))?;
    let nq = header.num_qubits;
    if nq == 0 || nq > MAX_QUBITS {
        return Err(fmt("header".into(), format!("num_qubits {nq} out of range")));
    }
    let mut snapshots = Vec::with_capacity(header.n);
    let mut h = Sha256::new();
    for (k, line) in lines.enumerate() {
        let loc = || format!("record {k}");
        let line = line.map_err(|e| fmt(loc(), e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        if k >= header.n {
            return Err(fmt(loc(), format!("more records than the declared {}", header.n)));
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| fmt(loc(), e.to_string()))?;
        if rec.b.len() != nq {
            return Err(fmt(loc(), format!("outcome has {} bits, dataset has {nq} qubits", rec.b.len())));
        }
        let tableau = CliffordTableau::from_hex(nq, &rec.t, &rec.s).map_err(|e| fmt(loc(), e.to_string()))?;
        let outcome = parse_bitstring(&rec.b).map_err(|e| fmt(loc(), e.to_string()))?;
        h.update(line.as_bytes());
        h.update(b"\n");
        snapshots.push(Snapshot { tableau, outcome });
    }
    if snapshots.len() != header.n {
        return Err(fmt(
            format!("record {}", snapshots.len()),
            format!("truncated: header declares {} records", header.n),
        ));
    }
    if hex::encode(h.finalize()) != header.checksum {
        return Err(fmt("checksum".into(), "record checksum does not match header".into()));
    }
    Ok(ShadowDataset {
        label: header.label,
        num_qubits: nq,
        snapshots,
        meta: DatasetMeta {
            seed: header.seed,
            noise: header.noise,
            circuit_hash: header.circuit_hash,
            created: header.created,
            seed_scheme: header.seed_scheme,
        },
    })
}
