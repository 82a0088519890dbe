//! Synthetic dataset generation, train/test splitting, evaluation metrics,
//! and the on-disk formats (JSON lines plus a sidecar manifest).

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evolution::{apply_process, ProcessStepConfig, Trajectory};
use crate::homogenization::{homogenize, objective, ObjectiveWeights, StiffnessMatrix};
use crate::mesh::{normalize_odf, FundamentalMesh, Odf};
use crate::plasticity::{ProcessMode, SlipSystemSet};

/// SHA-256 of a byte slice, hex-encoded.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

/// SHA-256 of a file's contents.
pub fn file_hash(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// Hash of a serializable configuration value.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(value)?))
}

/// Where a dataset came from: enough to regenerate it bit for bit.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Provenance {
    pub mesh_hash: String,
    pub config_hash: String,
    pub seed: u64,
}

/// One labeled sample: the ODF before and after a single process step.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetRecord {
    /// Index of the initial ODF this record came from.
    pub sample: usize,
    pub mode: ProcessMode,
    pub input_odf: Odf,
    pub output_odf: Odf,
    pub provenance: Provenance,
}

/// JSON-lines form of a record; provenance lives in the manifest.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct RecordLine {
    sample: usize,
    mode: ProcessMode,
    input: Vec<f64>,
    output: Vec<f64>,
}

/// Sidecar manifest of a dataset file.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DatasetManifest {
    /// Number of initial ODFs.
    pub odf_count: usize,
    /// Number of (ODF, mode) records.
    pub record_count: usize,
    pub modes: usize,
    pub seed: u64,
    pub mesh_hash: String,
    pub config_hash: String,
    /// (sample, mode) pairs the simulator failed on, if any.
    pub failures: Vec<(usize, String)>,
}

/// Draw uniform random nodal values in (0, 1) and normalize each ODF.
pub fn generate_initial_odfs(n: usize, seed: u64, mesh: &FundamentalMesh) -> Result<Vec<Odf>> {
    if n == 0 {
        return Err(Error::InvalidArgument("ODF count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let raw = Odf {
            values: (0..mesh.independent_count())
                .map(|_| rng.gen_range(0.0..1.0))
                .collect(),
        };
        out.push(normalize_odf(mesh, &raw)?);
    }
    Ok(out)
}

/// Label every initial ODF with the simulator under all 31 process modes.
///
/// Records are ordered by (sample index, mode id). Simulator failures skip
/// the record and are reported alongside the successes.
pub fn generate_dataset(
    mesh: &FundamentalMesh,
    odfs: &[Odf],
    cfg: &ProcessStepConfig,
    slips: &SlipSystemSet,
    seed: u64,
) -> Result<(Vec<DatasetRecord>, Vec<(usize, ProcessMode, Error)>)> {
    let provenance = Provenance {
        mesh_hash: mesh.content_hash(),
        config_hash: config_hash(cfg)?,
        seed,
    };
    let modes = ProcessMode::all();
    let jobs: Vec<(usize, ProcessMode)> = (0..odfs.len())
        .flat_map(|s| modes.iter().map(move |&m| (s, m)))
        .collect();

    let results: Vec<(usize, ProcessMode, Result<Odf>)> = jobs
        .par_iter()
        .map(|&(sample, mode)| {
            (
                sample,
                mode,
                apply_process(mesh, &odfs[sample], mode, cfg, slips),
            )
        })
        .collect();

    let mut records = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (sample, mode, outcome) in results {
        match outcome {
            Ok(output_odf) => records.push(DatasetRecord {
                sample,
                mode,
                input_odf: odfs[sample].clone(),
                output_odf,
                provenance: provenance.clone(),
            }),
            Err(e) => failures.push((sample, mode, e)),
        }
    }
    Ok((records, failures))
}

/// Split records by initial-ODF identity so that all 31 modes of one ODF land
/// on the same side; prevents the same input leaking across the split.
pub fn split(
    records: &[DatasetRecord],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<DatasetRecord>, Vec<DatasetRecord>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "split ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let samples: BTreeSet<usize> = records.iter().map(|r| r.sample).collect();
    let mut samples: Vec<usize> = samples.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    samples.shuffle(&mut rng);
    let n_train = (ratio * samples.len() as f64).round() as usize;
    let train_ids: BTreeSet<usize> = samples.iter().take(n_train).copied().collect();

    let mut train = Vec::new();
    let mut test = Vec::new();
    for r in records {
        if train_ids.contains(&r.sample) {
            train.push(r.clone());
        } else {
            test.push(r.clone());
        }
    }
    Ok((train, test))
}

/// Relative L2 error `||y - y*|| / ||y||`.
pub fn relative_l2(y_true: &Odf, y_pred: &Odf) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} vs {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut diff = 0.0;
    let mut norm = 0.0;
    for (a, b) in y_true.values.iter().zip(&y_pred.values) {
        diff += (a - b) * (a - b);
        norm += a * a;
    }
    Ok(diff.sqrt() / norm.sqrt())
}

/// Absolute gap between the stiffness objectives of two ODFs (GPa).
pub fn stiffness_error(
    mesh: &FundamentalMesh,
    c0: &StiffnessMatrix,
    y_true: &Odf,
    y_pred: &Odf,
    w: &ObjectiveWeights,
) -> Result<f64> {
    let f_true = objective(&homogenize(mesh, c0, y_true)?, w);
    let f_pred = objective(&homogenize(mesh, c0, y_pred)?, w);
    Ok((f_true - f_pred).abs())
}

/// Write records as JSON lines and the manifest beside them.
pub fn write_dataset(
    path: &Path,
    records: &[DatasetRecord],
    manifest: &DatasetManifest,
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    for r in records {
        let line = RecordLine {
            sample: r.sample,
            mode: r.mode,
            input: r.input_odf.values.clone(),
            output: r.output_odf.values.clone(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    std::fs::write(
        manifest_path(path),
        serde_json::to_vec_pretty(manifest)?,
    )?;
    Ok(())
}

/// Manifest path of a dataset file: `data.jsonl` -> `data.manifest.json`.
pub fn manifest_path(data_path: &Path) -> std::path::PathBuf {
    data_path.with_extension("manifest.json")
}

/// Read a JSON-lines dataset and its manifest.
pub fn read_dataset(path: &Path) -> Result<(Vec<DatasetRecord>, DatasetManifest)> {
    let manifest: DatasetManifest =
        serde_json::from_slice(&std::fs::read(manifest_path(path))?)?;
    let provenance = Provenance {
        mesh_hash: manifest.mesh_hash.clone(),
        config_hash: manifest.config_hash.clone(),
        seed: manifest.seed,
    };
    let file = std::fs::File::open(path)?;
    let mut records = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RecordLine = serde_json::from_str(&line)?;
        records.push(DatasetRecord {
            sample: parsed.sample,
            mode: parsed.mode,
            input_odf: Odf {
                values: parsed.input,
            },
            output_odf: Odf {
                values: parsed.output,
            },
            provenance: provenance.clone(),
        });
    }
    Ok((records, manifest))
}

/// Plain ODF file: `{"values": [...]}`.
pub fn write_odf(path: &Path, odf: &Odf) -> Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(odf)?)?;
    Ok(())
}

pub fn read_odf(path: &Path) -> Result<Odf> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

/// Trajectory file: `{"modes": [...], "odfs": [[...], ...], "objectives": [...]}`.
pub fn write_trajectory(path: &Path, trajectory: &Trajectory) -> Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(trajectory)?)?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;

    fn tiny_setup() -> (FundamentalMesh, SlipSystemSet, ProcessStepConfig) {
        (
            build_mesh(1).unwrap(),
            SlipSystemSet::fcc(),
            ProcessStepConfig::default(),
        )
    }

    #[test]
    fn initial_odfs_are_reproducible_and_normalized() {
        let (mesh, _, _) = tiny_setup();
        let a = generate_initial_odfs(3, 11, &mesh).unwrap();
        let b = generate_initial_odfs(3, 11, &mesh).unwrap();
        assert_eq!(a, b);
        for odf in &a {
            assert!((mesh.weighted_mass(odf) - 1.0).abs() < 1e-12);
            assert!(odf.values.iter().all(|&v| v >= 0.0));
        }
        let c = generate_initial_odfs(3, 12, &mesh).unwrap();
        assert_ne!(a, c);
    }

    /// Law-of-large-numbers oracle: the per-node sample mean approaches the
    /// true expectation of the normalized-uniform estimator within three
    /// combined standard errors.
    ///
    /// The expectation is computed by an independent Monte-Carlo oracle (its
    /// own RNG stream, no production code path); note `E[x_i / (q . x)]`
    /// deviates from the uniform density by a finite-node-count bias, so the
    /// uniform density itself is only an approximate anchor.
    #[test]
    fn initial_odf_mean_approaches_uniform_density() {
        let (mesh, _, _) = tiny_setup();
        let n = 10_000;
        let odfs = generate_initial_odfs(n, 5, &mesh).unwrap();
        let dim = mesh.independent_count();
        let q = mesh.node_weights();

        // Independent oracle for E[x_i / (q . x)].
        let oracle_n = 400_000;
        let mut rng = ChaCha8Rng::seed_from_u64(987_654);
        let mut oracle_sum = vec![0.0; dim];
        let mut oracle_sumsq = vec![0.0; dim];
        for _ in 0..oracle_n {
            let draws: Vec<f64> = (0..dim).map(|_| rand::Rng::gen_range(&mut rng, 0.0..1.0)).collect();
            let mass: f64 = q.iter().zip(&draws).map(|(qi, xi)| qi * xi).sum();
            for i in 0..dim {
                let a = draws[i] / mass;
                oracle_sum[i] += a;
                oracle_sumsq[i] += a * a;
            }
        }

        let total_q: f64 = q.iter().sum();
        let uniform = 1.0 / total_q;
        for node in 0..dim {
            let values: Vec<f64> = odfs.iter().map(|o| o.values[node]).collect();
            let mean: f64 = values.iter().sum::<f64>() / n as f64;
            let var: f64 =
                values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            let se = (var / n as f64).sqrt();

            let oracle_mean = oracle_sum[node] / oracle_n as f64;
            let oracle_var =
                oracle_sumsq[node] / oracle_n as f64 - oracle_mean * oracle_mean;
            let oracle_se = (oracle_var / oracle_n as f64).sqrt();
            let combined = (se * se + oracle_se * oracle_se).sqrt();
            assert!(
                (mean - oracle_mean).abs() <= 3.0 * combined,
                "node {node}: mean {mean} vs oracle {oracle_mean} (se {combined})"
            );
            // The bias-corrected expectation stays near the uniform density.
            assert!((oracle_mean - uniform).abs() / uniform < 0.05);
        }

        // The weighted mean is pinned to 1 exactly by per-sample
        // normalization.
        let weighted: f64 = (0..dim)
            .map(|i| q[i] * odfs.iter().map(|o| o.values[i]).sum::<f64>() / n as f64)
            .sum();
        assert!((weighted - 1.0).abs() < 1e-10);
    }

    #[test]
    fn dataset_counts_and_normalization() {
        let (mesh, slips, cfg) = tiny_setup();
        let odfs = generate_initial_odfs(10, 7, &mesh).unwrap();
        let (records, failures) = generate_dataset(&mesh, &odfs, &cfg, &slips, 7).unwrap();
        assert!(failures.is_empty());
        assert_eq!(records.len(), 310);
        for r in &records {
            assert!((mesh.weighted_mass(&r.output_odf) - 1.0).abs() < 1e-8);
        }
    }

    /// Determinism audit: re-simulating a sample of records reproduces the
    /// stored outputs bitwise.
    #[test]
    fn spot_resimulation_is_bitwise_identical() {
        let (mesh, slips, cfg) = tiny_setup();
        let odfs = generate_initial_odfs(4, 3, &mesh).unwrap();
        let (records, _) = generate_dataset(&mesh, &odfs, &cfg, &slips, 3).unwrap();
        for r in records.iter().step_by(37) {
            let again = apply_process(&mesh, &r.input_odf, r.mode, &cfg, &slips).unwrap();
            assert_eq!(again.values, r.output_odf.values);
        }
    }

    #[test]
    fn split_is_by_sample_and_leak_free() {
        let (mesh, slips, cfg) = tiny_setup();
        let odfs = generate_initial_odfs(100, 1, &mesh).unwrap();
        let (records, _) = generate_dataset(&mesh, &odfs, &cfg, &slips, 1).unwrap();
        let (train, test) = split(&records, 0.8, 9).unwrap();
        assert_eq!(train.len(), 80 * 31);
        assert_eq!(test.len(), 20 * 31);
        let train_samples: BTreeSet<usize> = train.iter().map(|r| r.sample).collect();
        let test_samples: BTreeSet<usize> = test.iter().map(|r| r.sample).collect();
        assert!(train_samples.is_disjoint(&test_samples));

        let (train2, test2) = split(&records, 0.8, 9).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
    }

    #[test]
    fn relative_l2_values() {
        let a = Odf {
            values: vec![1.0, 2.0, 2.0],
        };
        assert_eq!(relative_l2(&a, &a).unwrap(), 0.0);
        let b = Odf {
            values: a.values.iter().map(|v| v * 1.01).collect(),
        };
        assert!((relative_l2(&a, &b).unwrap() - 0.01).abs() < 1e-12);
    }

    #[test]
    fn stiffness_error_is_zero_for_identical_and_linear_in_perturbation() {
        let mesh = build_mesh(2).unwrap();
        let cu = StiffnessMatrix::copper();
        let w = ObjectiveWeights::default();
        let odf = mesh.uniform_odf();
        assert_eq!(
            stiffness_error(&mesh, &cu, &odf, &odf, &w).unwrap(),
            0.0
        );
        // Perturb along a fixed direction; the gap scales linearly.
        let perturbed = |eps: f64| {
            let mut v = odf.values.clone();
            v[0] += eps;
            v[1] -= eps * mesh.node_weights()[0] / mesh.node_weights()[1];
            Odf { values: v }
        };
        let e1 = stiffness_error(&mesh, &cu, &odf, &perturbed(1e-4), &w).unwrap();
        let e2 = stiffness_error(&mesh, &cu, &odf, &perturbed(2e-4), &w).unwrap();
        assert!((e2 / e1 - 2.0).abs() < 1e-6, "ratio {}", e2 / e1);
    }

    #[test]
    fn dataset_roundtrip_is_bit_exact() {
        let (mesh, slips, cfg) = tiny_setup();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        let odfs = generate_initial_odfs(2, 13, &mesh).unwrap();
        let (records, failures) = generate_dataset(&mesh, &odfs, &cfg, &slips, 13).unwrap();
        let manifest = DatasetManifest {
            odf_count: 2,
            record_count: records.len(),
            modes: 31,
            seed: 13,
            mesh_hash: mesh.content_hash(),
            config_hash: config_hash(&cfg).unwrap(),
            failures: failures
                .iter()
                .map(|(s, m, _)| (*s, m.mask()))
                .collect(),
        };
        write_dataset(&path, &records, &manifest).unwrap();
        let (back, back_manifest) = read_dataset(&path).unwrap();
        assert_eq!(records, back);
        assert_eq!(manifest, back_manifest);
    }

    #[test]
    fn odf_and_trajectory_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = build_mesh(1).unwrap();
        let odf = mesh.uniform_odf();
        let opath = dir.path().join("odf.json");
        write_odf(&opath, &odf).unwrap();
        assert_eq!(read_odf(&opath).unwrap(), odf);

        let traj = Trajectory {
            modes: vec![ProcessMode::from_mask("10000").unwrap()],
            odfs: vec![odf.clone(), odf],
            objectives: vec![1.0, 2.0],
        };
        let tpath = dir.path().join("traj.json");
        write_trajectory(&tpath, &traj).unwrap();
        assert_eq!(read_trajectory(&tpath).unwrap(), traj);
    }

    #[test]
    fn bad_split_ratio_rejected() {
        assert!(split(&[], 0.0, 1).is_err());
        assert!(split(&[], 1.0, 1).is_err());
    }
}
