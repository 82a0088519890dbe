//! Diagnostic: desk-scale training quality for a few modes.

use std::time::Instant;

use texture_forge_core::dataset::{generate_dataset, generate_initial_odfs, relative_l2, split};
use texture_forge_core::evolution::ProcessStepConfig;
use texture_forge_core::homogenization::{ObjectiveWeights, StiffnessMatrix};
use texture_forge_core::mesh::build_mesh;
use texture_forge_core::plasticity::{ProcessMode, SlipSystemSet};
use texture_forge_core::surrogate::{mode_batches, train, MlpModel, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n_odfs: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(100);
    let epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(150);

    let mesh = build_mesh(3).unwrap();
    let slips = SlipSystemSet::fcc();
    let cfg = ProcessStepConfig::default();
    let cu = StiffnessMatrix::copper();
    let w = ObjectiveWeights::default();
    let _ = (&cu, &w);

    let t0 = Instant::now();
    let odfs = generate_initial_odfs(n_odfs, 11, &mesh).unwrap();
    let (records, failures) = generate_dataset(&mesh, &odfs, &cfg, &slips, 11).unwrap();
    println!(
        "dataset: {} records, {} failures, {:.1} s",
        records.len(),
        failures.len(),
        t0.elapsed().as_secs_f64()
    );
    let (train_recs, test_recs) = split(&records, 0.8, 7).unwrap();

    let q = mesh.node_weights_vector();
    let n = mesh.independent_count();
    for mask in ["10000", "01000", "11111"] {
        let mode = ProcessMode::from_mask(mask).unwrap();
        let (tx, tt) = mode_batches(&train_recs, mode).unwrap();
        let (vx, vt) = mode_batches(&test_recs, mode).unwrap();
        let mut model = MlpModel::new(mode, n, 760, n, q.clone(), 1000 + mode.id() as u64).unwrap();
        let tcfg = TrainConfig {
            epochs,
            seed: 17,
            ..Default::default()
        };
        let t0 = Instant::now();
        let report = train(&mut model, &tx, &tt, &vx, &vt, &q, &tcfg).unwrap();
        let train_time = t0.elapsed().as_secs_f64();

        // Held-out relative L2.
        let mut rel = 0.0;
        let mut count = 0;
        for r in test_recs.iter().filter(|r| r.mode == mode) {
            let pred = model.forward(&r.input_odf).unwrap();
            rel += relative_l2(&r.output_odf, &pred).unwrap();
            count += 1;
        }
        rel /= count as f64;
        println!(
            "mode {mask}: {:.0} s, wmse {:.3e} -> {:.3e} (test {:.3e}), held-out rel L2 {:.4}%",
            train_time,
            report.train_wmse.first().unwrap(),
            report.train_wmse.last().unwrap(),
            report.test_wmse.last().unwrap(),
            rel * 100.0
        );
    }
}
