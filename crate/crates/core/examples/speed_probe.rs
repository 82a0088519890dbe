//! Diagnostic: 31-mode expansion wall time, simulator (parallel over modes)
//! vs surrogate networks.

use std::time::Instant;

use texture_forge_core::evolution::ProcessStepConfig;
use texture_forge_core::mesh::build_mesh;
use texture_forge_core::plasticity::{ProcessMode, SlipSystemSet};
use texture_forge_core::search::{SimulatorOracle, StepOracle, SurrogateOracle};
use texture_forge_core::surrogate::MlpModel;

fn main() {
    let mesh = build_mesh(3).unwrap();
    let slips = SlipSystemSet::fcc();
    let q = mesh.node_weights_vector();
    let n = mesh.independent_count();
    let models: Vec<MlpModel> = ProcessMode::all()
        .into_iter()
        .map(|mode| MlpModel::new(mode, n, 760, n, q.clone(), mode.id() as u64).unwrap())
        .collect();
    let surrogate = SurrogateOracle::new(&models).unwrap();
    let simulator = SimulatorOracle {
        mesh: &mesh,
        slips: &slips,
        cfg: ProcessStepConfig::default(),
    };
    let odf = mesh.uniform_odf();

    // Warm up both paths.
    surrogate.advance_all(&odf).unwrap();
    simulator.advance_all(&odf).unwrap();

    let reps = 20;
    let t0 = Instant::now();
    for _ in 0..reps {
        surrogate.advance_all(&odf).unwrap();
    }
    let t_surrogate = t0.elapsed().as_secs_f64() / reps as f64;

    let reps_sim = 5;
    let t0 = Instant::now();
    for _ in 0..reps_sim {
        simulator.advance_all(&odf).unwrap();
    }
    let t_simulator = t0.elapsed().as_secs_f64() / reps_sim as f64;

    println!("surrogate 31-mode expansion: {:.3} ms", t_surrogate * 1e3);
    println!("simulator 31-mode expansion: {:.3} ms", t_simulator * 1e3);
    println!("speedup: {:.1}x", t_simulator / t_surrogate);
}
