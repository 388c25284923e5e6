use heccsim_core::benchmarks::Scheme;
use heccsim_core::orchestrator::{run, RunOptions};
use heccsim_core::scenario::Scenario;
use heccsim_core::ScenarioConfig;

fn main() {
    for scheme in [Scheme::Proposed, Scheme::RandomUserAssociation, Scheme::FixedOffload { offload_rate: 0.3 }] {
        let sc = Scenario::build(ScenarioConfig { rng_seed: 1, ..Default::default() }).unwrap();
        let t0 = std::time::Instant::now();
        let trace = run(&sc, &RunOptions { scheme, frames: Some(10), slots_per_frame: Some(3), ..Default::default() }).unwrap();
        println!("{}: {:?} slots={} triggers={} mean_ssp_iters={:.1}",
            scheme.code(), t0.elapsed(), trace.slots.len(), trace.trigger_count,
            trace.slots.iter().map(|s| s.ssp_iterations).sum::<usize>() as f64 / trace.slots.len() as f64);
    }
}
