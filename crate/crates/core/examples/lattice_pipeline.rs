//! The edge-posterior computation one stage at a time: local scores and
//! their subset sums, forward and backward sums over the lattice, the R
//! exchange, and the superset sums for one target node.
//!
//! ```text
//! cargo run --example lattice_pipeline
//! ```

use edgewise::lattice::{compute_backward, compute_forward, LatticeSchedule, SubsetTable};
use edgewise::logspace::log_sum_exp;
use edgewise::posterior::{compute_a, compute_gamma, exchange_r_for_v};
use edgewise::runtime::{Backend, HypercubeFabric};
use edgewise::scoring::PriorSpec;
use edgewise::synth::{generate, SynthSpec};
use edgewise::varset::VarSet;

fn main() -> Result<(), edgewise::Error> {
    let (n, k, d, v) = (6, 2, 2, 0);
    let data = generate(&SynthSpec {
        vars: n,
        samples: 250,
        ..SynthSpec::default()
    })?
    .data;
    let prior = PriorSpec::default();
    let mut fabric = HypercubeFabric::spawn(k, Backend::Simulated)?;

    let schedule = LatticeSchedule::new(n, k);
    println!("{} blocks per worker, pipeline depth {}", schedule.prefixes().len(), schedule.depth());

    let a = compute_a(&mut fabric, &data, &prior, d)?;
    let f = compute_forward(&mut fabric, n, &a)?;
    let r = compute_backward(&mut fabric, n, &a)?;
    let full = VarSet::full(n);
    let f_top = f.iter().find_map(|t| t.get(full)).expect("some worker holds V");
    let r_top = r.iter().find_map(|t| t.get(full)).expect("some worker holds V");
    println!("log F(V) = {f_top:.6}, log R(V) = {r_top:.6}");

    let qfr = exchange_r_for_v(&mut fabric, v, &prior, &f, &r)?;
    let gamma = SubsetTable::assemble(&compute_gamma(&mut fabric, v, qfr, d)?);
    println!("Γ_{v} over parent sets of size <= {d}:");
    for g in edgewise::varset::subsets_upto(full.without(v), d).into_iter().take(8) {
        println!("  {:<8} {:>12.4}", g.bit_string(n), gamma[g.bits() as usize]);
    }

    let sent: Vec<u64> = fabric.counters().iter().map(|c| c.sent_msgs).collect();
    println!("messages per worker {sent:?}, non-neighbor {}", fabric.locality_violations());
    println!("log-sum of Γ_{v}: {:.4}", log_sum_exp(&gamma));
    Ok(())
}
