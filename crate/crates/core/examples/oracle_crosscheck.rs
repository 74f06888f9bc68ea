//! Hypercube posteriors against brute-force enumeration of all n! orders.
//!
//! ```text
//! cargo run --example oracle_crosscheck -- 6 2
//! ```

use edgewise::oracle::edge_matrix_by_order_enumeration;
use edgewise::posterior::edge_posteriors;
use edgewise::runtime::{Backend, HypercubeFabric};
use edgewise::scoring::PriorSpec;
use edgewise::synth::{generate, SynthSpec};

fn main() -> Result<(), edgewise::Error> {
    let arg = |i: usize, default: usize| std::env::args().nth(i).and_then(|a| a.parse().ok()).unwrap_or(default);
    let (n, d) = (arg(1, 6).min(8), arg(2, 2));
    let data = generate(&SynthSpec {
        vars: n,
        samples: 200,
        seed: 3,
        ..SynthSpec::default()
    })?
    .data;
    let prior = PriorSpec::k2();
    let oracle = edge_matrix_by_order_enumeration(&data, &prior, d)?;
    println!("oracle log P(D) = {:.10}", oracle.log_evidence);
    for k in 0..=3.min(n) {
        let mut fabric = HypercubeFabric::spawn(k, Backend::Simulated)?;
        let m = edge_posteriors(&mut fabric, &data, &prior, d)?;
        let mut worst = 0.0f64;
        for u in 0..n {
            for v in (0..n).filter(|&v| v != u) {
                let want = oracle.get(u, v);
                worst = worst.max((m.get(u, v) - want).abs() / want);
            }
        }
        println!("k = {k}: log P(D) = {:.10}, max relative error {worst:.2e}", m.log_evidence());
    }
    Ok(())
}
