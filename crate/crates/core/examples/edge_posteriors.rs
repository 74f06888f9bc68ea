//! All edge posteriors for a CSV file (or seeded synthetic data), printed
//! as the strongest edges first.
//!
//! ```text
//! cargo run --release --example edge_posteriors -- survey.csv 3 4
//! ```

use edgewise::prelude::*;
use edgewise::synth::{generate, SynthSpec};

fn main() -> Result<(), Error> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (data, truth) = match args.first() {
        Some(path) => (load_csv(path)?, None),
        None => {
            let net = generate(&SynthSpec {
                vars: 8,
                samples: 1000,
                ..SynthSpec::default()
            })?;
            (net.data.clone(), Some(net))
        }
    };
    let d: usize = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(2);
    let workers: usize = args.get(2).and_then(|a| a.parse().ok()).unwrap_or(4);
    let k = workers.trailing_zeros() as usize;

    let mut fabric = HypercubeFabric::spawn(k, Backend::Simulated)?;
    let post = edge_posteriors(&mut fabric, &data, &PriorSpec::default(), d)?;
    println!("log P(D) = {:.6}, self-test deviation {:.1e}", post.log_evidence(), post.self_test_deviation());

    let n = data.vars();
    let mut edges: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|u| (0..n).filter(move |&v| v != u).map(move |v| (u, v)))
        .map(|(u, v)| (u, v, post.get(u, v)))
        .collect();
    edges.sort_by(|a, b| b.2.total_cmp(&a.2));
    for (u, v, p) in edges.iter().take(12) {
        let mark = match &truth {
            Some(net) if net.has_edge(*u, *v) => "  (true edge)",
            Some(net) if net.has_edge(*v, *u) => "  (reversed)",
            _ => "",
        };
        println!("{:>6} -> {:<6} {p:.4}{mark}", data.names()[*u], data.names()[*v]);
    }
    Ok(())
}
