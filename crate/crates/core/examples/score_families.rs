//! Local scores of every admissible parent set of one node, under K2 and
//! BDeu, for synthetic data or a CSV file.
//!
//! ```text
//! cargo run --example score_families
//! cargo run --example score_families -- data.csv 2
//! ```

use edgewise::scoring::{build_family_scores, load_csv, FamilyScorer, Feature, PriorSpec};
use edgewise::synth::{generate, SynthSpec};

fn main() -> Result<(), edgewise::Error> {
    let mut args = std::env::args().skip(1);
    let data = match args.next() {
        Some(path) => load_csv(path)?,
        None => {
            let net = generate(&SynthSpec {
                vars: 5,
                samples: 300,
                ..SynthSpec::default()
            })?;
            for (v, parents) in net.parents.iter().enumerate() {
                println!("true parents of X{v}: {:?}", parents.iter().collect::<Vec<_>>());
            }
            net.data
        }
    };
    let node: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);
    println!("{} samples, {} variables, arities {:?}", data.samples(), data.vars(), data.arities());

    for prior in [PriorSpec::k2(), PriorSpec::bdeu(1.0)] {
        let scorer = FamilyScorer::new(&data, prior)?;
        let mut table = build_family_scores(&scorer, node, 2, Feature::Trivial)?;
        table.entries.sort_by(|a, b| b.1.total_cmp(&a.1));
        println!("\n{:?}: best parent sets of {}", prior.score, data.names()[node]);
        for (g, score) in table.entries.iter().take(5) {
            let names: Vec<&str> = g.iter().map(|p| data.names()[p].as_str()).collect();
            println!("  {:<20} {score:>12.4}", format!("{{{}}}", names.join(", ")));
        }
    }
    Ok(())
}
