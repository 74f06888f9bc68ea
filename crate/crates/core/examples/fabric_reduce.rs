//! The hypercube fabric on its own: neighbor messaging, the log-sum-exp
//! reduction, the cost model, and what a deadlock report looks like.
//!
//! ```text
//! cargo run --example fabric_reduce
//! ```

use edgewise::runtime::{reduce_logsumexp, Backend, CostModel, FabricError, HypercubeFabric, Stage, Tag};

fn main() -> Result<(), FabricError> {
    let k = 3;
    let cost = CostModel {
        latency: 5.0,
        per_byte: 0.01,
    };
    let mut fabric = HypercubeFabric::spawn(k, Backend::Simulated)?.with_cost_model(cost);

    // Each endpoint greets its neighbor across every dimension.
    let heard = fabric.run(vec![(); 1 << k], |mut ep, ()| async move {
        for j in 0..ep.dim() {
            ep.send(j, Tag::new(Stage::User, 0, j as u64), vec![ep.id() as f64])?;
        }
        let mut from = Vec::new();
        for j in 0..ep.dim() {
            from.push(ep.recv(j, Tag::new(Stage::User, 0, j as u64)).await?.payload[0] as u64);
        }
        Ok::<_, FabricError>(from)
    })?;
    for (id, from) in heard.iter().enumerate() {
        println!("endpoint {id:03b} heard from {:?}", from.iter().map(|f| format!("{f:03b}")).collect::<Vec<_>>());
    }

    fabric.reset_counters();
    let contributions: Vec<Vec<f64>> = (0..1 << k).map(|r| vec![-(r as f64), 0.0]).collect();
    let total = reduce_logsumexp(&mut fabric, contributions)?;
    println!("\nreduced onto {:03b}: {total:?}", fabric.top());
    let clock = fabric.counters().iter().map(|c| c.modeled_time).fold(0.0, f64::max);
    println!("modeled time {clock} = k * (latency + 16 bytes * per_byte)");

    let err = fabric
        .run(vec![(); 1 << k], |mut ep, ()| async move {
            if ep.id() == 0 {
                ep.recv(2, Tag::new(Stage::Backward, 1, 9)).await?;
            }
            Ok::<_, FabricError>(())
        })
        .unwrap_err();
    println!("\n{err}");
    Ok(())
}
