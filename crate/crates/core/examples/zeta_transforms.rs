//! Truncated subset and superset sums, serially and on a hypercube, with
//! the per-worker work and traffic counters.
//!
//! ```text
//! cargo run --release --example zeta_transforms -- 14 3 2
//! ```

use edgewise::runtime::{Backend, HypercubeFabric};
use edgewise::varset::Layout;
use edgewise::zeta::{downward_zeta_parallel, downward_zeta_serial, gather, scatter, upward_zeta_parallel, upward_zeta_serial};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), edgewise::FabricError> {
    let arg = |i: usize, default: usize| std::env::args().nth(i).and_then(|a| a.parse().ok()).unwrap_or(default);
    let (n, d, k) = (arg(1, 12), arg(2, 3), arg(3, 2));
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let s: Vec<f64> = (0..1usize << n).map(|_| rng.gen_range(-4.0..1.0)).collect();
    let layout = Layout::forward(n, k);
    let mut fabric = HypercubeFabric::spawn(k, Backend::Simulated)?;

    let up_serial = upward_zeta_serial(n, d, &s);
    let (up, up_stats) = upward_zeta_parallel(&mut fabric, n, d, scatter(layout, &s))?;
    println!("upward:   hypercube equals serial bitwise: {}", gather(layout, &up) == up_serial);

    let down_serial = downward_zeta_serial(n, d, &s);
    let (down, down_stats) = downward_zeta_parallel(&mut fabric, n, d, scatter(layout, &s))?;
    println!("downward: hypercube equals serial bitwise: {}", gather(layout, &down) == down_serial);

    println!("\nn = {n}, d = {d}, k = {k}");
    println!("{:>8} {:>12} {:>12} {:>12} {:>12}", "worker", "up ops", "up sent", "down ops", "down sent");
    for (r, (u, w)) in up_stats.iter().zip(&down_stats).enumerate() {
        println!(
            "{r:>8b} {:>12} {:>12} {:>12} {:>12}",
            u.ops,
            u.values_sent(),
            w.ops,
            w.values_sent()
        );
    }
    println!("non-neighbor messages: {}", fabric.locality_violations());
    Ok(())
}
