//! Serial against hypercube timings, per-worker table sizes and message
//! counts across k, plus the k* advisor.
//!
//! ```text
//! cargo run --release --example scaling_report -- 14 2 par
//! ```

use edgewise::cli::{k_star, run_bench, write_bench_csv, BackendArg, BenchArgs, ResourceArgs};
use edgewise::scoring::PriorSpec;

fn main() -> Result<(), edgewise::Error> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n: usize = args.first().and_then(|a| a.parse().ok()).unwrap_or(12);
    let d: usize = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(2);
    let backend = match args.get(2).map(String::as_str) {
        Some("par") => BackendArg::Par,
        _ => BackendArg::Sim,
    };
    let rows = run_bench(&BenchArgs {
        n_list: vec![n],
        d_list: vec![d],
        k_list: (0..=4.min(n)).collect(),
        samples: 300,
        seed: 1,
        backend,
        score: PriorSpec::default(),
        out: None,
        resources: ResourceArgs { mem_limit: None },
    })?;
    write_bench_csv(&rows, &mut std::io::stdout())?;
    for w in rows.windows(2) {
        println!(
            "k {} -> {}: per-worker tables shrink {:.3}x",
            w[0].k,
            w[1].k,
            w[0].peak_bytes_per_worker as f64 / w[1].peak_bytes_per_worker as f64
        );
    }
    for (n, d) in [(n, d), (25, 4), (23, 4)] {
        println!("k*({n}, {d}) = {:.4}", k_star(n, d));
    }
    Ok(())
}
