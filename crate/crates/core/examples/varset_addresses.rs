//! Where each subset of a 3-variable lattice lives on a 2^k-worker
//! hypercube, in the forward layout and in its mirror.
//!
//! ```text
//! cargo run --example varset_addresses -- 3
//! ```

use edgewise::varset::{subsets_upto, Layout, VarSet};

fn main() {
    let n = 3;
    let k: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(2).min(n);
    let forward = Layout::forward(n, k);
    let mirrored = Layout::mirrored(n, k);
    println!("n = {n}, k = {k}: {} workers x {} sets", forward.workers(), forward.block_len());
    println!("{:<6} {:>16} {:>16}", "S", "forward (r, b)", "mirrored (r, b)");
    for s in subsets_upto(VarSet::full(n), n) {
        let f = forward.split(s);
        let m = mirrored.split(s);
        assert_eq!(forward.compose(f.worker, f.block), s);
        assert_eq!(mirrored.compose(m.worker, m.block), s);
        println!(
            "{:<6} {:>10}, {:<5} {:>10}, {:<5}",
            s.bit_string(n),
            format!("{:0w$b}", f.worker, w = k.max(1)),
            f.block,
            format!("{:0w$b}", m.worker, w = k.max(1)),
            m.block
        );
    }

    // Adding an element below k moves a set across exactly one hypercube edge.
    for j in 0..k {
        let s = VarSet::EMPTY;
        let a = forward.split(s).worker;
        let b = forward.split(s.with(j)).worker;
        println!("{{}} -> {{{j}}}: worker {a:b} -> {b:b}, one bit apart: {}", (a ^ b).count_ones() == 1);
    }
}
