mod common;

use common::close;
use edgewise::lattice::{
    compute_backward, compute_forward, distribute_a, serial_forward_backward, LatticeSchedule, SubsetTable,
};
use edgewise::oracle::posterior_by_order_enumeration;
use edgewise::posterior::compute_a;
use edgewise::runtime::{Backend, HypercubeFabric};
use edgewise::scoring::{Feature, PriorSpec};
use edgewise::varset::VarSet;
use rand::Rng;

fn ln_factorial(x: usize) -> f64 {
    (1..=x).map(|t| (t as f64).ln()).sum()
}

#[test]
fn forward_sum_is_the_evidence() {
    let mut rng = common::rng(20);
    for n in 3..=7 {
        let data = common::synthetic(n, 80, 2, 100 + n as u64);
        let prior = common::random_prior(&mut rng);
        let d = rng.gen_range(1..n.min(4));
        let k = rng.gen_range(0..=n.min(3));
        let mut fabric = HypercubeFabric::spawn(k, Backend::Simulated).unwrap();
        let a = compute_a(&mut fabric, &data, &prior, d).unwrap();
        let f = SubsetTable::assemble(&compute_forward(&mut fabric, n, &a).unwrap());
        let r = SubsetTable::assemble(&compute_backward(&mut fabric, n, &a).unwrap());
        let full = (1 << n) - 1;
        let oracle = posterior_by_order_enumeration(&data, &prior, d, Feature::Trivial).unwrap();
        assert!(close(f[full], oracle.log_evidence, 1e-9), "n={n}: {} vs {}", f[full], oracle.log_evidence);
        assert!(close(f[full], r[full], 1e-12));
        assert!(f[full].exp() > 0.0);
        assert_eq!(fabric.locality_violations(), 0);
    }
}

#[test]
fn parallel_sweeps_match_serial_bitwise() {
    let mut rng = common::rng(21);
    for n in [1, 2, 3, 6, 9, 12] {
        let a: Vec<Vec<f64>> = (0..n).map(|_| common::random_table(&mut rng, n)).collect();
        let (f_serial, r_serial) = serial_forward_backward(n, &a).unwrap();
        for k in 0..=n.min(4) {
            let blocks = distribute_a(n, k, &a);
            let mut fabric = HypercubeFabric::spawn(k, Backend::Simulated).unwrap();
            let f = compute_forward(&mut fabric, n, &blocks).unwrap();
            let r = compute_backward(&mut fabric, n, &blocks).unwrap();
            assert_eq!(SubsetTable::assemble(&f), f_serial, "F n={n} k={k}");
            assert_eq!(SubsetTable::assemble(&r), r_serial, "R n={n} k={k}");
            let top = fabric.top();
            assert_eq!(r[top as usize].get(VarSet::EMPTY), Some(0.0));
            assert_eq!(fabric.locality_violations(), 0);
        }
    }
}

#[test]
fn unit_scores_count_orderings() {
    let n = 7;
    let a = vec![vec![0.0; 1 << n]; n];
    let (f, r) = serial_forward_backward(n, &a).unwrap();
    let blocks = distribute_a(n, 2, &a);
    let mut fabric = HypercubeFabric::spawn(2, Backend::Parallel).unwrap();
    let r_par = SubsetTable::assemble(&compute_backward(&mut fabric, n, &blocks).unwrap());
    for s in 0..1usize << n {
        let want = ln_factorial(s.count_ones() as usize);
        assert!((f[s] - want).abs() < 1e-12);
        assert!((r[s] - want).abs() < 1e-12);
        assert_eq!(r_par[s], r[s]);
    }
}

#[test]
fn forward_volume_is_linear_in_n_per_block() {
    let mut rng = common::rng(22);
    for (n, k) in [(10, 2), (14, 3)] {
        let a: Vec<Vec<f64>> = (0..n).map(|_| common::random_table(&mut rng, n)).collect();
        let mut fabric = HypercubeFabric::spawn(k, Backend::Simulated).unwrap();
        compute_forward(&mut fabric, n, &distribute_a(n, k, &a)).unwrap();
        for c in fabric.counters() {
            let values = c.sent_bytes / 8;
            assert!(values <= (n as u64) << (n - k), "n={n} k={k}: {values}");
        }
    }
}

#[test]
fn schedule_activates_prefixes_by_size_then_value() {
    for (n, k) in [(5, 0), (8, 3), (12, 4)] {
        let schedule = LatticeSchedule::new(n, k);
        let prefixes = schedule.prefixes();
        assert_eq!(prefixes.len(), 1 << (n - k));
        for pair in prefixes.windows(2) {
            assert!((pair[0].count_ones(), pair[0]) < (pair[1].count_ones(), pair[1]));
        }
        assert_eq!(schedule.depth(), (1 << (n - k)) + k);
        assert!(schedule.simulate_steps() <= schedule.depth());
    }
}

#[test]
fn mirrored_backward_with_real_scores_is_local_and_consistent() {
    let data = common::synthetic(6, 100, 2, 9);
    let prior = PriorSpec::bdeu(2.0);
    let mut reference = None;
    for k in 0..=4 {
        let mut fabric = HypercubeFabric::spawn(k, Backend::Simulated).unwrap();
        let a = compute_a(&mut fabric, &data, &prior, 3).unwrap();
        let r = SubsetTable::assemble(&compute_backward(&mut fabric, 6, &a).unwrap());
        match &reference {
            None => reference = Some(r),
            Some(want) => assert_eq!(&r, want, "k={k}"),
        }
    }
}
