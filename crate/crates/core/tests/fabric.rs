mod common;

use edgewise::logspace::{log_add, log_sum_exp, LOG_ZERO};
use edgewise::runtime::{reduce_logsumexp, Backend, FabricError, HypercubeFabric, Stage, Tag};
use rand::Rng;

/// The fold order of the hypercube reduce, replayed on a flat array.
fn replay_fold(k: usize, values: &[Vec<f64>]) -> Vec<f64> {
    let mut acc = values.to_vec();
    for j in 0..k {
        for r in 0..acc.len() {
            let low = (1 << j) - 1;
            if r & low == low && r >> j & 1 == 1 {
                let other = acc[r ^ 1 << j].clone();
                for (a, b) in acc[r].iter_mut().zip(&other) {
                    *a = log_add(*a, *b);
                }
            }
        }
    }
    acc[(1 << k) - 1].clone()
}

#[test]
fn reduce_equals_replayed_fold_bitwise() {
    let mut rng = common::rng(50);
    let k = 4;
    let values: Vec<Vec<f64>> = (0..1 << k).map(|_| common::random_table(&mut rng, 3)).collect();
    let want = replay_fold(k, &values);
    for backend in [Backend::Simulated, Backend::Parallel] {
        let mut fabric = HypercubeFabric::spawn(k, backend).unwrap();
        let got = reduce_logsumexp(&mut fabric, values.clone()).unwrap();
        assert_eq!(got, want);
        assert_eq!(fabric.locality_violations(), 0);
    }
    for (x, column) in want.iter().zip(0..) {
        let flat: Vec<f64> = values.iter().map(|v| v[column]).collect();
        assert!(common::close(*x, log_sum_exp(&flat), 1e-12));
    }
}

#[test]
fn reduce_identities() {
    for k in 0..=5 {
        let mut fabric = HypercubeFabric::spawn(k, Backend::Simulated).unwrap();
        let got = reduce_logsumexp(&mut fabric, vec![vec![0.0]; 1 << k]).unwrap();
        assert!((got[0] - k as f64 * 2f64.ln()).abs() < 1e-12);
        let mut one = vec![vec![LOG_ZERO]; 1 << k];
        one[(1 << k) / 3] = vec![-3.25];
        assert_eq!(reduce_logsumexp(&mut fabric, one).unwrap(), vec![-3.25]);
    }
}

#[test]
fn ring_of_messages_is_deterministic() {
    let run = |backend| {
        let mut fabric = HypercubeFabric::spawn(3, backend).unwrap();
        let out = fabric
            .run(vec![(); 8], |mut ep, ()| async move {
                let mut seen = Vec::new();
                for round in 0..5u64 {
                    for j in 0..ep.dim() {
                        let tag = Tag::new(Stage::User, j as u32, round);
                        ep.send(j, tag, vec![(ep.id() * 10 + round) as f64])?;
                    }
                    for j in 0..ep.dim() {
                        let tag = Tag::new(Stage::User, j as u32, round);
                        seen.push(ep.recv(j, tag).await?.payload[0]);
                    }
                }
                Ok::<_, FabricError>(seen)
            })
            .unwrap();
        (out, fabric.counters().to_vec())
    };
    let (a, ca) = run(Backend::Simulated);
    let (b, cb) = run(Backend::Simulated);
    let (c, _) = run(Backend::Parallel);
    assert_eq!(a, b);
    assert_eq!(ca, cb);
    assert_eq!(a, c);
    assert_eq!(a[0][..3], [10.0, 20.0, 40.0]);
}

#[test]
fn unmatched_receive_reports_endpoint_and_tag() {
    let mut fabric = HypercubeFabric::spawn(2, Backend::Simulated).unwrap();
    let err = fabric
        .run(vec![(); 4], |mut ep, ()| async move {
            if ep.id() == 2 {
                ep.recv(1, Tag::new(Stage::Forward, 7, 3)).await?;
            }
            Ok::<_, FabricError>(())
        })
        .unwrap_err();
    let text = err.to_string();
    assert!(matches!(err, FabricError::Deadlock(_)));
    assert!(text.contains("endpoint 10") || text.contains("endpoint 2"), "{text}");
    assert!(text.contains("Forward"), "{text}");
}

#[test]
fn non_neighbor_sends_are_refused_and_audited() {
    let mut rng = common::rng(51);
    let k = 4;
    let mut fabric = HypercubeFabric::spawn(k, Backend::Simulated).unwrap();
    let dests: Vec<u64> = (0..1 << k).map(|_| rng.gen_range(0..1 << k)).collect();
    let results = fabric
        .run(dests, |mut ep, dest| async move { Ok::<_, FabricError>(ep.send_to(dest, Tag::new(Stage::User, 0, 0), vec![]).is_ok()) })
        .unwrap();
    let refused = results.iter().filter(|ok| !**ok).count() as u64;
    assert!(refused > 0);
    // Refused attempts are the only violations; nothing non-adjacent is delivered.
    assert_eq!(fabric.locality_violations(), refused);
    for c in fabric.counters() {
        assert_eq!(c.sent_msgs, c.sent_per_dim.iter().sum::<u64>());
    }
}
