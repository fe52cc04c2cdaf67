mod common;

use gibbslab::graph::{degree_stats, sample_er, sample_interpolated, Density, InterpolationPoint};
use gibbslab::harness::binomial_chi_square;
use gibbslab::SeedStream;
use proptest::prelude::*;

fn density(s: &str) -> Density {
    s.parse().unwrap()
}

#[test]
fn er_edge_marginals_are_uniform_over_tuples() {
    let c = density("1");
    let mut counts = [0usize; 9];
    let mut total = 0usize;
    for draw in 0..100_000u64 {
        let g = sample_er(3, &c, 2, SeedStream::new(31).child(draw)).unwrap();
        for e in g.edges() {
            counts[e[0] * 3 + e[1]] += 1;
            total += 1;
        }
    }
    let p = 1.0 / 9.0;
    let se = (p * (1.0 - p) / total as f64).sqrt();
    for (tuple, &n) in counts.iter().enumerate() {
        let freq = n as f64 / total as f64;
        assert!((freq - p).abs() <= 4.0 * se, "tuple {tuple}: {freq} vs {p} (se {se})");
    }
}

#[test]
fn disjoint_union_block_counts_are_binomial() {
    let (n, n1) = (10, 4);
    let c = density("1.5");
    let m = c.edge_count(n);
    let point = InterpolationPoint::at_step(m, n1, n - n1, m).unwrap();
    let mut histogram = vec![0usize; m + 1];
    for i in 0..5000u64 {
        let g = sample_interpolated(n, &c, 2, point, SeedStream::new(32).child(i)).unwrap();
        histogram[g.edges().filter(|e| e[0] < n1).count()] += 1;
    }
    let (_, _, p) = binomial_chi_square(&histogram, m, n1 as f64 / n as f64).unwrap();
    assert!(p >= 1e-3, "chi-square p-value {p}");
}

#[test]
fn disjoint_union_has_no_cross_block_edges() {
    let c = density("2");
    let m = c.edge_count(4);
    let point = InterpolationPoint::at_step(m, 2, 2, m).unwrap();
    for i in 0..10_000u64 {
        let g = sample_interpolated(4, &c, 2, point, SeedStream::new(33).child(i)).unwrap();
        for e in g.edges() {
            assert_eq!(e[0] < 2, e[1] < 2, "cross-block edge {e:?}");
        }
    }
}

#[test]
fn degree_stats_hand_counts() {
    let g = common::graph(3, 2, vec![vec![0, 1], vec![1, 2]]);
    let d = degree_stats(&g);
    assert_eq!(d.node_degrees, vec![1, 2, 1]);
    assert_eq!(d.edge_neighborhoods, vec![2, 2]);
    assert_eq!(d.max_degree, 2);

    let loop_edge = common::graph(2, 2, vec![vec![0, 0]]);
    let d = degree_stats(&loop_edge);
    assert_eq!(d.node_degrees, vec![2, 0]);
    assert_eq!(d.incident_edges, vec![1, 0]);
    assert_eq!(d.edge_neighborhoods, vec![1]);

    let empty = common::graph(4, 3, vec![]);
    let d = degree_stats(&empty);
    assert_eq!(d.node_degrees, vec![0; 4]);
    assert_eq!(d.max_degree, 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn global_endpoint_reproduces_er(n in 2usize..12, n1_frac in 0.0f64..1.0, k in 2usize..4, c10 in 1u32..30, seed in any::<u64>()) {
        let c: Density = format!("{}.{}", c10 / 10, c10 % 10).parse().unwrap();
        let n1 = 1 + ((n - 1) as f64 * n1_frac) as usize;
        prop_assume!(n1 < n);
        let m = c.edge_count(n);
        let point = InterpolationPoint::at_step(0, n1, n - n1, m).unwrap();
        prop_assert_eq!(point.global_edges, m);
        let er = sample_er(n, &c, k, SeedStream::new(seed)).unwrap();
        let interp = sample_interpolated(n, &c, k, point, SeedStream::new(seed)).unwrap();
        prop_assert_eq!(er, interp);
    }

    #[test]
    fn same_seed_same_graph(n in 1usize..30, k in 2usize..5, seed in any::<u64>()) {
        let c = density("1.3");
        prop_assert_eq!(
            sample_er(n, &c, k, SeedStream::new(seed)).unwrap(),
            sample_er(n, &c, k, SeedStream::new(seed)).unwrap()
        );
    }

    #[test]
    fn degrees_sum_to_edge_slots(n in 1usize..20, k in 2usize..5, seed in any::<u64>()) {
        let g = sample_er(n, &density("2"), k, SeedStream::new(seed)).unwrap();
        let d = degree_stats(&g);
        prop_assert_eq!(d.node_degrees.iter().sum::<usize>(), k * g.n_edges());
        prop_assert!(d.incident_edges.iter().zip(&d.node_degrees).all(|(a, b)| a <= b));
        prop_assert!(d.edge_neighborhoods.iter().all(|&s| s >= 1 && s <= g.n_edges()));
    }
}
