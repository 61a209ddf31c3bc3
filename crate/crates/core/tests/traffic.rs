mod common;

use common::*;
use kernmodel::cache::{lru_oracle, predict_traffic, CacheOptions, OracleOptions};

fn mem_lines(name: &str, n: i64, m: i64) -> f64 {
    let p = predict_traffic(&kernel(name, &[("N", n), ("M", m)]), &machine("snb"), CacheOptions::default());
    p.levels.last().unwrap().cachelines()
}

// Below N = 16 the halo is a large share of every row and the unit of work
// no longer sits in the interior, so tiny grids are excluded.
#[test]
fn memory_traffic_grows_with_n() {
    for (name, m, ns) in [
        ("2d-5pt", 100, (16..=4000).step_by(37).collect::<Vec<i64>>()),
        ("long-range", 100, (50..=2000).step_by(13).collect()),
        ("uxx", 60, (16..=1200).step_by(11).collect()),
    ] {
        let mut prev = 0.0;
        for n in ns {
            let cur = mem_lines(name, n, m);
            assert!(cur >= prev, "{name}: N={n} {cur} < {prev}");
            prev = cur;
        }
    }
}

#[test]
fn misses_shrink_outward() {
    let snb = machine("snb");
    for name in KERNELS {
        for scale in [1, 4, 16] {
            let consts: Vec<(&str, i64)> = in_memory_constants(name)
                .into_iter()
                .map(|(c, v)| (c, (v / scale).max(24)))
                .collect();
            let p = predict_traffic(&kernel(name, &consts), &snb, CacheOptions::default());
            for w in p.levels.windows(2) {
                assert!(w[1].load_cachelines <= w[0].load_cachelines, "{name}");
                assert!(w[1].store_cachelines <= w[0].store_cachelines, "{name}");
            }
        }
    }
}

#[test]
fn oracle_agrees_on_fixed_configurations() {
    let small = machine("small");
    for (name, n, m) in [("2d-5pt", 200, 60), ("uxx", 32, 20), ("long-range", 40, 24), ("triad", 20_000, 0), ("kahan-ddot", 20_000, 0)] {
        let ir = kernel(name, &[("N", n), ("M", m)]);
        let a = predict_traffic(&ir, &small, CacheOptions::default());
        let o = lru_oracle(&ir, &small, OracleOptions::default()).unwrap();
        for (x, y) in a.levels.iter().zip(&o.levels) {
            assert!((x.load_cachelines - y.load_cachelines).abs() <= 1.0, "{name} {x:?} {y:?}");
            assert!((x.store_cachelines - y.store_cachelines).abs() <= 1.0, "{name} {x:?} {y:?}");
        }
    }
}
