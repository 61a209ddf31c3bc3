mod common;

use common::*;
use kernmodel::cache::{self, CacheOptions};
use kernmodel::incore::{timings_from_peak, timings_from_ports};
use kernmodel::kernel::{parse_kernel, KernelSource};
use kernmodel::model::{
    compose_ecm, compose_roofline, convert_units, cycles_from_unit, transfer_cycles, EcmContributions,
    ModelOptions, TransferSource, Unit,
};
use proptest::prelude::*;
use rand::{rngs::StdRng, SeedableRng};

fn names() -> Vec<String> {
    ["L1", "L2", "L3", "MEM"].map(String::from).to_vec()
}

fn contributions() -> impl Strategy<Value = (f64, f64, [f64; 3])> {
    (0.0..200.0f64, 0.0..100.0f64, [0.0..50.0f64, 0.0..50.0f64, 0.0..50.0f64])
}

proptest! {
    #[test]
    fn ecm_dominates_every_contribution((ol, nol, data) in contributions()) {
        let p = compose_ecm(&EcmContributions::new(ol, nol, &data), &names(), 8);
        let t = p.in_memory();
        for c in [ol, nol, data[0], data[1], data[2]] {
            prop_assert!(t >= c);
        }
        let serial = nol + data.iter().sum::<f64>();
        prop_assert_eq!(t == ol, ol >= serial);
    }

    #[test]
    fn residences_are_monotone((ol, nol, data) in contributions(), level in 0usize..3, extra in 0.0..30.0f64) {
        let p = compose_ecm(&EcmContributions::new(ol, nol, &data), &names(), 8);
        for w in p.residences.windows(2) {
            prop_assert!(w[0].1 <= w[1].1);
        }
        let mut more = data;
        more[level] += extra;
        let q = compose_ecm(&EcmContributions::new(ol, nol, &more), &names(), 8);
        prop_assert!(q.in_memory() >= p.in_memory());
    }

    #[test]
    fn multicore_never_beats_memory((ol, nol, data) in contributions()) {
        let p = compose_ecm(&EcmContributions::new(ol, nol, &data), &names(), 16);
        for (n, cy) in &p.multicore {
            prop_assert!(*cy >= data[2]);
            prop_assert!(*cy <= p.in_memory() / f64::from(*n) + data[2]);
        }
    }

    #[test]
    fn unit_round_trip(cy in 1e-3..1e4f64, k in 0usize..5, unit in prop_oneof![Just(Unit::ItPerS), Just(Unit::FlopPerS)]) {
        let name = KERNELS[k];
        let ir = kernel(name, &in_memory_constants(name));
        let snb = machine("snb");
        let v = convert_units(cy, &ir, &snb, unit).unwrap();
        let back = cycles_from_unit(v, &ir, &snb, unit).unwrap();
        prop_assert!(((back - cy) / cy).abs() <= 1e-9);
    }

    #[test]
    fn parser_round_trip(seed in any::<u64>(), n in 8i64..200, m in 8i64..50) {
        let text = random_kernel_source(&mut StdRng::seed_from_u64(seed));
        let ir = parse_kernel(&KernelSource::new(text.clone()).with_constant("N", n).with_constant("M", m)).unwrap();
        let printed = ir.to_source();
        let again = parse_kernel(&KernelSource::new(printed.clone())).unwrap();
        prop_assert_eq!(&again, &ir, "{}\n---\n{}", text, printed);
        prop_assert_eq!(again.to_source(), printed);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bandwidth_scaling_is_exact(k in 0usize..5, arch in prop_oneof![Just("snb"), Just("hsw")], c in 0.25..4.0f64) {
        let name = KERNELS[k];
        let ir = kernel(name, &in_memory_constants(name));
        let m = machine(arch);
        let scaled = m.with_scaled_bandwidths(c);
        let traffic = cache::predict_traffic(&ir, &m, CacheOptions::default());
        let a = transfer_cycles(&traffic, &m, ModelOptions::default()).unwrap();
        let b = transfer_cycles(&traffic, &scaled, ModelOptions::default()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            match x.source {
                Some(TransferSource::Bandwidth { .. }) => {
                    prop_assert!((y.cycles * c / x.cycles - 1.0).abs() < 1e-12);
                }
                _ => prop_assert_eq!(x.cycles, y.cycles),
            }
        }
        let timing = timings_from_peak(&ir, &m).unwrap();
        let ra = compose_roofline(&timing, &traffic, &m, &ir, 1, None).unwrap();
        let rb = compose_roofline(&timing, &traffic, &scaled, &ir, 1, None).unwrap();
        prop_assert_eq!(ra.rows[0].cycles, rb.rows[0].cycles);
        for (x, y) in ra.rows.iter().zip(&rb.rows).skip(1) {
            if x.cycles > 0.0 {
                prop_assert!((y.cycles * c / x.cycles - 1.0).abs() < 1e-12);
            }
            prop_assert_eq!(&x.kernel, &y.kernel);
        }
        let argmax = |r: &kernmodel::model::Roofline| {
            (1..r.rows.len()).max_by(|&i, &j| r.rows[i].cycles.partial_cmp(&r.rows[j].cycles).unwrap().then(j.cmp(&i)))
        };
        prop_assert_eq!(argmax(&ra), argmax(&rb));
    }

    #[test]
    fn roofline_dominant_is_the_maximum(k in 0usize..5, arch in prop_oneof![Just("snb"), Just("hsw")], threads in 1u32..=4, use_ports: bool) {
        let name = KERNELS[k];
        let ir = kernel(name, &in_memory_constants(name));
        let m = machine(arch);
        let traffic = cache::predict_traffic(&ir, &m, CacheOptions::default());
        let timing = if use_ports {
            timings_from_ports(&ports(arch, name), &m, &ir).unwrap()
        } else {
            timings_from_peak(&ir, &m).unwrap()
        };
        let r = compose_roofline(&timing, &traffic, &m, &ir, threads, None).unwrap();
        let max = r.rows.iter().map(|x| x.cycles).fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(max.to_bits(), r.prediction().to_bits());
    }
}
