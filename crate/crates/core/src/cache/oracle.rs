use super::{
    affine, effective_capacities, elements_per_line, CacheError, CacheOptions, LevelTraffic,
    TrafficProfile, UnitOfWork,
};
use crate::kernel::KernelIR;
use crate::machine::MachineDescription;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub cache: CacheOptions,
    /// Fraction of every loop range excluded at each end.
    pub margin: f64,
    pub max_accesses: u64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            cache: CacheOptions::default(),
            margin: 0.1,
            max_accesses: 10_000_000,
        }
    }
}

/// Fenwick tree over access timestamps.
struct Fenwick(Vec<i32>);

impl Fenwick {
    fn add(&mut self, mut i: usize, v: i32) {
        i += 1;
        while i < self.0.len() {
            self.0[i] += v;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over `[0, i)`.
    fn prefix(&self, mut i: usize) -> i64 {
        let mut s = 0i64;
        while i > 0 {
            s += i64::from(self.0[i]);
            i &= i - 1;
        }
        s
    }
}

const NEVER: u32 = u32::MAX;

/// Simulate the kernel through an inclusive, fully associative LRU,
/// write-allocate, write-back hierarchy and return the average traffic per
/// unit of work over the interior of the iteration space.
pub fn lru_oracle(
    ir: &KernelIR,
    machine: &MachineDescription,
    opts: OracleOptions,
) -> Result<TrafficProfile, CacheError> {
    let epl = elements_per_line(ir, machine);
    let k = affine(ir, epl);
    let depth = ir.loops.len();
    let trips: Vec<i64> = ir.loops.iter().map(|l| l.trip_count()).collect();
    let iterations: i64 = trips.iter().product();
    let accesses = iterations as u64 * k.refs.len() as u64;
    if accesses > opts.max_accesses {
        return Err(CacheError::TooLarge {
            accesses,
            limit: opts.max_accesses,
        });
    }
    // Interior box: a margin is cut from both ends of every loop. The
    // innermost window is a whole number of cache lines long so that every
    // stream crosses the same number of line boundaries inside it.
    let mut interior: Vec<(i64, i64)> = trips
        .iter()
        .map(|&t| {
            let lo = (t as f64 * opts.margin).ceil() as i64;
            let hi = (t as f64 * (1.0 - opts.margin)).floor() as i64;
            (lo, hi.max(lo))
        })
        .collect();
    if let Some((lo, hi)) = interior.last_mut() {
        *hi = *lo + (*hi - *lo) / epl * epl;
    }
    let interior_iters: i64 = interior.iter().map(|&(lo, hi)| hi - lo).product();
    if interior_iters <= 0 {
        return Err(CacheError::EmptyInterior);
    }
    let mut interior_flags = Vec::with_capacity(iterations as usize);

    // Dense line ids: each array occupies its own range, anchored like the
    // analytic predictor at the array's center element.
    let mut line_base = Vec::with_capacity(k.array_names.len());
    let mut first_line = Vec::with_capacity(k.array_names.len());
    let mut total_lines = 0i64;
    for a in 0..k.array_names.len() {
        let lo = (0 - k.origins[a]).div_euclid(epl);
        let hi = (k.array_len[a] - 1 - k.origins[a]).div_euclid(epl);
        first_line.push(lo);
        line_base.push(total_lines);
        total_lines += hi - lo + 1;
    }

    let caps: Vec<(String, u64)> = effective_capacities(machine, opts.cache);
    let levels = caps.len();
    let mut last = vec![NEVER; total_lines as usize];
    // Iteration of the first write of the current dirty episode, per level.
    let mut dirty = vec![NEVER; total_lines as usize * levels];
    let mut fw = Fenwick(vec![0; accesses as usize + 1]);
    let mut loads = vec![0u64; levels];
    let mut stores = vec![0u64; levels];

    let mut iter: Vec<i64> = ir.loops.iter().map(|l| l.start).collect();
    let mut pos = vec![0i64; depth];
    let mut time = 0usize;
    for it in 0..iterations as u32 {
        let inside = pos
            .iter()
            .zip(&interior)
            .all(|(&p, &(lo, hi))| p >= lo && p < hi);
        interior_flags.push(inside);
        for r in &k.refs {
            let a = r.array;
            let line = (r.flat(&iter) - k.origins[a]).div_euclid(epl) - first_line[a] + line_base[a];
            let line = line as usize;
            let prev = last[line];
            let distance = if prev == NEVER {
                u64::MAX
            } else {
                (fw.prefix(time) - fw.prefix(prev as usize + 1)) as u64
            };
            for (lvl, (_, cap)) in caps.iter().enumerate() {
                if distance >= *cap {
                    if inside {
                        loads[lvl] += 1;
                    }
                    let d = &mut dirty[line * levels + lvl];
                    if *d != NEVER {
                        if interior_flags[*d as usize] {
                            stores[lvl] += 1;
                        }
                        *d = NEVER;
                    }
                }
                if r.is_write {
                    let d = &mut dirty[line * levels + lvl];
                    if *d == NEVER {
                        *d = it;
                    }
                }
            }
            if prev != NEVER {
                fw.add(prev as usize, -1);
            }
            fw.add(time, 1);
            last[line] = time as u32;
            time += 1;
        }
        for l in (0..depth).rev() {
            pos[l] += 1;
            iter[l] += ir.loops[l].step;
            if pos[l] < trips[l] {
                break;
            }
            pos[l] = 0;
            iter[l] = ir.loops[l].start;
        }
    }

    // Lines still dirty at the end are written back eventually.
    for (i, &d) in dirty.iter().enumerate() {
        if d != NEVER && interior_flags[d as usize] {
            stores[i % levels] += 1;
        }
    }
    let units = interior_iters as f64 / epl as f64;
    let line_bytes = f64::from(machine.cacheline_bytes);
    Ok(TrafficProfile {
        levels: caps
            .iter()
            .enumerate()
            .map(|(lvl, (name, _))| {
                let l = loads[lvl] as f64 / units;
                let s = stores[lvl] as f64 / units;
                LevelTraffic {
                    level: name.clone(),
                    load_cachelines: l,
                    store_cachelines: s,
                    total_bytes: (l + s) * line_bytes,
                }
            })
            .collect(),
        unit_of_work: UnitOfWork {
            iterations: epl as u32,
            cachelines: (epl * ir.element_size() as i64) as f64 / line_bytes,
        },
        warnings: Vec::new(),
    })
}
