use std::collections::BTreeMap;

use super::{
    affine, effective_capacities, elements_per_line, AffineKernel, AffineRef, CacheOptions,
    LayerConditionReport, LayerTag, LevelTraffic, TrafficProfile, TrafficWarning, UnitOfWork,
};
use crate::kernel::KernelIR;
use crate::machine::MachineDescription;

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub traffic: TrafficProfile,
    pub layer_conditions: LayerConditionReport,
}

pub fn predict_traffic(ir: &KernelIR, machine: &MachineDescription, opts: CacheOptions) -> TrafficProfile {
    analyze(ir, machine, opts).traffic
}

pub fn layer_conditions(
    ir: &KernelIR,
    machine: &MachineDescription,
    opts: CacheOptions,
) -> LayerConditionReport {
    analyze(ir, machine, opts).layer_conditions
}

fn floor_div(a: i64, b: i64) -> i64 {
    a.div_euclid(b)
}

fn ceil_div(a: i64, b: i64) -> i64 {
    -((-a).div_euclid(b))
}

/// Iteration space split into rows: all loops but the innermost select a
/// row, the innermost position runs along it.
struct Space {
    starts: Vec<i64>,
    steps: Vec<i64>,
    trips: Vec<i64>,
}

impl Space {
    fn new(ir: &KernelIR) -> Self {
        Space {
            starts: ir.loops.iter().map(|l| l.start).collect(),
            steps: ir.loops.iter().map(|l| l.step).collect(),
            trips: ir.loops.iter().map(|l| l.trip_count()).collect(),
        }
    }

    fn depth(&self) -> usize {
        self.trips.len()
    }

    fn row_len(&self) -> i64 {
        self.trips[self.depth() - 1]
    }

    /// Outer loop index values of row `r`.
    fn outer(&self, mut r: i64) -> Vec<i64> {
        let d = self.depth() - 1;
        let mut out = vec![0; d];
        for l in (0..d).rev() {
            out[l] = self.starts[l] + (r % self.trips[l]) * self.steps[l];
            r /= self.trips[l];
        }
        out
    }

    fn row_of(&self, iter: &[i64]) -> i64 {
        let mut r = 0;
        for l in 0..self.depth() - 1 {
            r = r * self.trips[l] + (iter[l] - self.starts[l]) / self.steps[l];
        }
        r
    }

    /// Linear iteration number of a vector of loop positions.
    fn lin(&self, pos: &[i64]) -> i64 {
        pos.iter().zip(&self.trips).fold(0, |acc, (p, t)| acc * t + p)
    }

    fn pos_of(&self, iter: &[i64]) -> i64 {
        let l = self.depth() - 1;
        (iter[l] - self.starts[l]) / self.steps[l]
    }
}

/// Per-row affine form of a reference: element `base + slope * pos`.
struct RowRef {
    array: usize,
    base: i64,
    slope: i64,
}

fn row_refs(k: &AffineKernel, space: &Space, outer: &[i64]) -> Vec<RowRef> {
    let inner = space.depth() - 1;
    k.refs
        .iter()
        .map(|r| {
            let mut base = r.constant + r.coefs[inner] * space.starts[inner];
            for (c, v) in r.coefs.iter().zip(outer) {
                base += c * v;
            }
            RowRef {
                array: r.array,
                base,
                slope: r.coefs[inner] * space.steps[inner],
            }
        })
        .collect()
}

/// Disjoint, non-adjacent line intervals per array.
#[derive(Default, Clone)]
struct LineSet {
    maps: Vec<BTreeMap<i64, i64>>,
    lines: u64,
}

impl LineSet {
    fn new(arrays: usize) -> Self {
        LineSet {
            maps: vec![BTreeMap::new(); arrays],
            lines: 0,
        }
    }

    /// Lines of `[lo, hi]` not yet in the set.
    fn count_new(&self, a: usize, lo: i64, hi: i64) -> u64 {
        let map = &self.maps[a];
        let mut covered = 0;
        let first = map.range(..=lo).next_back().map(|(&s, _)| s).unwrap_or(lo);
        for (&s, &e) in map.range(first..=hi) {
            let (s, e) = (s.max(lo), e.min(hi));
            if s <= e {
                covered += (e - s + 1) as u64;
            }
        }
        (hi - lo + 1) as u64 - covered
    }

    fn insert(&mut self, a: usize, mut lo: i64, mut hi: i64) {
        let added = self.count_new(a, lo, hi);
        let map = &mut self.maps[a];
        if let Some((&s, &e)) = map.range(..lo).next_back() {
            if e + 1 >= lo {
                lo = s;
                hi = hi.max(e);
            }
        }
        let absorbed: Vec<i64> = map.range(lo..=hi.saturating_add(1)).map(|(&s, _)| s).collect();
        for s in absorbed {
            let e = map.remove(&s).unwrap();
            hi = hi.max(e);
        }
        map.insert(lo, hi);
        self.lines += added;
    }
}

/// Merged line intervals touched by positions `[p0, p1)` of one row.
fn row_intervals(
    refs: &[RowRef],
    origins: &[i64],
    epl: i64,
    p0: i64,
    p1: i64,
) -> Vec<(usize, i64, i64)> {
    let mut ivs = Vec::new();
    if p0 >= p1 {
        return ivs;
    }
    for r in refs {
        let line = |p: i64| floor_div(r.base + r.slope * p - origins[r.array], epl);
        if r.slope.abs() <= epl {
            let (a, b) = (line(p0), line(p1 - 1));
            ivs.push((r.array, a.min(b), a.max(b)));
        } else {
            for p in p0..p1 {
                let l = line(p);
                ivs.push((r.array, l, l));
            }
        }
    }
    ivs.sort_unstable();
    let mut merged: Vec<(usize, i64, i64)> = Vec::with_capacity(ivs.len());
    for (a, lo, hi) in ivs {
        match merged.last_mut() {
            Some((ma, _, mh)) if *ma == a && lo <= *mh + 1 => *mh = (*mh).max(hi),
            _ => merged.push((a, lo, hi)),
        }
    }
    merged
}

fn count_new_all(set: &LineSet, ivs: &[(usize, i64, i64)]) -> u64 {
    ivs.iter().map(|&(a, lo, hi)| set.count_new(a, lo, hi)).sum()
}

/// Loop positions of the last iteration before `center` at which `r` reads or
/// writes an element in `[lo, hi]`. Depth-first over the loops, newest values
/// first, pruning value ranges whose element interval misses `[lo, hi]`.
fn latest_touch(r: &AffineRef, space: &Space, center: &[i64], lo: i64, hi: i64) -> Option<Vec<i64>> {
    let depth = space.depth();
    let slopes: Vec<i64> = (0..depth).map(|l| r.coefs[l] * space.steps[l]).collect();
    let base = r.constant
        + (0..depth)
            .map(|l| r.coefs[l] * space.starts[l])
            .sum::<i64>();
    // Element range reachable by loops l.. with every position free.
    let mut reach = vec![(0i64, 0i64); depth + 1];
    for l in (0..depth).rev() {
        let span = slopes[l] * (space.trips[l] - 1);
        reach[l] = (reach[l + 1].0 + span.min(0), reach[l + 1].1 + span.max(0));
    }
    let mut pos = vec![0i64; depth];
    fn go(
        l: usize,
        tight: bool,
        acc: i64,
        ctx: (&[i64], &[i64], &[(i64, i64)], &[i64], i64, i64),
        pos: &mut [i64],
    ) -> bool {
        let (slopes, trips, reach, center, lo, hi) = ctx;
        let depth = slopes.len();
        if l + 1 == depth {
            let limit = if tight { center[l] - 1 } else { trips[l] - 1 };
            if limit < 0 {
                return false;
            }
            let s = slopes[l];
            let (p_lo, p_hi) = match s.signum() {
                0 if (lo..=hi).contains(&acc) => (0, limit),
                0 => return false,
                1 => (ceil_div(lo - acc, s), floor_div(hi - acc, s)),
                _ => (ceil_div(acc - hi, -s), floor_div(acc - lo, -s)),
            };
            let p_hi = p_hi.min(limit);
            if p_lo.max(0) <= p_hi {
                pos[l] = p_hi;
                return true;
            }
            return false;
        }
        let top = if tight { center[l] } else { trips[l] - 1 };
        for v in (0..=top).rev() {
            let a = acc + slopes[l] * v;
            if a + reach[l + 1].1 < lo || a + reach[l + 1].0 > hi {
                continue;
            }
            if go(l + 1, tight && v == center[l], a, ctx, pos) {
                pos[l] = v;
                return true;
            }
        }
        false
    }
    go(0, true, base, (&slopes, &space.trips, &reach, center, lo, hi), &mut pos).then_some(pos)
}

/// A unit line's most recent use before the unit.
#[derive(Debug, Clone, Copy)]
struct Reuse {
    distance: i64,
    /// Outermost loop in which the two iterations differ.
    class: usize,
}

struct UnitLine {
    array: usize,
    line: i64,
    written: bool,
    reuse: Option<Reuse>,
}

pub fn analyze(ir: &KernelIR, machine: &MachineDescription, opts: CacheOptions) -> Analysis {
    let epl = elements_per_line(ir, machine);
    let k = affine(ir, epl);
    let space = Space::new(ir);
    let depth = space.depth();
    let inner = depth - 1;
    let row_len = space.row_len();
    let center_row = space.row_of(&k.center);
    let center_pos = space.pos_of(&k.center);
    let t0 = center_row * row_len + center_pos;
    let capacities = effective_capacities(machine, opts);
    let mut warnings = Vec::new();

    for r in &k.refs {
        let stride = r.coefs[inner] * space.steps[inner];
        let name = &k.array_names[r.array];
        if stride.abs() > 1
            && !warnings.iter().any(|w| {
                matches!(w, TrafficWarning::NonContiguousStride { array, .. } if array == name)
            })
        {
            warnings.push(TrafficWarning::NonContiguousStride {
                array: name.clone(),
                stride_elements: stride,
            });
        }
    }

    // Lines touched by the unit of work, in first-touch order.
    let unit_iters = epl.min(row_len - center_pos).max(1);
    let mut unit: Vec<UnitLine> = Vec::new();
    let mut iter = k.center.clone();
    for u in 0..unit_iters {
        iter[inner] = k.center[inner] + u * space.steps[inner];
        for r in &k.refs {
            let line = floor_div(r.flat(&iter) - k.origins[r.array], epl);
            match unit.iter_mut().find(|x| x.array == r.array && x.line == line) {
                Some(x) => x.written |= r.is_write,
                None => unit.push(UnitLine {
                    array: r.array,
                    line,
                    written: r.is_write,
                    reuse: None,
                }),
            }
        }
    }

    // Largest number of preceding iterations whose footprint fits each level.
    let mut fits: Vec<i64> = Vec::with_capacity(capacities.len());
    let mut set = LineSet::new(k.array_names.len());
    let mut accumulated = 0i64;
    let mut row = center_row;
    let mut limit = center_pos;
    'rows: while row >= 0 {
        let refs = row_refs(&k, &space, &space.outer(row));
        let full = row_intervals(&refs, &k.origins, epl, 0, limit);
        let new = count_new_all(&set, &full);
        while fits.len() < capacities.len() && set.lines + new > capacities[fits.len()].1 {
            let cap = capacities[fits.len()].1;
            let (mut lo, mut hi) = (0, limit);
            while lo < hi {
                let q = (lo + hi + 1) / 2;
                let ivs = row_intervals(&refs, &k.origins, epl, limit - q, limit);
                if set.lines + count_new_all(&set, &ivs) <= cap {
                    lo = q;
                } else {
                    hi = q - 1;
                }
            }
            fits.push(accumulated + lo);
            if fits.len() == capacities.len() {
                break 'rows;
            }
        }
        for &(a, lo, hi) in &full {
            set.insert(a, lo, hi);
        }
        accumulated += limit;
        row -= 1;
        limit = row_len;
    }
    for (name, _) in &capacities[fits.len()..] {
        warnings.push(TrafficWarning::UnresolvableFootprint { level: name.clone() });
    }
    while fits.len() < capacities.len() {
        fits.push(i64::MAX);
    }

    // Most recent earlier use of every unit line.
    let center_at: Vec<i64> = (0..depth)
        .map(|l| (k.center[l] - space.starts[l]) / space.steps[l])
        .collect();
    for x in unit.iter_mut() {
        let lo_el = k.origins[x.array] + x.line * epl;
        let hi_el = lo_el + epl - 1;
        let latest = k
            .refs
            .iter()
            .filter(|r| r.array == x.array)
            .filter_map(|r| latest_touch(r, &space, &center_at, lo_el, hi_el))
            .max_by_key(|pos| space.lin(pos));
        if let Some(pos) = latest {
            x.reuse = Some(Reuse {
                distance: t0 - space.lin(&pos),
                class: (0..depth).find(|&l| pos[l] != center_at[l]).unwrap_or(inner),
            });
        }
    }

    let line_bytes = f64::from(machine.cacheline_bytes);
    let mut levels = Vec::new();
    let mut tags = Vec::new();
    for ((name, _), &fit) in capacities.iter().zip(&fits) {
        let hit = |x: &UnitLine| x.reuse.is_some_and(|r| r.distance <= fit);
        let loads = unit.iter().filter(|x| !hit(x)).count() as f64;
        let stores = unit.iter().filter(|x| x.written && !hit(x)).count() as f64;
        levels.push(LevelTraffic {
            level: name.clone(),
            load_cachelines: loads,
            store_cachelines: stores,
            total_bytes: (loads + stores) * line_bytes,
        });
        let tag = (0..depth)
            .find(|&p| {
                unit.iter()
                    .filter_map(|x| x.reuse)
                    .filter(|r| r.class >= p)
                    .all(|r| r.distance <= fit)
            })
            .map_or(LayerTag::None, |p| LayerTag::Dim((depth - p) as u32));
        tags.push((name.clone(), tag));
    }

    Analysis {
        traffic: TrafficProfile {
            levels,
            unit_of_work: UnitOfWork {
                iterations: unit_iters as u32,
                cachelines: (unit_iters * ir.element_size() as i64) as f64 / line_bytes,
            },
            warnings,
        },
        layer_conditions: LayerConditionReport { levels: tags },
    }
}
