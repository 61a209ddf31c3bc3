use std::fmt::Write;

use super::{Body, CompareReport, Document, Loaded, SweepResult};
use crate::model::{AnalysisMode, ModelReport, Roofline, Saturation, Unit};

/// One decimal, without a negative zero.
pub(crate) fn fmt1(x: f64) -> String {
    let s = format!("{x:.1}");
    if s == "-0.0" {
        "0.0".into()
    } else {
        s
    }
}

/// `2.35 GFLOP/s`, `225.00 MIt/s`, `36.7 cy/CL`.
pub(crate) fn fmt_value(value: f64, unit: Unit) -> String {
    if unit == Unit::CyPerCl {
        return format!("{} {unit}", fmt1(value));
    }
    let (scale, prefix) = [(1e12, "T"), (1e9, "G"), (1e6, "M"), (1e3, "k")]
        .into_iter()
        .find(|(s, _)| value.abs() >= *s)
        .unwrap_or((1.0, ""));
    format!("{:.2} {prefix}{unit}", value / scale)
}

fn fmt_bandwidth(bytes_per_s: f64) -> String {
    format!("{:.1} GB/s", bytes_per_s / 1e9)
}

pub(crate) fn render(doc: &Document, loaded: &Loaded) -> String {
    let mut out = String::new();
    let r = &doc.request;
    // Sweep output stays a plain table with `#` comment lines.
    let lead = if matches!(doc.body, Body::Sweep(_)) { "# " } else { "" };
    let consts: String = r.constants.iter().map(|(k, v)| format!(" -D {k} {v}")).collect();
    let _ = writeln!(out, "{lead}kernmodel -p {} -m {} {}{consts}", r.mode, r.machine, r.kernel);
    let _ = writeln!(out, "{lead}machine {} at {:.2} GHz", r.arch, loaded.machine.clock_hz / 1e9);
    if lead.is_empty() {
        out.push('\n');
    }
    match &doc.body {
        Body::Model(m) => model(&mut out, m),
        Body::Sweep(s) => sweep(&mut out, s),
        Body::Compare(c) => compare(&mut out, c),
    }
    out
}

fn saturation_line(out: &mut String, s: &Saturation) {
    match s {
        Saturation::At { ratio, cores } => {
            let _ = writeln!(out, "saturating at {cores} cores (ratio {ratio:.2})");
        }
        Saturation::CacheResident => out.push_str("no saturation (cache-resident)\n"),
    }
}

fn model(out: &mut String, m: &ModelReport) {
    let _ = writeln!(out, "layer conditions: {}", m.layer_conditions.label());
    for w in &m.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out.push('\n');
    match m.mode {
        AnalysisMode::Ecm => {
            let ecm = m.ecm.as_ref().expect("ECM section");
            let c = &ecm.contributions;
            let data: Vec<String> = c.data().iter().map(|&x| fmt1(x)).collect();
            let _ = writeln!(out, "{{ {} \u{2016} {} | {} }} cy/CL", fmt1(c.t_ol), fmt1(c.t_nol), data.join(" | "));
            let pred: Vec<String> = ecm.prediction.residences.iter().map(|r| fmt1(r.1)).collect();
            let _ = writeln!(out, "{{ {} }} cy/CL", pred.join(" \u{2309} "));
            saturation_line(out, &ecm.prediction.saturation);
        }
        AnalysisMode::EcmData => {
            let ecm = m.ecm.as_ref().expect("ECM section");
            let data: Vec<String> = ecm.contributions.data().iter().map(|&x| fmt1(x)).collect();
            let _ = writeln!(out, "{{ {} }} cy/CL", data.join(" | "));
        }
        AnalysisMode::EcmCore => {
            let t = m.incore.expect("in-core timing");
            let _ = writeln!(out, "T_OL = {} cy/CL", fmt1(t.t_ol_cy_per_cl));
            let _ = writeln!(out, "T_nOL = {} cy/CL", fmt1(t.t_nol_cy_per_cl));
        }
        AnalysisMode::Roofline | AnalysisMode::RooflinePorts => {
            roofline(out, m.roofline.as_ref().expect("Roofline table"));
        }
    }
    let p = &m.performance;
    let _ = writeln!(out, "\nperformance with {} core(s): {}", m.cores, fmt_value(p.value, p.unit));
    if p.unit != Unit::CyPerCl {
        let _ = writeln!(out, "({})", fmt_value(p.cy_per_cl, Unit::CyPerCl));
    }
}

fn roofline(out: &mut String, t: &Roofline) {
    out.push_str("Bottlenecks:\n");
    let _ = writeln!(
        out,
        "{:>7} | {:>12} | {:>13} | {:>11} | bw kernel",
        "level", "ar.int.", "perfor.", "bandw."
    );
    out.push_str("--------+--------------+---------------+-------------+----------\n");
    for r in &t.rows {
        let ai = r.arithmetic_intensity.map(|a| format!("{a:.2} FLOP/B")).unwrap_or_default();
        let bw = r.bandwidth_bytes_per_s.map(fmt_bandwidth).unwrap_or_default();
        let line = format!(
            "{:>7} | {:>12} | {:>13} | {:>11} | {}",
            r.level,
            ai,
            format!("{} cy/CL", fmt1(r.cycles)),
            bw,
            r.kernel.as_deref().unwrap_or("")
        );
        let _ = writeln!(out, "{}", line.trim_end());
    }
    out.push('\n');
    let b = t.bottleneck();
    if t.dominant == 0 {
        let _ = writeln!(out, "CPU bound with {} core(s)", t.threads);
        let _ = writeln!(out, "{} cy/CL due to CPU bottleneck", fmt1(b.cycles));
    } else {
        let _ = writeln!(out, "Cache or mem bound with {} core(s)", t.threads);
        let _ = writeln!(
            out,
            "{} cy/CL due to {} transfer bottleneck (bw from {} benchmark)",
            fmt1(b.cycles),
            b.level,
            b.kernel.as_deref().unwrap_or("-")
        );
        if let Some(ai) = b.arithmetic_intensity {
            let _ = writeln!(out, "Arithmetic Intensity: {ai:.2} FLOP/B");
        }
    }
    if let Some(s) = &t.saturation {
        saturation_line(out, s);
    }
}

fn sweep(out: &mut String, s: &SweepResult) {
    let _ = writeln!(out, "# {} distinct layer-condition regimes", s.distinct_regimes);
    for r in &s.regimes {
        let _ = writeln!(out, "# {}={}..{}: {}", s.variable, r.first_n, r.last_n, r.label);
    }
    out.push_str(&s.table());
}

fn compare(out: &mut String, c: &CompareReport) {
    let _ = writeln!(
        out,
        "{:<12} {:<6} {:<14} {:>10} {:>10} {:>10}",
        "kernel", "arch", "mode", "predicted", "measured", "deviation"
    );
    for r in &c.rows {
        let _ = writeln!(
            out,
            "{:<12} {:<6} {:<14} {:>10} {:>10} {:>9.1}%{}",
            r.kernel,
            r.arch,
            r.mode,
            fmt1(r.predicted_cy_per_cl),
            fmt1(r.measured_cy_per_cl),
            r.deviation * 100.0,
            if r.flagged { "  FLAG" } else { "" }
        );
    }
}
